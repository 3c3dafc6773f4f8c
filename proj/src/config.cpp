#include "bfwi/config.hpp"

#include <fstream>

#include "bfwi/types.hpp"

namespace bfwi {

using nlohmann::json;

namespace {

json line_json(const LineSpec& l) {
  return {{"x_frac", l.x_frac}, {"z_lo_frac", l.z_lo_frac}, {"z_hi_frac", l.z_hi_frac}, {"count", l.count}};
}

LineSpec line_from(const json& j, LineSpec l) {
  l.x_frac = j.value("x_frac", l.x_frac);
  l.z_lo_frac = j.value("z_lo_frac", l.z_lo_frac);
  l.z_hi_frac = j.value("z_hi_frac", l.z_hi_frac);
  l.count = j.value("count", l.count);
  return l;
}

void check_line(const LineSpec& l, const char* what) {
  auto inside = [](double f) { return f > 0.0 && f < 1.0; };
  if (l.count < 1) throw InvalidArgument(std::string(what) + ": count must be >= 1");
  if (!inside(l.x_frac) || !inside(l.z_lo_frac) || !inside(l.z_hi_frac) || l.z_lo_frac > l.z_hi_frac)
    throw InvalidArgument(std::string(what) + ": fractions must lie in (0, 1) with z_lo <= z_hi");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model_file.empty() && (n1 < 2 || n2 < 2)) throw InvalidArgument("config: grid too small");
  if (slices < 1) throw InvalidArgument("config: slices must be >= 1");
  if (slices == 1 && !strategies.empty() && !test_slices.empty())
    throw InvalidArgument("config: with one slice the testing slice would also be the training slice");
  check_line(sources, "config.sources");
  check_line(sensors, "config.sensors");
  if (refine < 1) throw InvalidArgument("config: refine must be >= 1");
  if (groups_hz.empty()) throw InvalidArgument("config: no frequency groups");
  for (const auto& g : groups_hz) {
    if (g.empty()) throw InvalidArgument("config: empty frequency group");
    for (double f : g)
      if (!(f > 0.0)) throw InvalidArgument("config: frequencies must be positive");
  }
  if (!(alpha0 > 0.0) || !(mu > 0.0)) throw InvalidArgument("config: alpha0 and mu must be positive");
  if (!(alpha_lo > 0.0) || !(alpha_lo <= alpha0) || !(alpha0 <= alpha_hi))
    throw InvalidArgument("config: need 0 < alpha_lo <= alpha0 <= alpha_hi");
  if (!(bench_alpha0 > 0.0)) throw InvalidArgument("config: bench.alpha0 must be positive");
  for (int s : test_slices)
    if (s < 1 || s > slices) throw InvalidArgument("config: test slice " + std::to_string(s) + " out of range");
  for (const auto& s : strategies)
    if (s != "none" && s != "alpha" && s != "sensors" && s != "both")
      throw InvalidArgument("config: unknown strategy '" + s + "'");
  if (bench_slice < 1 || bench_slice > slices) throw InvalidArgument("config: bench_slice out of range");
}

json to_json(const ExperimentConfig& c) {
  return {{"model",
           {{"file", c.model_file},
            {"n1", c.n1},
            {"n2", c.n2},
            {"width_x", c.width_x},
            {"width_z", c.width_z},
            {"slices", c.slices},
            {"smooth_cells", c.smooth_cells},
            {"c_top", c.c_top},
            {"c_bottom", c.c_bottom}}},
          {"sources", line_json(c.sources)},
          {"sensors", line_json(c.sensors)},
          {"refine", c.refine},
          {"groups_hz", c.groups_hz},
          {"alpha0", c.alpha0},
          {"mu", c.mu},
          {"lower", {{"grad_tol", c.lower_grad_tol}, {"max_iter", c.lower_max_iter}}},
          {"upper",
           {{"max_iter", c.upper_max_iter},
            {"pg_tol", c.upper_pg_tol},
            {"pcg_tol", c.pcg_tol},
            {"alpha_lo", c.alpha_lo},
            {"alpha_hi", c.alpha_hi}}},
          {"noise_snr_db", c.noise_snr_db},
          {"xval", {{"test_slices", c.test_slices}, {"strategies", c.strategies}}},
          {"bench",
           {{"alphas", c.bench_alphas}, {"alpha0", c.bench_alpha0}, {"freq_hz", c.bench_freq_hz}, {"tol", c.bench_tol}, {"slice", c.bench_slice}}},
          {"seed", c.seed},
          {"threads", c.threads},
          {"out", c.out}};
}

namespace {

// Every key of j must exist in the default layout.
void check_keys(const json& j, const json& layout, const std::string& prefix) {
  if (!j.is_object()) return;
  for (const auto& [key, value] : j.items()) {
    if (!layout.contains(key)) throw InvalidArgument("config: unknown key '" + prefix + key + "'");
    if (layout[key].is_object()) check_keys(value, layout[key], prefix + key + ".");
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
  check_keys(j, to_json(c), "");
  try {
    if (j.contains("model")) {
      const json& m = j["model"];
      c.model_file = m.value("file", c.model_file);
      c.n1 = m.value("n1", c.n1);
      c.n2 = m.value("n2", c.n2);
      c.width_x = m.value("width_x", c.width_x);
      c.width_z = m.value("width_z", c.width_z);
      c.slices = m.value("slices", c.slices);
      c.smooth_cells = m.value("smooth_cells", c.smooth_cells);
      c.c_top = m.value("c_top", c.c_top);
      c.c_bottom = m.value("c_bottom", c.c_bottom);
    }
    if (j.contains("sources")) c.sources = line_from(j["sources"], c.sources);
    if (j.contains("sensors")) c.sensors = line_from(j["sensors"], c.sensors);
    c.refine = j.value("refine", c.refine);
    c.groups_hz = j.value("groups_hz", c.groups_hz);
    c.alpha0 = j.value("alpha0", c.alpha0);
    c.mu = j.value("mu", c.mu);
    if (j.contains("lower")) {
      c.lower_grad_tol = j["lower"].value("grad_tol", c.lower_grad_tol);
      c.lower_max_iter = j["lower"].value("max_iter", c.lower_max_iter);
    }
    if (j.contains("upper")) {
      c.upper_max_iter = j["upper"].value("max_iter", c.upper_max_iter);
      c.upper_pg_tol = j["upper"].value("pg_tol", c.upper_pg_tol);
      c.pcg_tol = j["upper"].value("pcg_tol", c.pcg_tol);
      c.alpha_lo = j["upper"].value("alpha_lo", c.alpha_lo);
      c.alpha_hi = j["upper"].value("alpha_hi", c.alpha_hi);
    }
    c.noise_snr_db = j.value("noise_snr_db", c.noise_snr_db);
    if (j.contains("xval")) {
      c.test_slices = j["xval"].value("test_slices", c.test_slices);
      c.strategies = j["xval"].value("strategies", c.strategies);
    }
    if (j.contains("bench")) {
      c.bench_alphas = j["bench"].value("alphas", c.bench_alphas);
      c.bench_alpha0 = j["bench"].value("alpha0", c.bench_alpha0);
      c.bench_freq_hz = j["bench"].value("freq_hz", c.bench_freq_hz);
      c.bench_tol = j["bench"].value("tol", c.bench_tol);
      c.bench_slice = j["bench"].value("slice", c.bench_slice);
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.out = j.value("out", c.out);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InvalidArgument("--set: empty key component in '" + key + "'");
    if (!node->is_object()) throw InvalidArgument("--set: '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = to_json(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("config: cannot open " + path);
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) throw InvalidArgument("config: " + path + " is not valid JSON");
    j.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace bfwi
