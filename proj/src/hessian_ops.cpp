#include "bfwi/hessian_ops.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

namespace bfwi {

HessianOperator::HessianOperator(const LowerProblem& problem, std::shared_ptr<const LowerEvaluation> cache,
                                 Mode mode)
    : problem_(&problem), cache_(std::move(cache)), mode_(mode) {
  if (!cache_ || cache_->grad.size() == 0 || cache_->lambda.size() != cache_->u.size())
    throw InvalidArgument("HessianOperator: needs forward and adjoint fields; evaluate the gradient first");
  const auto& omegas = problem.data().omegas;
  for (double w : omegas) {
    g_.push_back(g_coefficients(problem.fem(), cache_->m, w));
    gp_.push_back(g_derivative(problem.fem(), cache_->m, w));
  }
}

Vec HessianOperator::apply(const Vec& vt, SolvePhase phase) const {
  const LowerProblem& P = *problem_;
  const LowerEvaluation& c = *cache_;
  const int np = P.data().num_pairs();
  const int ns = P.data().num_sources();
  if (vt.size() != size()) throw InvalidArgument("HessianOperator::apply: size mismatch");
  const bool par = P.options().policy == ExecPolicy::Parallel;
  const bool full = mode_ == Mode::Full;

  std::vector<Vec> contrib(np);
#pragma omp parallel for schedule(dynamic) if (par)
  for (int k = 0; k < np; ++k) {
    const int w = k / ns;
    const auto& fact = *c.factorizations[w];
    const auto g = g_[w].array();
    const auto u = c.u[k].array();
    const auto lam = c.lambda[k].array();
    const CVec v = fact.solve_forward((g * vt.array().cast<Complex>() * u).matrix(), phase);
    const auto& st = P.stencil();
    CVec rhs = st.adjoint(st.restrict(v));
    if (full) rhs -= (vt.array().cast<Complex>() * g.conjugate() * lam).matrix();
    const CVec z = fact.solve_adjoint(rhs, phase);
    Vec out = (g * u * z.array().conjugate()).real().matrix();
    if (full) {
      out -= (g * v.array() * lam.conjugate()).real().matrix();
      out -= (vt.array().cast<Complex>() * gp_[w].array() * u * lam.conjugate()).real().matrix();
    }
    contrib[k] = std::move(out);
  }
  Vec r = P.regulariser().apply(vt);
  for (const auto& cv : contrib) r += cv;
  return r;
}

Mat dense_hessian(const LowerProblem& P, const LowerEvaluation& c, SolvePhase phase) {
  if (c.grad.size() == 0 || c.lambda.size() != c.u.size()) throw InvalidArgument("dense_hessian: adjoint fields missing");
  const int n = P.size();
  const int ns = P.data().num_sources();
  const int np = P.data().num_pairs();
  const bool par = P.options().policy == ExecPolicy::Parallel;
  const Mat Rd = P.stencil().dense();

  std::vector<Mat> contrib(np);
#pragma omp parallel for schedule(dynamic) if (par)
  for (int k = 0; k < np; ++k) {
    const int w = k / ns;
    const double omega = P.data().omegas[w];
    const auto& fact = *c.factorizations[w];
    const CVec g = g_coefficients(P.fem(), c.m, omega);
    const CVec gp = g_derivative(P.fem(), c.m, omega);
    const CVec& u = c.u[k];
    const CVec& lam = c.lambda[k];
    // column j: du/dm_j = A^{-1}(g_j u_j e_j)
    Eigen::MatrixXcd du(n, n);
    for (int j = 0; j < n; ++j) {
      CVec e = CVec::Zero(n);
      e[j] = g[j] * u[j];
      du.col(j) = fact.solve_forward(e, phase);
    }
    const Eigen::MatrixXcd Rdu = Rd.cast<Complex>() * du;
    Mat H = (Rdu.adjoint() * Rdu).real();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        // -Re[g_i (du_j)_i conj(lambda_i)] - Re[g_j (du_i)_j conj(lambda_j)]
        H(i, j) -= std::real(g[i] * du(i, j) * std::conj(lam[i])) + std::real(g[j] * du(j, i) * std::conj(lam[j]));
      }
    for (int j = 0; j < n; ++j) H(j, j) -= std::real(gp[j] * u[j] * std::conj(lam[j]));
    contrib[k] = std::move(H);
  }
  Mat H = Mat(P.regulariser().gamma());
  for (const auto& h : contrib) H += h;
  return H;
}

struct Preconditioner::Impl {
  Eigen::LLT<Mat> dense;
  Eigen::SimplicialLLT<SpMat> sparse;
  bool is_dense = true;
};

Preconditioner Preconditioner::identity() { return Preconditioner(); }

Preconditioner Preconditioner::dense(const Mat& H, Kind kind) {
  const int n = static_cast<int>(H.rows());
  if (H.cols() != n || n == 0) throw InvalidArgument("Preconditioner::dense: need a nonempty square matrix");
  auto impl = std::make_shared<Impl>();
  Mat Hs = 0.5 * (H + H.transpose());
  double shift = 0.0;
  impl->dense.compute(Hs);
  if (impl->dense.info() != Eigen::Success) {
    const double base = 1e-10 * std::abs(Hs.trace()) / n;
    shift = base > 0.0 ? base : 1e-10;
    for (int attempt = 0; attempt < 200; ++attempt, shift *= 2.0) {
      impl->dense.compute(Hs + shift * Mat::Identity(n, n));
      if (impl->dense.info() == Eigen::Success) break;
    }
    if (impl->dense.info() != Eigen::Success)
      throw FactorizationError("Preconditioner::dense: Cholesky failed for every shift");
  }
  Preconditioner p;
  p.kind_ = kind;
  p.shift_ = shift;
  p.impl_ = impl;
  return p;
}

Preconditioner Preconditioner::sparse(const SpMat& A, Kind kind) {
  auto impl = std::make_shared<Impl>();
  impl->is_dense = false;
  impl->sparse.compute(A);
  if (impl->sparse.info() != Eigen::Success)
    throw FactorizationError("Preconditioner::sparse: Cholesky failed");
  Preconditioner p;
  p.kind_ = kind;
  p.impl_ = impl;
  return p;
}

Vec Preconditioner::apply(const Vec& r) const {
  if (!impl_) return r;
  if (impl_->is_dense) return impl_->dense.solve(r);
  return impl_->sparse.solve(r);
}

std::string to_string(Preconditioner::Kind k) {
  switch (k) {
    case Preconditioner::Kind::None: return "none";
    case Preconditioner::Kind::P1: return "P1";
    case Preconditioner::Kind::P2: return "P2";
    case Preconditioner::Kind::Dense: return "dense";
  }
  return "unknown";
}

Preconditioner build_P1(const LowerProblem& problem, const LowerEvaluation& cache) {
  return Preconditioner::dense(dense_hessian(problem, cache, SolvePhase::Other), Preconditioner::Kind::P1);
}

Preconditioner build_P2(const Grid& grid, double alpha0, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("build_P2: mu must be positive");
  return Preconditioner::sparse(Regulariser(grid, alpha0, mu).gamma(), Preconditioner::Kind::P2);
}

PcgResult pcg_solve(const LinearOperator& A, const Vec& b, const Preconditioner& pre, const PcgOptions& opts) {
  if (!b.allFinite()) throw InvalidArgument("pcg_solve: right-hand side is not finite");
  if (!(opts.tol > 0.0 && opts.tol < 1.0)) throw InvalidArgument("pcg_solve: tol must lie in (0, 1)");
  const int n = static_cast<int>(b.size());
  const int cap = opts.max_iter > 0 ? opts.max_iter : 10 * n;

  PcgResult res;
  Vec r;
  if (opts.ones_start) {
    res.x = Vec::Ones(n);
    r = b - A(res.x);
    ++res.products;
  } else {
    res.x = Vec::Zero(n);
    r = b;
  }
  const double r0 = r.norm();
  res.residuals.push_back(1.0);
  if (r0 == 0.0) {
    res.converged = true;
    return res;
  }
  Vec zv = pre.apply(r);
  Vec p = zv;
  double rz = r.dot(zv);
  while (res.iterations < cap) {
    const Vec Ap = A(p);
    ++res.products;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      res.breakdown = true;
      return res;
    }
    const double a = rz / pAp;
    res.x += a * p;
    r -= a * Ap;
    ++res.iterations;
    const double rel = r.norm() / r0;
    res.residuals.push_back(rel);
    if (rel <= opts.tol) {
      res.converged = true;
      return res;
    }
    zv = pre.apply(r);
    const double rz_new = r.dot(zv);
    p = zv + (rz_new / rz) * p;
    rz = rz_new;
  }
  res.capped = true;
  return res;
}

}  // namespace bfwi
