#ifndef SRTUNE_SOLVERS_HPP
#define SRTUNE_SOLVERS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srtune/errors.hpp"
#include "srtune/forward_model.hpp"
#include "srtune/geometry.hpp"
#include "srtune/gradient.hpp"
#include "srtune/linear_operator.hpp"

namespace srtune {

enum class RegularizerKind { tv, tikhonov1 };

inline const char* to_string(RegularizerKind r) { return r == RegularizerKind::tv ? "tv" : "tikhonov1"; }

inline RegularizerKind parse_regularizer(const std::string& s) {
  if (s == "tv")
    return RegularizerKind::tv;
  if (s == "tikhonov1" || s == "tikhonov")
    return RegularizerKind::tikhonov1;
  throw InputError("unknown regularizer '" + s + "'");
}

enum class SolverInit { zeros, backprojection };

struct SolverConfig {
  double alpha = 0.0;
  int max_iters = 300;
  double tol = 1e-6;
  SolverInit init = SolverInit::backprojection;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw DomainError("solver: alpha must be >= 0");
    if (max_iters < 1)
      throw DomainError("solver: max_iters must be >= 1");
    if (!(tol > 0.0))
      throw DomainError("solver: tol must be > 0");
  }

  /// 300 primal-dual iterations for TV, 100 CG iterations for Tikhonov.
  static SolverConfig defaults(RegularizerKind kind, double alpha = 0.0) {
    SolverConfig c;
    c.alpha = alpha;
    c.max_iters = kind == RegularizerKind::tv ? 300 : 100;
    return c;
  }
};

struct SolveReport {
  Volume3D x;
  int iterations = 0;
  bool converged = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> objective_history; // objective of each iterate, starting with init
  std::vector<double> best_history;      // running minimum of objective_history
  double relative_residual = std::numeric_limits<double>::quiet_NaN(); // CG only
};

/// Pipelines that weight the fidelity term by λ instead: α = 1/λ.
inline double convert_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("convert_lambda: lambda must be > 0");
  return 1.0 / lambda;
}

namespace detail {

inline double half_squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return 0.5 * s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(inner_product(v, v)); }

inline double regularizer_value(RegularizerKind reg, std::span<const double> g) {
  return reg == RegularizerKind::tv ? total_variation(g) : gradient_energy(g);
}

template <LinearOperator Op>
std::vector<double> initial_estimate(const Op& H, std::span<const double> y, SolverInit init) {
  std::vector<double> x(H.cols(), 0.0);
  if (init == SolverInit::zeros)
    return x;
  std::vector<double> ones(H.rows(), 1.0), hits(H.cols());
  H.apply_adjoint_into(y, x);
  H.apply_adjoint_into(ones, hits);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = hits[i] > 1e-12 ? x[i] / hits[i] : 0.0;
  return x;
}

inline void check_finite(double v, int iteration, const char* what) {
  if (!std::isfinite(v))
    throw DivergenceError(iteration, std::string("solver diverged: non-finite ") + what);
}

} // namespace detail

/// ½‖Hx − y‖² + α R(x); R is isotropic TV or ‖∇x‖².
template <LinearOperator Op>
double objective(const Op& H, std::span<const double> y, const Volume3D& x, RegularizerKind reg, double alpha) {
  if (x.data.size() != H.cols() || y.size() != H.rows())
    throw ShapeError("objective: shape mismatch");
  std::vector<double> hx(H.rows()), g(3 * x.data.size());
  H.apply_into(x.data, hx);
  gradient(x.geom.dims, x.data, g);
  return detail::half_squared_distance(hx, y) + alpha * detail::regularizer_value(reg, g);
}

/// Isotropic-TV problem by Chambolle-Pock on K = (H; ∇) with
/// σ = τ = 0.99/‖K‖. The best iterate seen is returned.
template <LinearOperator Op>
SolveReport solve_tv(const Op& H, std::span<const double> y, const Geometry& grid, const SolverConfig& cfg,
                     std::optional<double> h_norm = std::nullopt) {
  const std::size_t n = H.cols(), m = H.rows();
  const Dims& d = grid.dims;
  const double hn = h_norm ? *h_norm : estimate_operator_norm(H);
  // Power iteration approaches ‖H‖ from below; pad it slightly.
  const double k_norm = std::sqrt(1.0201 * hn * hn + gradient_norm_sq_bound(d));
  const double step = 0.99 / k_norm;
  const double alpha = cfg.alpha;

  std::vector<double> x = detail::initial_estimate(H, y, cfg.init);
  std::vector<double> xbar = x, x_new(n), hx(m), hxbar(m), p(m, 0.0), q(3 * n, 0.0), g(3 * n), ht_p(n), div_q(n);
  H.apply_into(x, hx);
  hxbar = hx;

  SolveReport rep;
  gradient(d, x, g);
  double f = detail::half_squared_distance(hx, y) + alpha * total_variation(g);
  detail::check_finite(f, 0, "objective");
  rep.initial_objective = f;
  rep.objective_history.push_back(f);
  rep.best_history.push_back(f);
  std::vector<double> best = x;
  double best_f = f;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    for (std::size_t i = 0; i < m; ++i)
      p[i] = (p[i] + step * (hxbar[i] - y[i])) / (1.0 + step);
    gradient(d, xbar, g);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = q[i] + step * g[i], b = q[n + i] + step * g[n + i], c = q[2 * n + i] + step * g[2 * n + i];
      const double mag = std::sqrt(a * a + b * b + c * c);
      const double shrink = mag > alpha ? (alpha > 0.0 ? alpha / mag : 0.0) : 1.0;
      q[i] = a * shrink;
      q[n + i] = b * shrink;
      q[2 * n + i] = c * shrink;
    }
    H.apply_adjoint_into(p, ht_p);
    divergence(d, q, div_q);
    for (std::size_t i = 0; i < n; ++i) {
      x_new[i] = x[i] - step * (ht_p[i] - div_q[i]);
      xbar[i] = 2.0 * x_new[i] - x[i];
    }
    H.apply_into(xbar, hxbar);
    // H xbar = 2 H x_new − H x, so H x_new comes for free.
    for (std::size_t i = 0; i < m; ++i)
      hx[i] = 0.5 * (hxbar[i] + hx[i]);
    x.swap(x_new);

    gradient(d, x, g);
    const double f_new = detail::half_squared_distance(hx, y) + alpha * total_variation(g);
    detail::check_finite(f_new, it, "objective");
    rep.objective_history.push_back(f_new);
    if (f_new < best_f) {
      best_f = f_new;
      best = x;
    }
    rep.best_history.push_back(best_f);
    rep.iterations = it;
    const double change = std::abs(f_new - f) / std::max(std::abs(f), std::numeric_limits<double>::min());
    f = f_new;
    if (change < cfg.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.x = Volume3D(grid);
  rep.x.data = std::move(best);
  rep.final_objective = best_f;
  return rep;
}

/// First-order Tikhonov: CG on (HᵀH + 2α DᵀD) x = Hᵀy, the normal equations
/// of ½‖Hx − y‖² + α‖Dx‖². Stops on relative residual below tol.
template <LinearOperator Op>
SolveReport solve_tikhonov(const Op& H, std::span<const double> y, const Geometry& grid, const SolverConfig& cfg) {
  const std::size_t n = H.cols(), m = H.rows();
  const Dims& d = grid.dims;
  const double two_alpha = 2.0 * cfg.alpha;

  std::vector<double> x = detail::initial_estimate(H, y, cfg.init);
  std::vector<double> b(n), r(n), p(n), ap(n), hx(m), hp(m), g(3 * n), lap(n);

  // A v = HᵀH v − 2α div ∇v; `hv` receives H v.
  auto apply_normal = [&](std::span<const double> v, std::span<double> out, std::span<double> hv) {
    H.apply_into(v, hv);
    H.apply_adjoint_into(hv, out);
    gradient(d, v, g);
    divergence(d, g, lap);
    for (std::size_t i = 0; i < n; ++i)
      out[i] -= two_alpha * lap[i];
  };
  auto objective_at = [&](std::span<const double> xv, std::span<const double> hxv) {
    gradient(d, xv, g);
    return detail::half_squared_distance(hxv, y) + cfg.alpha * gradient_energy(g);
  };

  H.apply_adjoint_into(y, b);
  const double b_norm = detail::norm2(b);
  apply_normal(x, ap, hx);
  for (std::size_t i = 0; i < n; ++i)
    r[i] = b[i] - ap[i];

  SolveReport rep;
  double f = objective_at(x, hx);
  detail::check_finite(f, 0, "objective");
  rep.initial_objective = f;
  rep.objective_history.push_back(f);
  rep.best_history.push_back(f);

  const double scale = b_norm > 0.0 ? b_norm : 1.0;
  double rr = inner_product(std::span<const double>(r), std::span<const double>(r));
  rep.relative_residual = std::sqrt(rr) / scale;
  p = r;
  int it = 0;
  while (rep.relative_residual >= cfg.tol && it < cfg.max_iters) {
    ++it;
    apply_normal(p, ap, hp);
    const double pap = inner_product(std::span<const double>(p), std::span<const double>(ap));
    detail::check_finite(pap, it, "curvature");
    if (pap <= 0.0)
      break;
    const double step = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * ap[i];
    }
    for (std::size_t i = 0; i < m; ++i)
      hx[i] += step * hp[i];
    const double rr_new = inner_product(std::span<const double>(r), std::span<const double>(r));
    detail::check_finite(rr_new, it, "residual");
    rep.relative_residual = std::sqrt(rr_new) / scale;
    if (rep.relative_residual < cfg.tol) {
      // Confirm against the true residual before stopping.
      apply_normal(x, ap, hx);
      for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - ap[i];
      rr = inner_product(std::span<const double>(r), std::span<const double>(r));
      rep.relative_residual = std::sqrt(rr) / scale;
      p = r;
    } else {
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t i = 0; i < n; ++i)
        p[i] = r[i] + beta * p[i];
    }
    f = objective_at(x, hx);
    detail::check_finite(f, it, "objective");
    rep.objective_history.push_back(f);
    rep.best_history.push_back(std::min(rep.best_history.back(), f));
  }
  rep.iterations = it;
  rep.converged = rep.relative_residual < cfg.tol;
  rep.final_objective = f;
  rep.x = Volume3D(grid);
  rep.x.data = std::move(x);
  return rep;
}

/// Minimise ½‖Hx − y‖² + α R(x) for the chosen regularizer.
template <LinearOperator Op>
SolveReport solve(const Op& H, std::span<const double> y, const Geometry& grid, RegularizerKind reg,
                  const SolverConfig& cfg, std::optional<double> h_norm = std::nullopt) {
  cfg.validate();
  if (y.size() != H.rows() || grid.size() != H.cols())
    throw ShapeError("solve: data or grid does not match the operator");
  for (double v : y)
    if (!std::isfinite(v))
      throw InputError("solve: data contains non-finite values");
  return reg == RegularizerKind::tv ? solve_tv(H, y, grid, cfg, h_norm) : solve_tikhonov(H, y, grid, cfg);
}

} // namespace srtune

#endif // SRTUNE_SOLVERS_HPP
