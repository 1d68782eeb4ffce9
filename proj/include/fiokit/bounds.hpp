#pragma once

// Operator norms of discretised FIOs and the checks built on them.
//
// A kernel K sampled on a common x/y grid with cell volume h^d acts on grid
// values as phi -> K phi h^d; in the weighted L^2 norms its operator norm is
// the largest singular value of B = h^d K.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fiokit/fio.hpp"

namespace fiokit {

struct NormEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline NormEstimate power_run(const CMat& b, CVec v, int iterations, double tol) {
  NormEstimate r;
  if (v.norm() == 0.0) return r;
  v.normalize();
  double rho = (b * v).squaredNorm();
  for (int it = 1; it <= iterations; ++it) {
    CVec w = b.adjoint() * (b * v);
    const double nw = w.norm();
    r.iterations = it;
    if (nw == 0.0) {
      r.value = 0.0;
      r.converged = true;
      return r;
    }
    v = w / nw;
    const double next = (b * v).squaredNorm();
    const bool stalled = std::abs(next - rho) <= tol * next;
    rho = next;
    if (stalled) {
      r.converged = true;
      break;
    }
  }
  r.value = std::sqrt(rho);
  return r;
}

}  // namespace detail

/// Largest singular value of sqrt(wx / wy) * a: the norm of a : L^2(wy) -> L^2(wx)
/// when a acts on grid values (column weights already applied).
/// Power iteration on B^* B from the all-ones vector and from one seeded
/// random start; the larger estimate is returned.
inline NormEstimate operator_norm(const CMat& a, double wx = 1.0, double wy = 1.0, int iterations = 500,
                                  double tol = 1e-10, std::uint64_t seed = 0x5EED) {
  if (iterations < 10) throw InvalidArgument("operator_norm: at least 10 iterations required");
  if (!a.allFinite()) throw InvalidArgument("operator_norm: non-finite matrix");
  if (a.size() == 0) return {0.0, true, 0};
  const CMat b = std::sqrt(wx / wy) * a;
  NormEstimate best = detail::power_run(b, CVec::Ones(b.cols()), iterations, tol);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  CVec r(b.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = {g(rng), g(rng)};
  NormEstimate other = detail::power_run(b, r, iterations, tol);
  if (other.value > best.value) std::swap(best, other);
  best.converged = best.converged && other.converged;
  return best;
}

// ---------------------------------------------------------------------------
// Discretisation

struct DiscretizationOptions {
  double region = 1.5;       // half-width of the phase-space region for symbols without support
  double safety = 1.5;       // resolution-rule safety factor
  double window = 7.0;       // Gaussian window, in widths
  int refine = 1;            // 2 halves every spacing
  std::optional<Box> region_box;
};

struct Discretization {
  GridLayout grid;
  std::vector<PhaseSpaceLayout> ps;
  std::vector<CMat> kernels;
  double h_weight = 1.0;  // h^d

  /// B = h^d K for operator k.
  CMat weighted(std::size_t k = 0) const { return h_weight * kernels[k]; }
};

namespace detail {

inline Box phase_region(const FioSpec& s, const DiscretizationOptions& o) {
  if (o.region_box) return *o.region_box;
  if (s.u.support) return *s.u.support;
  const int d = s.dim();
  const double rq = o.region + o.window * std::sqrt(s.eps / std::min(s.theta_x.lambda(), s.theta_y.lambda()));
  const double rp = o.region + o.window * std::sqrt(s.eps * std::max(s.theta_x.gamma_eff(), s.theta_y.gamma_eff()));
  RVec lo(2 * d), hi(2 * d);
  lo << RVec::Constant(d, -rq), RVec::Constant(d, -rp);
  hi << RVec::Constant(d, rq), RVec::Constant(d, rp);
  return {lo, hi};
}

}  // namespace detail

/// Discretises several operators on one common x/y grid (needed for products
/// and adjoints). Symbols without a support box are truncated to a
/// phase-space box of half-width region + window widths.
inline Discretization discretize(const std::vector<FioSpec>& specs, const DiscretizationOptions& o = {}) {
  if (specs.empty()) throw InvalidArgument("discretize: no operators");
  const int d = specs[0].dim();
  Discretization out;
  RVec lo = RVec::Constant(d, INFINITY), hi = RVec::Constant(d, -INFINITY);
  double h = INFINITY;
  for (const auto& s : specs) {
    s.validate();
    if (s.dim() != d) throw InvalidArgument("discretize: operators of different dimension");
    const Box region = detail::phase_region(s, o);
    PhaseSpaceLayout ps = symbol_layout(s, region, 0.4 / o.refine);
    const Box image = detail::image_box(s.kappa, ps.box());
    const double rx = o.window * std::sqrt(s.eps / s.theta_x.lambda());
    const double ry = o.window * std::sqrt(s.eps / s.theta_y.lambda());
    lo = lo.cwiseMin(RVec(ps.q.lo().array() - ry)).cwiseMin(RVec(image.lo.head(d).array() - rx));
    hi = hi.cwiseMax(RVec(ps.q.hi().array() + ry)).cwiseMax(RVec(image.hi.head(d).array() + rx));
    const double xi_max = std::max(image.lo.tail(d).cwiseAbs().maxCoeff(), image.hi.tail(d).cwiseAbs().maxCoeff());
    h = std::min({h, resolution_spacing(s.eps, s.theta_y, ps.p_max()), resolution_spacing(s.eps, s.theta_x, xi_max)});
    out.ps.push_back(ps);
  }
  h /= o.safety * o.refine;
  out.grid = detail::layout_for_box(lo, hi, h);
  out.h_weight = out.grid.weight();
  for (std::size_t k = 0; k < specs.size(); ++k)
    out.kernels.push_back(fio_kernel_matrix(specs[k], out.grid, out.grid, out.ps[k], o.window));
  return out;
}

inline Discretization discretize(const FioSpec& s, const DiscretizationOptions& o = {}) {
  return discretize(std::vector<FioSpec>{s}, o);
}

// ---------------------------------------------------------------------------
// Reports

enum class BoundName { antiwick, corfull, crude1, crude2, full };

inline const char* to_string(BoundName b) {
  switch (b) {
    case BoundName::antiwick: return "antiwick";
    case BoundName::corfull: return "corfull";
    case BoundName::crude1: return "crude1";
    case BoundName::crude2: return "crude2";
    case BoundName::full: return "full";
  }
  return "?";
}

struct NormReport {
  double measured_norm = 0.0;
  BoundName bound_name = BoundName::antiwick;
  double bound_value = std::numeric_limits<double>::infinity();
  double eps = 1.0;
  double tolerance = 5e-3;
  bool converged = true;
  std::optional<double> refined_norm;  // same measurement with all spacings halved
  nlohmann::json metadata = nlohmann::json::object();

  bool within_bound() const { return !(measured_norm > bound_value * (1.0 + tolerance)); }
  double refinement_change() const {
    if (!refined_norm || measured_norm == 0.0) return 0.0;
    return std::abs(*refined_norm - measured_norm) / measured_norm;
  }
};

inline nlohmann::json to_json(const NormReport& r) {
  nlohmann::json j = {{"measured_norm", r.measured_norm},
                      {"bound_name", to_string(r.bound_name)},
                      {"bound_value", std::isfinite(r.bound_value) ? nlohmann::json(r.bound_value) : nlohmann::json("inf")},
                      {"eps", r.eps},
                      {"tolerance", r.tolerance},
                      {"converged", r.converged},
                      {"within_bound", r.within_bound()},
                      {"metadata", r.metadata}};
  if (r.refined_norm) {
    j["refined_norm"] = *r.refined_norm;
    j["refinement_change"] = r.refinement_change();
  }
  return j;
}

struct MeasureOptions {
  DiscretizationOptions grid;
  bool check_refinement = false;
  int iterations = 500;
  double tol = 1e-10;
};

/// FIO operator norm from an existing discretisation of s, optionally
/// repeated on the refined grid.
inline NormReport measure_fio_norm(const FioSpec& s, const Discretization& disc, const MeasureOptions& o = {}) {
  NormReport r;
  r.eps = s.eps;
  const NormEstimate n = operator_norm(disc.weighted(), 1.0, 1.0, o.iterations, o.tol);
  r.measured_norm = n.value;
  r.converged = n.converged;
  r.metadata = {{"kappa", s.kappa.label()},
                {"symbol", s.u.name},
                {"grid_points", disc.grid.size()},
                {"phase_space_points", disc.ps[0].size()},
                {"iterations", n.iterations}};
  if (o.check_refinement) {
    DiscretizationOptions g = o.grid;
    g.refine = 2 * o.grid.refine;
    const Discretization fine = discretize(s, g);
    r.refined_norm = operator_norm(fine.weighted(), 1.0, 1.0, o.iterations, o.tol).value;
    r.metadata["refined_grid_points"] = fine.grid.size();
  }
  return r;
}

inline NormReport measure_fio_norm(const FioSpec& s, const MeasureOptions& o = {}) {
  return measure_fio_norm(s, discretize(s, o.grid), o);
}

/// |I_AWick| <= |u|_inf.
inline NormReport verify_antiwick_bound(const FioSpec& s, const MeasureOptions& o = {}) {
  if (s.u.depends_on_xy) throw InvalidArgument("verify_antiwick_bound: symbol must not depend on (x, y)");
  NormReport r = measure_fio_norm(s, o);
  const double f = awick_to_fio(s.theta_x, s.theta_y);
  r.measured_norm /= f;
  if (r.refined_norm) r.refined_norm = *r.refined_norm / f;
  r.bound_name = BoundName::antiwick;
  r.bound_value = s.u.sup_norm;
  r.tolerance = 5e-3;
  return r;
}

/// |I| <= 2^{-d/2} |u|_inf / (det Re Tx det Re Ty)^{1/4}.
inline NormReport verify_corfull_bound(const FioSpec& s, const MeasureOptions& o = {}) {
  if (s.u.depends_on_xy) throw InvalidArgument("verify_corfull_bound: symbol must not depend on (x, y)");
  NormReport r = measure_fio_norm(s, o);
  r.bound_name = BoundName::corfull;
  r.bound_value = awick_to_fio(s.theta_x, s.theta_y) * s.u.sup_norm;
  r.tolerance = 5e-3;
  return r;
}

// ---------------------------------------------------------------------------
// Scaling-law checks (constants unknown)

struct SweepRow {
  double parameter = 0.0;  // eps or r
  double measured = 0.0;
  double normalized = 0.0;
  bool converged = true;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double statistic = 0.0;  // the quantity compared against `limit`
  double limit = 0.0;
  bool passed = false;
};

/// eps-sweep for the first crude bound: measured * eps^d / (M * (det Re Tx det Re Ty)^{-1/4})
/// must stay below 3 times its value at the first eps (taken as 1).
/// M is the sampled weighted sup of u with weights m over the region.
inline SweepReport verify_crude_bounds(const std::function<FioSpec(double)>& family, const std::vector<double>& eps_list,
                                       const RVec& m, const Box& region, const MeasureOptions& o = {}) {
  SweepReport rep;
  rep.limit = 3.0;
  double first = 0.0;
  for (double eps : eps_list) {
    const FioSpec s = family(eps);
    const double big_m = symbol_seminorm(s.u, 0, m, region, 41);
    const NormReport n = measure_fio_norm(s, o);
    const double det = std::pow(s.theta_x.det_real() * s.theta_y.det_real(), -0.25);
    SweepRow row{eps, n.measured_norm, 0.0, n.converged};
    row.normalized = big_m == 0.0 ? 0.0 : n.measured_norm * std::pow(eps, s.dim()) / (big_m * det);
    if (rep.rows.empty()) first = row.normalized;
    rep.rows.push_back(row);
  }
  double worst = 0.0;
  for (const auto& r : rep.rows) worst = std::max(worst, first == 0.0 ? 0.0 : r.normalized / first);
  rep.statistic = worst;
  rep.passed = first == 0.0 ? std::all_of(rep.rows.begin(), rep.rows.end(), [](const SweepRow& r) { return r.measured == 0.0; })
                            : worst <= rep.limit;
  return rep;
}

/// r-sweep for the second crude bound at fixed eps: each halving of the support radius
/// must shrink the norm by at least 2^{-2d} (1 + 0.2).
inline SweepReport crude2_radius_scaling(const std::function<FioSpec(double)>& family, const std::vector<double>& radii,
                                         const MeasureOptions& o = {}) {
  SweepReport rep;
  int d = 1;
  for (double r : radii) {
    const FioSpec s = family(r);
    d = s.dim();
    const NormReport n = measure_fio_norm(s, o);
    rep.rows.push_back({r, n.measured_norm, n.measured_norm / std::pow(r, 2 * d), n.converged});
  }
  rep.limit = std::pow(2.0, -2 * d) * 1.2;
  double worst = 0.0;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    const double ratio_r = rep.rows[k].parameter / rep.rows[k - 1].parameter;
    const double ratio_n = rep.rows[k].measured / rep.rows[k - 1].measured;
    // Normalise to a halving of r.
    worst = std::max(worst, std::pow(ratio_n, std::log(0.5) / std::log(ratio_r)));
  }
  rep.statistic = worst;
  rep.passed = worst <= rep.limit;
  return rep;
}

/// eps-uniformity: max over eps of the measured FIO norm is at most
/// `factor` times the value at the first eps.
inline SweepReport verify_full_theorem(const std::function<FioSpec(double)>& family, const std::vector<double>& eps_list,
                                       double factor = 2.0, const MeasureOptions& o = {}) {
  SweepReport rep;
  rep.limit = factor;
  for (double eps : eps_list) {
    const NormReport n = measure_fio_norm(family(eps), o);
    rep.rows.push_back({eps, n.measured_norm, 0.0, n.converged});
  }
  const double first = rep.rows.front().measured;
  double worst = 0.0;
  for (auto& r : rep.rows) {
    r.normalized = first == 0.0 ? 0.0 : r.measured / first;
    worst = std::max(worst, r.normalized);
  }
  rep.statistic = worst;
  rep.passed = worst <= factor;
  return rep;
}

// ---------------------------------------------------------------------------
// Lower bi-Lipschitz constants entering the decay rate, at kappa0 = Id and
// kappa0 = kappa. Both are local estimates: minima over sampled Jacobians.

struct EtaEstimate {
  double at_identity = 0.0;
  double at_kappa = 0.0;
  double best() const { return std::max(at_identity, at_kappa); }
};

inline EtaEstimate eta_fixed(const CanonicalMap& kappa, const ComplexSymMatrix& tx, const ComplexSymMatrix& ty,
                             const Box& region, int samples = 400, std::uint64_t seed = 0x5EED) {
  const int d = kappa.dim();
  if (region.dim() != 2 * d) throw InvalidArgument("eta_fixed: region must live in R^{2d}");
  const RMat lx = lambda_of(tx), ly = lambda_of(ty.conj());
  const RMat jm = symplectic_j(d);
  auto smin = [](const RMat& m) { return Eigen::JacobiSVD<RMat>(m).singularValues().minCoeff(); };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double a = INFINITY, b = INFINITY;
  for (int s = 0; s < samples; ++s) {
    RVec z(2 * d);
    for (int j = 0; j < 2 * d; ++j) z(j) = region.lo(j) + unit(rng) * (region.hi(j) - region.lo(j));
    const RMat f = kappa(PhasePoint::from_stacked(z)).F;
    a = std::min(a, smin(lx * f));
    b = std::min(b, smin(ly * (-jm * f.transpose() * jm)));
  }
  return {std::min(a, smin(ly)), std::min(smin(lx), b)};
}

// ---------------------------------------------------------------------------
// Separated supports

struct SupportPair {
  Box Ku;
  Box Kv;
  double separation = 0.0;
};

/// Distance between Lambda(Tx) kappa(Ku) and Lambda(Tx) kappa(Kv), from
/// `samples`^{2d} points per box (an approximation of the infimum).
inline SupportPair support_pair(const CanonicalMap& kappa, const ComplexSymMatrix& tx, const Box& ku, const Box& kv,
                                int samples = 33) {
  const int n = ku.dim();
  const RMat lam = lambda_of(tx);
  auto cloud = [&](const Box& b) {
    std::size_t total = 1;
    for (int j = 0; j < n; ++j) total *= static_cast<std::size_t>(samples);
    RMat pts(n, static_cast<Eigen::Index>(total));
    std::vector<int> idx(n, 0);
    for (std::size_t s = 0; s < total; ++s) {
      RVec z(n);
      for (int j = 0; j < n; ++j) z(j) = b.lo(j) + (b.hi(j) - b.lo(j)) * idx[j] / (samples - 1);
      pts.col(static_cast<Eigen::Index>(s)) = lam * kappa(PhasePoint::from_stacked(z)).image.stacked();
      for (int j = n - 1; j >= 0; --j) {
        if (++idx[j] < samples) break;
        idx[j] = 0;
      }
    }
    return pts;
  };
  const RMat a = cloud(ku), b = cloud(kv);
  double best = INFINITY;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    best = std::min(best, (b.colwise() - a.col(i)).colwise().squaredNorm().minCoeff());
  return {ku, kv, std::sqrt(best)};
}

struct DecayRow {
  double shift = 0.0;
  double separation = 0.0;
  double norm = 0.0;
  bool used = false;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  double slope = 0.0;
  double expected = 0.0;
  double relative_error = INFINITY;
  bool passed = false;
};

/// Norms of Op(v)^* Op(u) as v's support moves away from u's. The slope of
/// log-norm against separation^2 is fitted by least squares over all but the
/// first row (and rows under the 1e-13 floor) and compared with -1/(4 eps).
inline DecayReport separation_decay(const FioSpec& op_u, const std::function<SymbolSpec(double)>& v_at,
                                    const std::vector<double>& shifts, double tolerance = 0.25,
                                    const DiscretizationOptions& o = {}) {
  if (!op_u.u.support) throw InvalidArgument("separation_decay: u needs a declared support box");
  DecayReport rep;
  rep.expected = -1.0 / (4.0 * op_u.eps);
  for (double sh : shifts) {
    FioSpec op_v = op_u;
    op_v.u = v_at(sh);
    if (!op_v.u.support) throw InvalidArgument("separation_decay: v needs a declared support box");
    const SupportPair pair = support_pair(op_u.kappa, op_u.theta_x, *op_u.u.support, *op_v.u.support);
    const Discretization disc = discretize({op_u, op_v}, o);
    const CMat prod = disc.weighted(1).adjoint() * disc.weighted(0);
    const double n = operator_norm(prod).value;
    rep.rows.push_back({sh, pair.separation, n, false});
  }
  std::vector<double> xs, ys;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    if (!(rep.rows[k].norm > 1e-13)) continue;
    rep.rows[k].used = true;
    xs.push_back(rep.rows[k].separation * rep.rows[k].separation);
    ys.push_back(std::log(rep.rows[k].norm));
  }
  if (xs.size() < 2) return rep;
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  rep.slope = sxy / sxx;
  rep.relative_error = std::abs(rep.slope - rep.expected) / std::abs(rep.expected);
  rep.passed = rep.relative_error <= tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Schur test

struct SchurReport {
  double row_sup = 0.0;
  double col_sup = 0.0;
  double schur_bound = 0.0;
  double measured = 0.0;
  bool passed = false;
};

/// Row/column L^1 sups of a sampled kernel (x rows, y columns) with cell
/// volumes hx, hy, compared with the measured operator norm.
inline SchurReport schur_row_col(const CMat& k, double hx, double hy) {
  SchurReport r;
  const RMat a = k.cwiseAbs();
  r.row_sup = a.size() ? (a.rowwise().sum() * hy).maxCoeff() : 0.0;
  r.col_sup = a.size() ? (a.colwise().sum() * hx).maxCoeff() : 0.0;
  r.schur_bound = std::sqrt(r.row_sup * r.col_sup);
  r.measured = operator_norm(k * hy, hx, hy).value;
  r.passed = r.measured <= r.schur_bound * (1.0 + 1e-2);
  return r;
}

inline SchurReport schur_row_col(const std::function<cplx(const RVec&, const RVec&)>& kernel, const GridLayout& xg,
                                 const GridLayout& yg) {
  CMat k(static_cast<Eigen::Index>(xg.size()), static_cast<Eigen::Index>(yg.size()));
  for (std::size_t i = 0; i < xg.size(); ++i)
    for (std::size_t j = 0; j < yg.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(xg.node(i), yg.node(j));
  return schur_row_col(k, xg.weight(), yg.weight());
}

}  // namespace fiokit
