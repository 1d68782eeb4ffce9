#pragma once

// Fourier integral operators with complex phase
//
//   Phi(x, y, q, p) = S + Xi.(x - X) - p.(y - q) + i/2 (x-X).Tx(x-X) + i/2 (y-q).Ty(y-q)
//   K(x, y)         = (2 pi eps)^{-3d/2} int e^{i Phi / eps} u(x, y, q, p) dq dp
//
// and their Anti-Wick counterparts, which differ by the constant
// 2^{-d/2} (det Re Tx det Re Ty)^{-1/4}.

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fiokit/fbi.hpp"
#include "fiokit/grid.hpp"
#include "fiokit/matrixcore.hpp"
#include "fiokit/parallel.hpp"
#include "fiokit/symbols.hpp"
#include "fiokit/symplectic.hpp"

namespace fiokit {

struct FioSpec {
  CanonicalMap kappa;
  SymbolSpec u;
  ComplexSymMatrix theta_x;
  ComplexSymMatrix theta_y;
  double eps;

  int dim() const { return kappa.dim(); }
  void validate() const {
    check_eps(eps);
    const int d = kappa.dim();
    if (u.d != d || theta_x.dim() != d || theta_y.dim() != d) throw InvalidArgument("FioSpec: dimension mismatch");
    if (!u.eval) throw InvalidArgument("FioSpec: symbol has no evaluator");
  }
};

/// I = awick_to_fio(Tx, Ty) * I_AWick for (x, y)-independent symbols.
inline double awick_to_fio(const ComplexSymMatrix& tx, const ComplexSymMatrix& ty) {
  return std::pow(2.0, -0.5 * tx.dim()) * std::pow(tx.det_real() * ty.det_real(), -0.25);
}

/// det(Tx + Ty)^{-1/2}: the value of I(Id; 1; Tx, Ty) as a multiple of the identity.
inline cplx identity_fio_value(const ComplexSymMatrix& tx, const ComplexSymMatrix& ty) {
  return det_inv_sqrt(tx + ty);
}

// ---------------------------------------------------------------------------
// Phase

struct PhaseValue {
  cplx value;
  CVec grad;  // (Phi_x, Phi_y, Phi_q, Phi_p)
};

inline PhaseValue phase_from_map(const FioSpec& s, const RVec& x, const RVec& y, const PhasePoint& z, const MapValue& v) {
  const int d = s.dim();
  const CVec dx = (x - v.image.q).cast<cplx>();
  const CVec dy = (y - z.q).cast<cplx>();
  const CMat& tx = s.theta_x.entries();
  const CMat& ty = s.theta_y.entries();
  PhaseValue r;
  r.value = v.S + v.image.p.dot(x - v.image.q) - z.p.dot(y - z.q) + 0.5 * kI * dx.dot(tx * dx) +
            0.5 * kI * dy.dot(ty * dy);
  r.grad.resize(4 * d);
  r.grad.segment(0, d) = v.image.p.cast<cplx>() + kI * (tx * dx);
  r.grad.segment(d, d) = -z.p.cast<cplx>() + kI * (ty * dy);
  CVec stacked(2 * d);
  stacked << dx, dy;
  r.grad.segment(2 * d, 2 * d) = w_matrix(v.F, s.theta_x, s.theta_y) * stacked;
  return r;
}

inline PhaseValue phase_eval(const FioSpec& s, const RVec& x, const RVec& y, const PhasePoint& z) {
  if (x.size() != s.dim() || y.size() != s.dim() || z.dim() != s.dim())
    throw InvalidArgument("phase_eval: dimension mismatch");
  return phase_from_map(s, x, y, z, map_eval(s.kappa, z));
}

// ---------------------------------------------------------------------------
// Shared machinery

namespace detail {

inline std::vector<MapValue> evaluate_nodes(const CanonicalMap& kappa, const PhaseSpaceLayout& ps) {
  std::vector<MapValue> out(ps.size());
  parallel_for(ps.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) out[n] = map_eval(kappa, ps.node(n));
  });
  return out;
}

inline double cutoff_sigma(double t) { return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t)) : 0.0; }

/// e^{i xi.(x - c)/eps} e^{-T(x - c).(x - c)/2eps} over the window.
inline CVec gaussian_window(const GridLayout& g, const Window& w, const RVec& c, const RVec& xi, const CMat& t, double eps) {
  CVec a(static_cast<Eigen::Index>(w.size()));
  for_window(g, w, [&](std::size_t loc, std::size_t, const RVec& x) {
    const RVec dx = x - c;
    const CVec dc = dx.cast<cplx>();
    a(static_cast<Eigen::Index>(loc)) = std::exp(kI * xi.dot(dx) / eps - dc.dot(t * dc) / (2.0 * eps));
  });
  return a;
}

inline std::vector<std::size_t> window_indices(const GridLayout& g, const Window& w) {
  std::vector<std::size_t> idx(w.size());
  for_window(g, w, [&](std::size_t loc, std::size_t flat, const RVec&) { idx[loc] = flat; });
  return idx;
}

/// One windowed vector per phase-space node; summed with optional per-node
/// weights.
struct NodeTerms {
  std::vector<std::vector<std::size_t>> index;
  std::vector<CVec> values;
  std::vector<double> radius2;  // |z_n|^2

  CVec sum(std::size_t n, const std::vector<double>* weights) const {
    const std::size_t chunks = std::min<std::size_t>(8, std::max<std::size_t>(1, values.size()));
    std::vector<CVec> part(chunks, CVec::Zero(static_cast<Eigen::Index>(n)));
    parallel_chunks(values.size(), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        const double wk = weights ? (*weights)[k] : 1.0;
        if (wk == 0.0) continue;
        for (std::size_t i = 0; i < index[k].size(); ++i)
          part[c](static_cast<Eigen::Index>(index[k][i])) += wk * values[k](static_cast<Eigen::Index>(i));
      }
    });
    CVec out = CVec::Zero(static_cast<Eigen::Index>(n));
    for (const auto& p : part) out += p;
    return out;
  }
};

struct CutoffResult {
  CVec values;
  double lambda = 0.0;
};

/// lim_{lambda -> inf} sum_n sigma(z_n / lambda) v_n, declared reached when
/// lambda and 2 lambda agree to `tol` (relative L2).
inline CutoffResult cutoff_limit(const NodeTerms& t, std::size_t n, double r0, double tol) {
  double lambda = std::max(r0, 1e-300);
  auto weights_for = [&](double lam) {
    std::vector<double> w(t.values.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = cutoff_sigma(t.radius2[k] / (lam * lam));
    return w;
  };
  auto wl = weights_for(lambda);
  CVec prev = t.sum(n, &wl);
  for (int it = 0; it < 40; ++it) {
    auto w2 = weights_for(2 * lambda);
    CVec next = t.sum(n, &w2);
    const double scale = next.norm();
    if ((next - prev).norm() <= tol * scale || scale == 0.0) return {next, 2 * lambda};
    prev = std::move(next);
    lambda *= 2;
  }
  throw ConvergenceError("cutoff limit did not stabilise (lambda reached " + std::to_string(lambda) + ")");
}

inline double box_radius(const Box& b) { return b.lo.cwiseAbs().cwiseMax(b.hi.cwiseAbs()).norm(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Phase-space extent of sampled functions

/// Box in R^{2d} holding the phase-space content of f: positions where
/// |f| > tol max|f|, momenta where the per-axis spectrum exceeds tol times its
/// maximum (p = eps * angular frequency).
inline Box estimate_phase_space_box(const GridFunction& f, double eps, double tol = 1e-10) {
  const int d = f.layout.dim();
  const Box pos = estimate_support(f, tol);
  RVec plo(d), phi(d);
  Eigen::FFT<double> fft;
  for (int k = 0; k < d; ++k) {
    const int n = f.layout.n(k);
    const int m = 2 * n;
    std::vector<double> spec(m, 0.0);
    const std::size_t stride = f.layout.stride(k);
    const std::size_t lines = f.layout.size() / n;
    std::vector<cplx> in(m), out(m);
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t outer = l / stride, inner = l % stride;
      const std::size_t base = outer * stride * n + inner;
      std::fill(in.begin(), in.end(), cplx(0.0));
      for (int i = 0; i < n; ++i) in[i] = f.values(static_cast<Eigen::Index>(base + i * stride));
      fft.fwd(out, in);
      for (int i = 0; i < m; ++i) spec[i] = std::max(spec[i], std::abs(out[i]));
    }
    const double top = *std::max_element(spec.begin(), spec.end());
    const double dw = 2 * kPi / (m * f.layout.spacing(k));
    double lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i < m; ++i) {
      if (spec[i] <= tol * top) continue;
      // Forward FFT uses e^{-i w x}: bin i has angular frequency i dw, wrapped.
      const double w = (i < m / 2 ? i : i - m) * dw;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    if (!(lo <= hi)) lo = hi = 0.0;
    plo(k) = eps * (lo - dw);
    phi(k) = eps * (hi + dw);
  }
  RVec lo(2 * d), hi(2 * d);
  if (!(pos.lo.array() <= pos.hi.array()).all()) {
    lo << RVec::Zero(d), plo;
    hi << RVec::Zero(d), phi;
  } else {
    lo << pos.lo, plo;
    hi << pos.hi, phi;
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Phase-space grids for operators

/// Grid over the part of `region` where the symbol lives, fine enough for the
/// Gaussian factors and for the symbol's own feature scale.
inline PhaseSpaceLayout symbol_layout(const FioSpec& s, const Box& region, double spacing_factor = 0.4) {
  const int d = s.dim();
  Box b = region;
  if (s.u.support) {
    b.lo = b.lo.cwiseMax(s.u.support->lo);
    b.hi = b.hi.cwiseMin(s.u.support->hi);
  }
  for (int j = 0; j < 2 * d; ++j)
    if (!(b.hi(j) > b.lo(j))) {
      // Degenerate intersection: keep a tiny box so callers get a valid (zero) operator.
      const double c = 0.5 * (b.lo(j) + b.hi(j));
      b.lo(j) = c - 1e-6;
      b.hi(j) = c + 1e-6;
    }
  const ComplexSymMatrix& ty = s.theta_y;
  const ComplexSymMatrix& tx = s.theta_x;
  double hq = spacing_factor * std::sqrt(s.eps / std::max(ty.gamma_eff(), tx.gamma_eff()));
  double hp = spacing_factor * std::sqrt(s.eps * std::min(ty.lambda(), tx.lambda()));
  const double feature = s.u.params.value("feature_scale", INFINITY);
  hq = std::min(hq, feature / 8.0);
  hp = std::min(hp, feature / 8.0);
  return {detail::layout_for_box(b.lo.head(d), b.hi.head(d), hq), detail::layout_for_box(b.lo.tail(d), b.hi.tail(d), hp)};
}

// ---------------------------------------------------------------------------
// Kernel

struct KernelOptions {
  std::optional<PhaseSpaceLayout> ps;  // explicit (q, p) grid
  bool cutoff = false;                 // sigma-cutoff limit instead of a support box
  double cutoff_tol = 1e-8;
  double cutoff_lambda_max = 256.0;
};

namespace detail {

inline cplx kernel_sum(const FioSpec& s, const RVec& x, const RVec& y, const PhaseSpaceLayout& ps,
                       const std::vector<double>* radius_scale, std::vector<cplx>* per_scale) {
  const double eps = s.eps;
  const double pref = std::pow(2 * kPi * eps, -1.5 * s.dim()) * ps.weight();
  const double ry = window_radius(eps, s.theta_y);
  cplx total = 0.0;
  if (per_scale) per_scale->assign(radius_scale->size(), cplx(0.0));
  for (std::size_t iq = 0; iq < ps.q.size(); ++iq) {
    const RVec q = ps.q.node(iq);
    if ((q - y).cwiseAbs().maxCoeff() > ry) continue;  // e^{-Im Phi/eps} < e^{-32}
    for (std::size_t ip = 0; ip < ps.p.size(); ++ip) {
      const PhasePoint z(q, ps.p.node(ip));
      const MapValue v = map_eval(s.kappa, z);
      const PhaseValue ph = phase_from_map(s, x, y, z, v);
      if (ph.value.imag() / eps > 40.0) continue;
      const cplx term = pref * std::exp(kI * ph.value / eps) * s.u(x, y, z.q, z.p);
      if (per_scale) {
        const double r2 = z.q.squaredNorm() + z.p.squaredNorm();
        for (std::size_t k = 0; k < radius_scale->size(); ++k)
          (*per_scale)[k] += term * cutoff_sigma(r2 / ((*radius_scale)[k] * (*radius_scale)[k]));
      } else {
        total += term;
      }
    }
  }
  return total;
}

}  // namespace detail

/// K(x, y) by a Riemann sum over the (q, p) grid. Without an explicit grid the
/// symbol's support box is used; symbols without one need `cutoff`.
inline cplx kernel_eval(const FioSpec& s, const RVec& x, const RVec& y, const KernelOptions& opt = {}) {
  s.validate();
  const int d = s.dim();
  if (x.size() != d || y.size() != d) throw InvalidArgument("kernel_eval: dimension mismatch");
  if (s.u.is_zero()) return 0.0;
  if (opt.ps) return detail::kernel_sum(s, x, y, *opt.ps, nullptr, nullptr);
  if (!opt.cutoff) {
    if (!s.u.support) throw InvalidArgument("kernel_eval: symbol has no support box; request cutoff mode");
    return detail::kernel_sum(s, x, y, symbol_layout(s, *s.u.support, 0.1), nullptr, nullptr);
  }
  // Cutoff mode: q only matters near y; p runs over [-2 lambda, 2 lambda].
  const double ry = window_radius(s.eps, s.theta_y);
  const double reach = (x - y).norm() + 2 * ry + 1.0;
  const double h = std::min(0.1 * std::sqrt(s.eps), kPi * s.eps / (8.0 * reach));
  double lambda = 4.0;
  for (; lambda <= opt.cutoff_lambda_max; lambda *= 2) {
    const double r = 2 * lambda;
    RVec qlo = y.array() - ry, qhi = y.array() + ry;
    RVec plo = RVec::Constant(d, -r), phi = RVec::Constant(d, r);
    PhaseSpaceLayout ps{detail::layout_for_box(qlo, qhi, h), detail::layout_for_box(plo, phi, h)};
    std::vector<double> scales{lambda, 2 * lambda};
    std::vector<cplx> vals;
    detail::kernel_sum(s, x, y, ps, &scales, &vals);
    const double scale = std::max(std::abs(vals[1]), std::pow(2 * kPi * s.eps, -0.5 * d));
    if (std::abs(vals[1] - vals[0]) <= opt.cutoff_tol * scale) return vals[1];
  }
  throw ConvergenceError("kernel_eval: cutoff limit did not stabilise up to lambda=" +
                         std::to_string(opt.cutoff_lambda_max));
}

/// Raw kernel values K(x_i, y_j) assembled from windowed rank-one pieces.
/// Windows are cut at `window_factor` Gaussian widths.
inline CMat fio_kernel_matrix(const FioSpec& s, const GridLayout& xg, const GridLayout& yg, const PhaseSpaceLayout& ps,
                              double window_factor = 7.0) {
  s.validate();
  const int d = s.dim();
  if (xg.dim() != d || yg.dim() != d || ps.dim() != d) throw InvalidArgument("fio_kernel_matrix: dimension mismatch");
  CMat k = CMat::Zero(static_cast<Eigen::Index>(xg.size()), static_cast<Eigen::Index>(yg.size()));
  if (s.u.is_zero()) return k;
  const double eps = s.eps;
  check_resolution(yg, eps, s.theta_y, ps.p_max(), "fio_kernel_matrix (y grid)");
  const std::vector<MapValue> nodes = detail::evaluate_nodes(s.kappa, ps);
  double xi_max = 0.0;
  for (const auto& v : nodes) xi_max = std::max(xi_max, v.image.p.cwiseAbs().maxCoeff());
  check_resolution(xg, eps, s.theta_x, xi_max, "fio_kernel_matrix (x grid)");

  const double pref = std::pow(2 * kPi * eps, -1.5 * d) * ps.weight();
  std::vector<cplx> coef(nodes.size());
  double cmax = 0.0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const PhasePoint z = ps.node(n);
    const cplx uq = s.u.separable() ? s.u.qp(z.q, z.p) : cplx(1.0);
    coef[n] = pref * std::polar(1.0, nodes[n].S / eps) * uq;
    cmax = std::max(cmax, std::abs(coef[n]));
  }
  if (cmax == 0.0) return k;
  const double rx = window_factor * std::sqrt(eps / s.theta_x.lambda());
  const double ry = window_factor * std::sqrt(eps / s.theta_y.lambda());
  const CMat& tx = s.theta_x.entries();
  const CMat& ty = s.theta_y.entries();
  const Eigen::Index nx = k.rows();
  const bool general = !s.u.separable();

  parallel_for(static_cast<std::size_t>(nx), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      if (std::abs(coef[n]) <= 1e-16 * cmax) continue;
      const MapValue& v = nodes[n];
      const detail::Window wx = detail::make_window(xg, v.image.q, rx);
      if (wx.empty) continue;
      const PhasePoint z = ps.node(n);
      if (d == 1) {
        const std::size_t a0 = std::max<std::size_t>(r0, wx.first[0]);
        const std::size_t a1 = std::min<std::size_t>(r1, wx.first[0] + wx.count[0]);
        if (a0 >= a1) continue;
      }
      const detail::Window wy = detail::make_window(yg, z.q, ry);
      if (wy.empty) continue;
      const CVec a = detail::gaussian_window(xg, wx, v.image.q, v.image.p, tx, eps) * coef[n];
      const CVec b = detail::gaussian_window(yg, wy, z.q, -z.p, ty, eps);
      if (d == 1 && !general) {
        const long a0 = std::max<long>(static_cast<long>(r0), wx.first[0]);
        const long a1 = std::min<long>(static_cast<long>(r1), wx.first[0] + wx.count[0]);
        k.block(a0, wy.first[0], a1 - a0, wy.count[0]).noalias() +=
            a.segment(a0 - wx.first[0], a1 - a0) * b.transpose();
        continue;
      }
      const auto ix = detail::window_indices(xg, wx);
      const auto iy = detail::window_indices(yg, wy);
      for (std::size_t i = 0; i < ix.size(); ++i) {
        if (ix[i] < r0 || ix[i] >= r1) continue;
        const RVec x = general ? xg.node(ix[i]) : RVec();
        for (std::size_t j = 0; j < iy.size(); ++j) {
          cplx val = a(static_cast<Eigen::Index>(i)) * b(static_cast<Eigen::Index>(j));
          if (general) val *= s.u(x, yg.node(iy[j]), z.q, z.p);
          k(static_cast<Eigen::Index>(ix[i]), static_cast<Eigen::Index>(iy[j])) += val;
        }
      }
    }
  });
  if (s.u.separable() && s.u.xy) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      const RVec y = yg.node(static_cast<std::size_t>(j));
      for (Eigen::Index i = 0; i < k.rows(); ++i)
        if (k(i, j) != cplx(0.0)) k(i, j) *= s.u.xy(xg.node(static_cast<std::size_t>(i)), y);
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Application to grid functions

enum class FioRoute { automatic, fbi, direct };

struct ApplyOptions {
  FioRoute route = FioRoute::automatic;
  std::optional<PhaseSpaceLayout> ps;  // default: phase-space box of phi (and symbol support)
  std::optional<GridLayout> x;         // default: phi's grid
  double cutoff_tol = 1e-8;
};

struct ApplyResult {
  GridFunction out;
  FioRoute route = FioRoute::fbi;
  bool cutoff_used = false;
  double cutoff_lambda = 0.0;
  std::size_t nodes = 0;
};

namespace detail {

inline PhaseSpaceLayout default_ps(const FioSpec& s, const GridFunction& phi) {
  const Box content = estimate_phase_space_box(phi, s.eps);
  const TransformLayouts tl = auto_layouts(s.eps, s.theta_y.conj(), content);
  return symbol_layout(s, tl.ps.box());
}

/// Anti-Wick (awick = true) or FIO contributions per node, before any cutoff.
inline NodeTerms build_terms(const FioSpec& s, const GridFunction& phi, const GridLayout& xg, const PhaseSpaceLayout& ps,
                             FioRoute route, bool awick) {
  const int d = s.dim();
  const double eps = s.eps;
  const std::vector<MapValue> nodes = evaluate_nodes(s.kappa, ps);
  double xi_max = 0.0;
  for (const auto& v : nodes) xi_max = std::max(xi_max, v.image.p.cwiseAbs().maxCoeff());
  check_resolution(xg, eps, s.theta_x, xi_max, "apply (output grid)");
  const double rx = window_radius(eps, s.theta_x);
  const CMat& tx = s.theta_x.entries();
  // Per-node vectors on the output grid; the normalisation below turns
  // sum_n into the (q, p) integral with the requested prefactor.
  const double to_fio = awick_to_fio(s.theta_x, s.theta_y);
  NodeTerms t;
  std::vector<cplx> c(nodes.size(), cplx(0.0));
  if (route == FioRoute::fbi) {
    const PhaseSpaceField w = fbi_forward(eps, s.theta_y.conj(), phi, ps);
    const double pref = std::pow(2 * kPi * eps, -0.5 * d) * ps.weight() * coherent_norm_const(eps, s.theta_x) *
                        (awick ? 1.0 : to_fio);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const PhasePoint z = ps.node(n);
      c[n] = pref * std::polar(1.0, nodes[n].S / eps) * s.u.qp(z.q, z.p) * w.values(static_cast<Eigen::Index>(n));
    }
  } else {
    check_resolution(phi.layout, eps, s.theta_y, ps.p_max(), "apply (input grid)");
    const double ry = window_radius(eps, s.theta_y);
    const CMat& ty = s.theta_y.entries();
    const double pref = std::pow(2 * kPi * eps, -1.5 * d) * ps.weight() * phi.layout.weight() / (awick ? to_fio : 1.0);
    // For separable symbols without an (x, y) factor the y-sum is a scalar.
    std::vector<CVec> partial(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t n = b; n < e; ++n) {
        const PhasePoint z = ps.node(n);
        const Window wy = make_window(phi.layout, z.q, ry);
        if (wy.empty) continue;
        const CVec bv = gaussian_window(phi.layout, wy, z.q, -z.p, ty, eps);
        const auto iy = window_indices(phi.layout, wy);
        if (s.u.separable() && !s.u.xy) {
          cplx acc = 0.0;
          for (std::size_t j = 0; j < iy.size(); ++j)
            acc += bv(static_cast<Eigen::Index>(j)) * phi.values(static_cast<Eigen::Index>(iy[j]));
          c[n] = pref * std::polar(1.0, nodes[n].S / eps) * s.u.qp(z.q, z.p) * acc;
          continue;
        }
        const Window wx = make_window(xg, nodes[n].image.q, rx);
        if (wx.empty) continue;
        const auto ix = window_indices(xg, wx);
        const cplx uq = s.u.separable() ? s.u.qp(z.q, z.p) : cplx(1.0);
        CVec col(static_cast<Eigen::Index>(ix.size()));
        for (std::size_t i = 0; i < ix.size(); ++i) {
          const RVec x = xg.node(ix[i]);
          cplx acc = 0.0;
          for (std::size_t j = 0; j < iy.size(); ++j) {
            const RVec y = phi.layout.node(iy[j]);
            const cplx uu = s.u.separable() ? s.u.xy(x, y) : s.u(x, y, z.q, z.p);
            acc += uu * bv(static_cast<Eigen::Index>(j)) * phi.values(static_cast<Eigen::Index>(iy[j]));
          }
          col(static_cast<Eigen::Index>(i)) = acc;
        }
        partial[n] = pref * std::polar(1.0, nodes[n].S / eps) * uq * col;
        c[n] = 1.0;
      }
    });
    if (!(s.u.separable() && !s.u.xy)) {
      double vmax = 0.0;
      for (const auto& p : partial) vmax = std::max(vmax, p.size() ? p.cwiseAbs().maxCoeff() : 0.0);
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        if (partial[n].size() == 0 || partial[n].cwiseAbs().maxCoeff() <= 1e-17 * vmax) continue;
        const Window wx = make_window(xg, nodes[n].image.q, rx);
        const CVec a = gaussian_window(xg, wx, nodes[n].image.q, nodes[n].image.p, tx, eps);
        t.index.push_back(window_indices(xg, wx));
        t.values.push_back(a.cwiseProduct(partial[n]));
        const PhasePoint z = ps.node(n);
        t.radius2.push_back(z.q.squaredNorm() + z.p.squaredNorm());
      }
      return t;
    }
    // Scalar coefficients: fall through to the Gaussian superposition.
  }
  double cmax = 0.0;
  for (const auto& v : c) cmax = std::max(cmax, std::abs(v));
  if (cmax == 0.0) return t;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    if (std::abs(c[n]) <= 1e-17 * cmax) continue;
    const Window wx = make_window(xg, nodes[n].image.q, rx);
    if (wx.empty) continue;
    CVec a = gaussian_window(xg, wx, nodes[n].image.q, nodes[n].image.p, tx, eps);
    t.index.push_back(window_indices(xg, wx));
    t.values.push_back(a * c[n]);
    const PhasePoint z = ps.node(n);
    t.radius2.push_back(z.q.squaredNorm() + z.p.squaredNorm());
  }
  return t;
}

inline ApplyResult apply_impl(const FioSpec& s, const GridFunction& phi, const ApplyOptions& opt, bool awick) {
  s.validate();
  if (phi.layout.dim() != s.dim()) throw InvalidArgument("apply: function dimension does not match operator");
  FioRoute route = opt.route;
  if (route == FioRoute::automatic) route = s.u.depends_on_xy || !s.u.separable() ? FioRoute::direct : FioRoute::fbi;
  if (route == FioRoute::fbi && (s.u.depends_on_xy || !s.u.separable()))
    throw InvalidArgument("apply: the FBI route needs a symbol independent of (x, y)");
  const GridLayout xg = opt.x ? *opt.x : phi.layout;
  ApplyResult r;
  r.route = route;
  r.out = GridFunction::zeros(xg);
  if (s.u.is_zero() || phi.values.isZero(0.0)) return r;
  const PhaseSpaceLayout ps = opt.ps ? *opt.ps : default_ps(s, phi);
  r.nodes = ps.size();
  const NodeTerms t = build_terms(s, phi, xg, ps, route, awick);
  if (s.u.support || opt.ps) {
    r.out.values = t.sum(xg.size(), nullptr);
    return r;
  }
  const CutoffResult c = cutoff_limit(t, xg.size(), box_radius(ps.box()), opt.cutoff_tol);
  r.out.values = c.values;
  r.cutoff_used = true;
  r.cutoff_lambda = c.lambda;
  return r;
}

}  // namespace detail

/// I(kappa; u; Tx, Ty) phi. Symbols independent of (x, y) go through the FBI
/// transform; others through direct kernel quadrature. Symbols without a
/// support box are handled by the sigma-cutoff limit over the phase-space
/// grid.
inline ApplyResult apply_fio_ex(const FioSpec& s, const GridFunction& phi, const ApplyOptions& opt = {}) {
  return detail::apply_impl(s, phi, opt, false);
}

inline GridFunction apply_fio(const FioSpec& s, const GridFunction& phi, const ApplyOptions& opt = {}) {
  return apply_fio_ex(s, phi, opt).out;
}

/// I_AWick(kappa; u; Tx, Ty) phi.
inline GridFunction apply_antiwick(const FioSpec& s, const GridFunction& phi, const ApplyOptions& opt = {}) {
  return detail::apply_impl(s, phi, opt, true).out;
}

/// < [W(Tx) psi] o kappa | e^{iS/eps} u W(conj Ty) phi >_{L^2(q, p)} by a Riemann
/// sum over `ps`; W(Tx) psi is evaluated at the off-grid points kappa(q, p)
/// directly.
inline cplx antiwick_form(const FioSpec& s, const GridFunction& psi, const GridFunction& phi, const PhaseSpaceLayout& ps) {
  s.validate();
  const double eps = s.eps;
  const int d = s.dim();
  const PhaseSpaceField wphi = fbi_forward(eps, s.theta_y.conj(), phi, ps);
  const std::vector<MapValue> nodes = detail::evaluate_nodes(s.kappa, ps);
  const double rx = window_radius(eps, s.theta_x);
  const double pref = std::pow(2 * kPi * eps, -0.5 * d) * coherent_norm_const(eps, s.theta_x) * psi.layout.weight();
  const CMat txbar = s.theta_x.entries().conjugate();
  cplx total = 0.0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const PhasePoint z = ps.node(n);
    const cplx right = std::polar(1.0, nodes[n].S / eps) * s.u.qp(z.q, z.p) * wphi.values(static_cast<Eigen::Index>(n));
    if (right == cplx(0.0)) continue;
    const detail::Window w = detail::make_window(psi.layout, nodes[n].image.q, rx);
    if (w.empty) continue;
    // W(Tx) psi at (X, Xi): sum of conj(g^{Tx}_{X,Xi}) psi.
    const CVec g = detail::gaussian_window(psi.layout, w, nodes[n].image.q, -nodes[n].image.p, txbar, eps);
    const auto idx = detail::window_indices(psi.layout, w);
    cplx acc = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) acc += g(static_cast<Eigen::Index>(i)) * psi.values(static_cast<Eigen::Index>(idx[i]));
    total += std::conj(pref * acc) * right;
  }
  return total * ps.weight();
}

// ---------------------------------------------------------------------------
// Adjoint

namespace detail {

/// Bounding box of kappa(b), from 33 samples per axis on the faces of b, grown
/// by the largest image-sample gap.
inline Box image_box(const CanonicalMap& kappa, const Box& b) {
  const int n = b.dim();
  const int m = 33;
  Box out{RVec::Constant(n, INFINITY), RVec::Constant(n, -INFINITY)};
  double fmax = 0.0;
  std::vector<int> idx(n, 0);
  std::size_t total = 1;
  for (int j = 0; j < n; ++j) total *= m;
  for (std::size_t s = 0; s < total; ++s) {
    bool face = false;
    RVec z(n);
    for (int j = 0; j < n; ++j) {
      face = face || idx[j] == 0 || idx[j] == m - 1;
      z(j) = b.lo(j) + (b.hi(j) - b.lo(j)) * idx[j] / (m - 1);
    }
    if (face) {
      const MapValue v = kappa(PhasePoint::from_stacked(z));
      const RVec w = v.image.stacked();
      out.lo = out.lo.cwiseMin(w);
      out.hi = out.hi.cwiseMax(w);
      fmax = std::max(fmax, Eigen::JacobiSVD<RMat>(v.F).singularValues()(0));
    }
    for (int j = n - 1; j >= 0; --j) {
      if (++idx[j] < m) break;
      idx[j] = 0;
    }
  }
  const double gap = fmax * (b.hi - b.lo).maxCoeff() / (m - 1);
  out.lo.array() -= gap;
  out.hi.array() += gap;
  return out;
}

}  // namespace detail

/// Spec of the formal adjoint, up to a unimodular constant e^{iC/eps}:
/// I(kappa^{-1}; u^kappa; conj Ty, conj Tx), u^kappa(x, y, z) = conj u(y, x, kappa^{-1} z).
inline FioSpec adjoint_spec(const FioSpec& s) {
  s.validate();
  const CanonicalMap inv = invert(s.kappa);
  SymbolSpec v = s.u;
  v.name = "adjoint(" + s.u.name + ")";
  const SymbolFn f = s.u.eval;
  v.eval = [f, inv](const RVec& x, const RVec& y, const RVec& q, const RVec& p) {
    const MapValue m = inv(PhasePoint(q, p));
    return std::conj(f(y, x, m.image.q, m.image.p));
  };
  if (s.u.qp) {
    const PairFn g = s.u.qp;
    v.qp = [g, inv](const RVec& q, const RVec& p) {
      const MapValue m = inv(PhasePoint(q, p));
      return std::conj(g(m.image.q, m.image.p));
    };
  }
  if (s.u.xy) {
    const PairFn g = s.u.xy;
    v.xy = [g](const RVec& x, const RVec& y) { return std::conj(g(y, x)); };
  }
  if (s.u.support) v.support = detail::image_box(s.kappa, *s.u.support);
  v.derivative_bounds.clear();
  return FioSpec{inv, v, s.theta_y.conj(), s.theta_x.conj(), s.eps};
}

// ---------------------------------------------------------------------------
// Rescaling

/// Relative L2 difference between I^eps(kappa; u) phi and
/// (T^eps)^* I^1(kappa^(eps); u^(eps)) T^eps phi, each side on its own
/// automatically chosen phase-space grid.
inline double rescale_check(const FioSpec& s, const GridFunction& phi) {
  s.validate();
  const GridFunction lhs = apply_fio(s, phi);
  const GridFunction phi1 = scale_op(s.eps, ScaleDirection::forward, phi);
  const FioSpec s1{rescaled_map(s.kappa, s.eps), symbols::dilated(s.u, s.eps), s.theta_x, s.theta_y, 1.0};
  const GridFunction out1 = apply_fio(s1, phi1);
  GridFunction rhs = scale_op(s.eps, ScaleDirection::adjoint, out1, lhs.layout);
  const double scale = lhs.norm();
  if (scale == 0.0) return rhs.norm();
  return (lhs.values - rhs.values).norm() * std::sqrt(lhs.layout.weight()) / scale;
}

}  // namespace fiokit
