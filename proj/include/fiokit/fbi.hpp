#pragma once

// Coherent states, the eps-scaled FBI transform and its inverse, and the
// unitary dilations T^eps.
//
//   g(y)    = (det Re T)^{1/4} (pi eps)^{-d/4} e^{i p.(y-q)/eps} e^{-T(y-q).(y-q)/2eps}
//   W phi   = (2 pi eps)^{-d/2} < g_{q,p} | phi >
//   Winv F  = (2 pi eps)^{-d/2} int F(q,p) g_{q,p} dq dp
//   T phi   = eps^{d/4} phi(sqrt(eps) y)

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fiokit/grid.hpp"
#include "fiokit/matrixcore.hpp"
#include "fiokit/parallel.hpp"

namespace fiokit {

/// Gaussian windows are cut at this many standard widths sqrt(eps/lambda)
/// (tail e^{-32}).
inline constexpr double kWindowRadius = 8.0;

inline void check_eps(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("eps must lie in (0, 1], got " + std::to_string(eps));
}

/// Largest spacing that resolves a coherent state of width theta and momentum
/// up to p_abs (per axis): min(sqrt(eps/gamma)/4, pi eps / (4 (p_abs + 1))),
/// with gamma the momentum-spread eigenvalue of theta.
inline double resolution_spacing(double eps, const ComplexSymMatrix& theta, double p_abs) {
  return std::min(std::sqrt(eps / theta.gamma_eff()) / 4.0, kPi * eps / (4.0 * (std::abs(p_abs) + 1.0)));
}

inline void check_resolution(const GridLayout& g, double eps, const ComplexSymMatrix& theta, double p_abs,
                             const std::string& what) {
  const double need = resolution_spacing(eps, theta, p_abs);
  if (g.max_spacing() > need * (1.0 + 1e-12))
    throw ResolutionError(what + ": grid spacing " + std::to_string(g.max_spacing()) + " exceeds " +
                          std::to_string(need) + " required for eps=" + std::to_string(eps) +
                          ", |p|=" + std::to_string(p_abs));
}

inline double coherent_norm_const(double eps, const ComplexSymMatrix& theta) {
  const int d = theta.dim();
  return std::pow(theta.det_real(), 0.25) * std::pow(kPi * eps, -0.25 * d);
}

inline double window_radius(double eps, const ComplexSymMatrix& theta, double cut = kWindowRadius) {
  return cut * std::sqrt(eps / theta.lambda());
}

inline GridFunction coherent_state(double eps, const ComplexSymMatrix& theta, const RVec& q, const RVec& p,
                                   const GridLayout& grid) {
  check_eps(eps);
  const int d = theta.dim();
  if (q.size() != d || p.size() != d || grid.dim() != d)
    throw InvalidArgument("coherent_state: dimension mismatch");
  check_resolution(grid, eps, theta, p.cwiseAbs().maxCoeff(), "coherent_state");
  const double c = coherent_norm_const(eps, theta);
  const CMat& t = theta.entries();
  return sample(grid, [&](const RVec& y) {
    const RVec v = y - q;
    const cplx quad = v.cast<cplx>().dot(t * v.cast<cplx>());
    return c * std::exp(kI * p.dot(v) / eps - quad / (2.0 * eps));
  });
}

namespace detail {

using RowCMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mode-k product of a row-major tensor with dims `dims`: axis k of length
/// dims[k] is contracted against the columns of m (rows x dims[k]).
inline CVec mode_product(const CVec& t, std::vector<int>& dims, int k, const CMat& m) {
  long outer = 1, inner = 1;
  for (int j = 0; j < k; ++j) outer *= dims[j];
  for (std::size_t j = k + 1; j < dims.size(); ++j) inner *= dims[j];
  const long dk = dims[k];
  const long r = m.rows();
  CVec out(outer * r * inner);
  for (long o = 0; o < outer; ++o) {
    Eigen::Map<const RowCMat> in(t.data() + o * dk * inner, dk, inner);
    Eigen::Map<RowCMat> res(out.data() + o * r * inner, r, inner);
    res.noalias() = m * in;
  }
  dims[k] = static_cast<int>(r);
  return out;
}

/// e^{sign i p_a y_b / eps} for the axis grids of p and y.
inline CMat phase_matrix(const RVec& p, const RVec& y, double eps, double sign) {
  CMat e(p.size(), y.size());
  for (Eigen::Index a = 0; a < p.size(); ++a)
    for (Eigen::Index b = 0; b < y.size(); ++b) e(a, b) = std::polar(1.0, sign * p(a) * y(b) / eps);
  return e;
}

struct Window {
  std::vector<int> first, count;
  bool empty = false;
  std::size_t size() const {
    std::size_t s = 1;
    for (int c : count) s *= static_cast<std::size_t>(c);
    return s;
  }
};

inline Window make_window(const GridLayout& g, const RVec& center, double r) {
  Window w;
  for (int k = 0; k < g.dim(); ++k) {
    auto [a, b] = g.window(k, center(k), r);
    w.first.push_back(a);
    w.count.push_back(std::max(0, b - a + 1));
    if (b < a) w.empty = true;
  }
  return w;
}

/// Calls f(local_index, global_flat_index, node) for every node in the window.
template <class F>
void for_window(const GridLayout& g, const Window& w, F&& f) {
  if (w.empty) return;
  const int d = g.dim();
  std::vector<int> idx(d, 0);
  RVec x(d);
  const std::size_t n = w.size();
  for (std::size_t local = 0; local < n; ++local) {
    std::size_t flat = 0;
    for (int k = 0; k < d; ++k) {
      const int gi = w.first[k] + idx[k];
      flat += static_cast<std::size_t>(gi) * g.stride(k);
      x(k) = g.coord(k, gi);
    }
    f(local, flat, x);
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < w.count[k]) break;
      idx[k] = 0;
    }
  }
}

}  // namespace detail

inline PhaseSpaceField fbi_forward(double eps, const ComplexSymMatrix& theta, const GridFunction& phi,
                                   const PhaseSpaceLayout& ps) {
  check_eps(eps);
  const int d = theta.dim();
  if (phi.layout.dim() != d || ps.dim() != d) throw InvalidArgument("fbi_forward: dimension mismatch");
  check_resolution(phi.layout, eps, theta, ps.p_max(), "fbi_forward");
  const GridLayout& yg = phi.layout;
  std::vector<CMat> e(d);
  std::vector<RVec> paxis(d);
  for (int k = 0; k < d; ++k) {
    paxis[k] = ps.p.axis(k);
    e[k] = detail::phase_matrix(paxis[k], yg.axis(k), eps, -1.0);
  }
  const double r = window_radius(eps, theta);
  const cplx pref = coherent_norm_const(eps, theta) * std::pow(2 * kPi * eps, -0.5 * d) * yg.weight();
  const CMat tbar = theta.entries().conjugate();
  PhaseSpaceField out = PhaseSpaceField::zeros(ps);
  const std::size_t np = ps.p.size();
  parallel_for(ps.q.size(), [&](std::size_t b, std::size_t end) {
    for (std::size_t iq = b; iq < end; ++iq) {
      const RVec q = ps.q.node(iq);
      const detail::Window w = detail::make_window(yg, q, r);
      if (w.empty) continue;
      CVec t(static_cast<Eigen::Index>(w.size()));
      detail::for_window(yg, w, [&](std::size_t loc, std::size_t flat, const RVec& y) {
        const CVec v = (y - q).cast<cplx>();
        t(static_cast<Eigen::Index>(loc)) =
            std::exp(-v.dot(tbar * v) / (2.0 * eps)) * phi.values(static_cast<Eigen::Index>(flat));
      });
      std::vector<int> dims = w.count;
      for (int k = 0; k < d; ++k) t = detail::mode_product(t, dims, k, e[k].middleCols(w.first[k], w.count[k]));
      for (std::size_t ip = 0; ip < np; ++ip) {
        const RVec p = ps.p.node(ip);
        out.values(static_cast<Eigen::Index>(iq * np + ip)) =
            pref * std::polar(1.0, p.dot(q) / eps) * t(static_cast<Eigen::Index>(ip));
      }
    }
  });
  return out;
}

inline GridFunction fbi_inverse(double eps, const ComplexSymMatrix& theta, const PhaseSpaceField& field,
                                const GridLayout& grid) {
  check_eps(eps);
  const int d = theta.dim();
  const PhaseSpaceLayout& ps = field.layout;
  if (grid.dim() != d || ps.dim() != d) throw InvalidArgument("fbi_inverse: dimension mismatch");
  check_resolution(grid, eps, theta, ps.p_max(), "fbi_inverse");
  std::vector<CMat> e(d);
  for (int k = 0; k < d; ++k) e[k] = detail::phase_matrix(grid.axis(k), ps.p.axis(k), eps, 1.0);
  const double r = window_radius(eps, theta);
  const cplx pref = coherent_norm_const(eps, theta) * std::pow(2 * kPi * eps, -0.5 * d) * ps.weight();
  const CMat& t = theta.entries();
  const std::size_t np = ps.p.size();
  const std::size_t nq = ps.q.size();
  // Fixed chunking keeps the summation order independent of the worker count.
  const std::size_t chunks = std::min<std::size_t>(8, nq);
  std::vector<CVec> partial(chunks, CVec::Zero(static_cast<Eigen::Index>(grid.size())));
  parallel_chunks(nq, chunks, [&](std::size_t c, std::size_t b, std::size_t end) {
    CVec& acc = partial[c];
    for (std::size_t iq = b; iq < end; ++iq) {
      const RVec q = ps.q.node(iq);
      const detail::Window w = detail::make_window(grid, q, r);
      if (w.empty) continue;
      CVec v(static_cast<Eigen::Index>(np));
      bool any = false;
      for (std::size_t ip = 0; ip < np; ++ip) {
        const cplx f = field.values(static_cast<Eigen::Index>(iq * np + ip));
        any = any || f != cplx(0.0);
        v(static_cast<Eigen::Index>(ip)) = f * std::polar(1.0, -ps.p.node(ip).dot(q) / eps);
      }
      if (!any) continue;
      std::vector<int> dims(d);
      for (int k = 0; k < d; ++k) dims[k] = ps.p.n(k);
      for (int k = 0; k < d; ++k) v = detail::mode_product(v, dims, k, e[k].middleRows(w.first[k], w.count[k]));
      detail::for_window(grid, w, [&](std::size_t loc, std::size_t flat, const RVec& y) {
        const CVec u = (y - q).cast<cplx>();
        acc(static_cast<Eigen::Index>(flat)) += std::exp(-u.dot(t * u) / (2.0 * eps)) * v(static_cast<Eigen::Index>(loc));
      });
    }
  });
  GridFunction out = GridFunction::zeros(grid);
  for (const auto& p : partial) out.values += p;
  out.values *= pref;
  return out;
}

// ---------------------------------------------------------------------------
// Dilations

enum class ScaleDirection { forward, adjoint };

/// forward: T^eps f, living on the grid divided by sqrt(eps).
/// adjoint: (T^eps)^* f, living on the grid multiplied by sqrt(eps).
inline GridFunction scale_op(double eps, ScaleDirection dir, const GridFunction& f) {
  check_eps(eps);
  const int d = f.layout.dim();
  const double s = std::sqrt(eps);
  if (dir == ScaleDirection::forward)
    return GridFunction(f.layout.scaled(1.0 / s), f.values * std::pow(eps, 0.25 * d));
  return GridFunction(f.layout.scaled(s), f.values * std::pow(eps, -0.25 * d));
}

/// As above, insisting that the result lands on `target`.
inline GridFunction scale_op(double eps, ScaleDirection dir, const GridFunction& f, const GridLayout& target) {
  GridFunction g = scale_op(eps, dir, f);
  if (!g.layout.same_as(target)) throw InvalidArgument("scale_op: target grid is not the rescaled source grid");
  g.layout = target;
  return g;
}

/// T^eps_{2d} acting on phase-space data.
inline PhaseSpaceField scale_op(double eps, ScaleDirection dir, const PhaseSpaceField& f) {
  check_eps(eps);
  const int d = f.layout.dim();
  const double s = std::sqrt(eps);
  if (dir == ScaleDirection::forward) return PhaseSpaceField(f.layout.scaled(1.0 / s), f.values * std::pow(eps, 0.5 * d));
  return PhaseSpaceField(f.layout.scaled(s), f.values * std::pow(eps, -0.5 * d));
}

// ---------------------------------------------------------------------------
// Automatic layouts

struct TransformLayouts {
  GridLayout y;
  PhaseSpaceLayout ps;
};

namespace detail {
inline GridLayout layout_for_box(const RVec& lo, const RVec& hi, double h) {
  const int d = static_cast<int>(lo.size());
  Eigen::VectorXi n(d);
  for (int k = 0; k < d; ++k) n(k) = std::max(2, static_cast<int>(std::ceil((hi(k) - lo(k)) / h)) + 1);
  return GridLayout(lo, hi, n);
}
}  // namespace detail

/// Grids for transforming functions whose phase-space content lies in
/// `interest` (a box in R^{2d}). The phase-space grid adds kWindowRadius
/// widths of margin; the position grid follows the resolution rule divided
/// by `safety`.
inline TransformLayouts auto_layouts(double eps, const ComplexSymMatrix& theta, const Box& interest,
                                     double safety = 1.5) {
  check_eps(eps);
  const int d = theta.dim();
  if (interest.dim() != 2 * d) throw InvalidArgument("auto_layouts: interest box must live in R^{2d}");
  const double mq = kWindowRadius * std::sqrt(eps / theta.lambda());
  const double mp = kWindowRadius * std::sqrt(eps * theta.gamma_eff());
  const RVec qlo = interest.lo.head(d).array() - mq, qhi = interest.hi.head(d).array() + mq;
  const RVec plo = interest.lo.tail(d).array() - mp, phi = interest.hi.tail(d).array() + mp;
  const double hq = 0.4 * std::sqrt(eps / theta.gamma_eff());
  const double hp = 0.4 * std::sqrt(eps * theta.lambda());
  PhaseSpaceLayout ps{detail::layout_for_box(qlo, qhi, hq), detail::layout_for_box(plo, phi, hp)};
  const double hy = resolution_spacing(eps, theta, ps.p_max()) / safety;
  const double my = 1.5 * kWindowRadius * std::sqrt(eps / theta.lambda());
  GridLayout y = detail::layout_for_box(interest.lo.head(d).array() - my, interest.hi.head(d).array() + my, hy);
  return {y, ps};
}

}  // namespace fiokit
