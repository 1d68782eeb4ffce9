#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fiokit/families.hpp"
#include "fiokit/fbi.hpp"

using namespace fiokit;

namespace {

RVec v1(double x) { return RVec::Constant(1, x); }

ComplexSymMatrix theta1(cplx t) { return ComplexSymMatrix(CMat::Constant(1, 1, t)); }

}  // namespace

TEST(CoherentState, UnitNormAgainstQuadrature) {
  using boost::math::quadrature::gauss_kronrod;
  for (cplx t : {cplx(1.0), cplx(2.0, 1.5), cplx(0.5, -0.7)}) {
    const double eps = 0.3;
    const ComplexSymMatrix th = theta1(t);
    const double c2 = std::sqrt(t.real() / (kPi * eps));
    const double oracle = gauss_kronrod<double, 61>::integrate(
        [&](double y) { return c2 * std::exp(-t.real() * (y - 0.4) * (y - 0.4) / eps); }, -10.0, 10.0, 15, 1e-14);
    EXPECT_NEAR(oracle, 1.0, 1e-12);
    const GridLayout g = GridLayout::cube(1, -8.0, 8.0, 4001);
    const GridFunction s = coherent_state(eps, th, v1(0.4), v1(1.1), g);
    EXPECT_NEAR(s.norm(), 1.0, 1e-12);
  }
}

TEST(CoherentState, OverlapModulus) {
  const double eps = 0.5;
  const ComplexSymMatrix th = ComplexSymMatrix::identity(1);
  const GridLayout g = GridLayout::cube(1, -12.0, 12.0, 4001);
  for (double dq : {0.0, 0.7, 1.5})
    for (double dp : {0.0, -0.9, 1.2}) {
      const GridFunction a = coherent_state(eps, th, v1(0.2), v1(0.3), g);
      const GridFunction b = coherent_state(eps, th, v1(0.2 + dq), v1(0.3 + dp), g);
      EXPECT_NEAR(std::abs(a.inner(b)), std::exp(-(dq * dq + dp * dp) / (4 * eps)), 1e-12);
    }
}

TEST(CoherentState, RejectsCoarseGridAndBadEps) {
  const ComplexSymMatrix th = ComplexSymMatrix::identity(1);
  EXPECT_THROW(coherent_state(0.1, th, v1(0.0), v1(2.0), GridLayout::cube(1, -5, 5, 50)), ResolutionError);
  EXPECT_THROW(coherent_state(0.0, th, v1(0.0), v1(0.0), GridLayout::cube(1, -5, 5, 500)), InvalidArgument);
  EXPECT_THROW(coherent_state(1.5, th, v1(0.0), v1(0.0), GridLayout::cube(1, -5, 5, 500)), InvalidArgument);
}

TEST(Fbi, TransformOfCoherentState) {
  const double eps = 0.25;
  const ComplexSymMatrix th = ComplexSymMatrix::identity(1);
  const Box interest{(RVec(2) << 0.5, -0.5).finished(), (RVec(2) << 0.5, -0.5).finished()};
  const TransformLayouts l = auto_layouts(eps, th, interest);
  const GridFunction g0 = coherent_state(eps, th, v1(0.5), v1(-0.5), l.y);
  const PhaseSpaceField w = fbi_forward(eps, th, g0, l.ps);
  double worst = 0.0;
  for (std::size_t n = 0; n < l.ps.size(); ++n) {
    const PhasePoint z = l.ps.node(n);
    const double r2 = (z.q(0) - 0.5) * (z.q(0) - 0.5) + (z.p(0) + 0.5) * (z.p(0) + 0.5);
    const double expect = std::exp(-r2 / (4 * eps)) / std::sqrt(2 * kPi * eps);
    worst = std::max(worst, std::abs(std::abs(w.values(static_cast<Eigen::Index>(n))) - expect));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Fbi, IsometryAndReconstruction) {
  for (cplx t : {cplx(1.0), cplx(2.0, -1.0)})
    for (double eps : {1.0, 0.25})
      for (const char* name : {"hermite2", "modulated", "chirp"}) {
        const TestFunction& f = test_function(name);
        const ComplexSymMatrix th = theta1(t);
        const TransformLayouts l = layouts_for(f, eps, th);
        const GridFunction phi = sample(f, eps, l.y);
        const PhaseSpaceField w = fbi_forward(eps, th, phi, l.ps);
        EXPECT_LE(std::abs(w.norm() / phi.norm() - 1.0), 1e-8) << name;
        const GridFunction back = fbi_inverse(eps, th, w, l.y);
        EXPECT_LE((back.values - phi.values).norm() / phi.values.norm(), 1e-8) << name;
      }
}

TEST(Fbi, TwoDimensionalMatrixWidth) {
  const double eps = 1.0;
  CMat t(2, 2);
  t << cplx(1.5, 0.3), cplx(0.2, -0.1), cplx(0.2, -0.1), cplx(0.8, 0.0);
  const ComplexSymMatrix th(t);
  const TestFunction& f = test_function("hermite0");
  // Hand-sized grids: the content of W phi is negligible outside |q|, |p| <= 7.
  TransformLayouts l{detail::layout_for_box(RVec::Constant(2, -9.0), RVec::Constant(2, 9.0),
                                            resolution_spacing(eps, th, 7.0) / 1.2),
                     {GridLayout::cube(2, -7.0, 7.0, 29), GridLayout::cube(2, -7.0, 7.0, 29)}};
  const GridFunction phi = sample(f, eps, l.y);
  const PhaseSpaceField w = fbi_forward(eps, th, phi, l.ps);
  EXPECT_LE(std::abs(w.norm() / phi.norm() - 1.0), 1e-7);
  const GridFunction back = fbi_inverse(eps, th, w, l.y);
  EXPECT_LE((back.values - phi.values).norm() / phi.values.norm(), 1e-7);
}

TEST(Fbi, ResultIndependentOfWorkerCount) {
  const double eps = 0.25;
  const ComplexSymMatrix th = ComplexSymMatrix::identity(1);
  const TestFunction& f = test_function("cat");
  const TransformLayouts l = layouts_for(f, eps, th);
  const GridFunction phi = sample(f, eps, l.y);
  set_workers(1);
  const PhaseSpaceField w1 = fbi_forward(eps, th, phi, l.ps);
  const GridFunction b1 = fbi_inverse(eps, th, w1, l.y);
  set_workers(3);
  const PhaseSpaceField w3 = fbi_forward(eps, th, phi, l.ps);
  const GridFunction b3 = fbi_inverse(eps, th, w3, l.y);
  set_workers(0);
  EXPECT_EQ(w1.values, w3.values);
  EXPECT_EQ(b1.values, b3.values);
}

TEST(Fbi, RejectsUnderResolvedInput) {
  const ComplexSymMatrix th = ComplexSymMatrix::identity(1);
  const GridFunction phi = GridFunction::zeros(GridLayout::cube(1, -5.0, 5.0, 21));
  const PhaseSpaceLayout ps{GridLayout::cube(1, -5, 5, 21), GridLayout::cube(1, -5, 5, 21)};
  EXPECT_THROW(fbi_forward(0.1, th, phi, ps), ResolutionError);
}

TEST(Dilation, UnitaryAndCovariant) {
  const double eps = 0.16;
  const ComplexSymMatrix th = theta1(cplx(1.3, 0.4));
  const TestFunction& f = test_function("hermite1");
  const TransformLayouts l = layouts_for(f, eps, th);
  const GridFunction phi = sample(f, eps, l.y);
  const GridFunction t = scale_op(eps, ScaleDirection::forward, phi);
  EXPECT_NEAR(t.norm(), phi.norm(), 1e-12 * phi.norm());
  const GridFunction back = scale_op(eps, ScaleDirection::adjoint, t, l.y);
  EXPECT_LE((back.values - phi.values).norm(), 1e-14 * phi.values.norm());
  // W^eps = (T_2d)^* W^1 T on matching grids.
  const PhaseSpaceField lhs = fbi_forward(eps, th, phi, l.ps);
  const PhaseSpaceField w1 = fbi_forward(1.0, th, t, l.ps.scaled(1.0 / std::sqrt(eps)));
  const PhaseSpaceField rhs = scale_op(eps, ScaleDirection::adjoint, w1);
  EXPECT_LE((lhs.values - rhs.values).norm(), 1e-10 * lhs.values.norm());
  EXPECT_THROW(scale_op(eps, ScaleDirection::adjoint, t, GridLayout::cube(1, 0, 1, 3)), InvalidArgument);
}
