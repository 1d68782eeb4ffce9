#include <gtest/gtest.h>

#include "fiokit/symbols.hpp"

using namespace fiokit;

namespace {

Box region4(int d, double r) {
  Box b = Box::symmetric(4 * d, r);
  b.lo.head(2 * d).setZero();
  b.hi.head(2 * d).setZero();
  return b;
}

const RVec kZero1 = RVec::Zero(1);

}  // namespace

TEST(Symbols, ConstantSeminorms) {
  const SymbolSpec u = symbols::constant(1, cplx(0.0, 2.0));
  const RVec m = RVec::Zero(4);
  EXPECT_DOUBLE_EQ(symbol_seminorm(u, 0, m, region4(1, 3.0)), 2.0);
  // Differences of a constant cancel up to rounding: a few ulps of |u| over h^k, h >= 1e-5, 1e-4, 6e-4, 2e-3.
  const double h[5] = {0.0, 1e-5, 1e-4, 6e-4, 2e-3};
  for (int k = 1; k <= 4; ++k)
    EXPECT_LE(symbol_seminorm(u, k, m, region4(1, 3.0)), 64 * 2.2e-16 * 2.0 * std::pow(2.0, k) / std::pow(h[k], k)) << k;
  EXPECT_THROW(symbol_seminorm(u, 5, m, region4(1, 3.0)), InvalidArgument);
  EXPECT_THROW(symbol_seminorm(u, 0, RVec::Zero(2), region4(1, 3.0)), InvalidArgument);
}

TEST(Symbols, GaussianFirstDerivative) {
  // u = exp(-(q^2 + p^2)/s^2): max |du/dq| = sqrt(2)/s e^{-1/2} at q = s/sqrt(2), p = 0.
  const double s = 1.0;
  const SymbolSpec u = symbols::gaussian(1, 1.0, RVec::Zero(2), s);
  Box r = region4(1, 0.0);
  r.lo(2) = s / std::sqrt(2.0);
  r.hi(2) = s / std::sqrt(2.0);
  const double est = symbol_seminorm(u, 1, RVec::Zero(4), r);
  EXPECT_NEAR(est, std::sqrt(2.0) / s * std::exp(-0.5), 1e-6);
}

TEST(Symbols, SecondDerivativeOfPolynomialWeight) {
  // u = <q>^{-2} = 1/(1+q^2); with weight m_q = -2 the order-0 seminorm is 1 everywhere.
  const SymbolSpec u = symbols::decaying(1, 2.0, 0.0);
  RVec m = RVec::Zero(4);
  m(2) = -2.0;
  EXPECT_NEAR(symbol_seminorm(u, 0, m, region4(1, 5.0)), 1.0, 1e-12);
  // d^2/dq^2 at q = 0 equals -2.
  const double d2 = symbol_seminorm(u, 2, RVec::Zero(4), region4(1, 0.0));
  EXPECT_NEAR(d2, 2.0, 1e-4);
}

TEST(Symbols, BumpSupportAndScaling) {
  RVec z0(2);
  z0 << 1.0, -0.5;
  const SymbolSpec u = symbols::bump(1, 3.0, z0, 0.5);
  EXPECT_EQ(u(kZero1, kZero1, RVec::Constant(1, 1.6), RVec::Constant(1, -0.5)), cplx(0.0));
  EXPECT_NEAR(std::abs(u(kZero1, kZero1, RVec::Constant(1, 1.0), RVec::Constant(1, -0.5))), 3.0, 1e-15);
  ASSERT_TRUE(u.support.has_value());
  EXPECT_TRUE(u.support->contains(z0));
  const SymbolSpec v = symbols::scaled(u, cplx(0.0, -2.0));
  EXPECT_DOUBLE_EQ(v.sup_norm, 6.0);
  EXPECT_EQ(v(kZero1, kZero1, RVec::Constant(1, 1.2), RVec::Constant(1, -0.4)),
            cplx(0.0, -2.0) * u(kZero1, kZero1, RVec::Constant(1, 1.2), RVec::Constant(1, -0.4)));
  EXPECT_TRUE(symbols::scaled(u, 0.0).is_zero());
}

TEST(Symbols, DilationMovesSupport) {
  const SymbolSpec u = symbols::gaussian(1, 1.0, RVec::Zero(2), 1.0);
  const SymbolSpec v = symbols::dilated(u, 0.25);
  EXPECT_NEAR(v.support->hi(0), 2.0 * u.support->hi(0), 1e-14);
  EXPECT_DOUBLE_EQ(v.params["feature_scale"].get<double>(), 2.0);
  EXPECT_EQ(v(kZero1, kZero1, RVec::Constant(1, 2.0), kZero1), u(kZero1, kZero1, RVec::Constant(1, 1.0), kZero1));
}

TEST(Symbols, XYDependentFactors) {
  const SymbolSpec u = symbols::sin_x_gaussian(1);
  EXPECT_TRUE(u.depends_on_xy);
  EXPECT_TRUE(u.separable());
  const RVec x = RVec::Constant(1, 0.7), q = RVec::Constant(1, 0.2), p = RVec::Constant(1, -0.1);
  EXPECT_NEAR(std::abs(u(x, kZero1, q, p) - std::sin(0.7) * std::exp(-0.05)), 0.0, 1e-15);
  const SymbolSpec w = symbols::xy_lorentz(1);
  EXPECT_NEAR(w(x, x, q, p).real(), 1.0 / (1.0 + 2 * 0.49), 1e-15);
  EXPECT_FALSE(w.support.has_value());
}
