#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <random>

#include "fiokit/matrixcore.hpp"

using namespace fiokit;

namespace {

ComplexSymMatrix random_width(int d, std::mt19937_64& rng, double im_scale = 1.0) {
  std::normal_distribution<double> g;
  RMat a(d, d), b(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      a(i, j) = g(rng);
      b(i, j) = g(rng);
    }
  return ComplexSymMatrix::from_parts(a * a.transpose() / d + 0.1 * RMat::Identity(d, d), im_scale * (b + b.transpose()));
}

RMat random_symplectic(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  RMat f = RMat::Identity(2 * d, 2 * d);
  for (int k = 0; k < 3; ++k) {
    RMat s(d, d), a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        s(i, j) = 0.5 * g(rng);
        a(i, j) = 0.3 * g(rng);
      }
    s = (0.5 * (s + s.transpose())).eval();
    a += RMat::Identity(d, d);
    RMat up = RMat::Identity(2 * d, 2 * d), di = RMat::Zero(2 * d, 2 * d);
    up.topRightCorner(d, d) = s;
    di.topLeftCorner(d, d) = a;
    di.bottomRightCorner(d, d) = a.inverse().transpose();
    f = up * di * f;
  }
  return f;
}

}  // namespace

TEST(ComplexSymMatrix, RejectsAsymmetricAndIndefinite) {
  CMat m(2, 2);
  m << 1.0, 0.5, 0.4, 1.0;
  EXPECT_THROW(ComplexSymMatrix{m}, InvalidArgument);
  m << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(ComplexSymMatrix{m}, InvalidArgument);
  m << cplx(1.0, 5.0), 0.0, 0.0, cplx(0.5, -3.0);
  EXPECT_NO_THROW(ComplexSymMatrix{m});
}

TEST(ComplexSymMatrix, SpectralData) {
  const auto m = ComplexSymMatrix::from_parts((RMat(2, 2) << 2, 0, 0, 0.5).finished(), RMat::Zero(2, 2));
  EXPECT_DOUBLE_EQ(m.lambda(), 0.5);
  EXPECT_DOUBLE_EQ(m.gamma(), 2.0);
  EXPECT_NEAR(m.det_real(), 1.0, 1e-14);
  EXPECT_NEAR((m.real_sqrt() * m.real_sqrt() - m.real()).norm(), 0.0, 1e-14);
}

TEST(PrincipalSqrt, ScalarMatchesStdSqrt) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 200; ++k) {
    const cplx z(std::abs(u(rng)) + 1e-3, u(rng));
    const auto r = principal_sqrt(ComplexSymMatrix(CMat::Constant(1, 1, z)));
    EXPECT_NEAR(std::abs(r.entries()(0, 0) - std::sqrt(z)), 0.0, 1e-13 * std::abs(std::sqrt(z)));
  }
}

TEST(PrincipalSqrt, MatchesSchurSqrt) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const int d = 1 + k % 4;
    const ComplexSymMatrix m = random_width(d, rng, 2.0);
    const CMat r = principal_sqrt(m).entries();
    const CMat oracle = m.entries().sqrt();
    EXPECT_LE((r - oracle).norm(), 1e-10 * oracle.norm());
    EXPECT_LE((r * r - m.entries()).norm(), 1e-12 * m.entries().norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<RMat>(r.real()).eigenvalues().minCoeff(), 0.0);
    EXPECT_LE((r - r.transpose()).norm(), 1e-14 * r.norm());
  }
}

TEST(GaussianValue, MatchesQuadrature1d) {
  using boost::math::quadrature::gauss_kronrod;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    const ComplexSymMatrix m = random_width(1, rng);
    const cplx a = m.entries()(0, 0);
    const double eps = 0.3 + 0.07 * k;
    const double w = 14 * std::sqrt(eps / a.real());
    auto f = [&](double x) { return std::exp(-a * x * x / (2 * eps)); };
    const double re = gauss_kronrod<double, 61>::integrate([&](double x) { return f(x).real(); }, -w, w, 15, 1e-14);
    const double im = gauss_kronrod<double, 61>::integrate([&](double x) { return f(x).imag(); }, -w, w, 15, 1e-14);
    const cplx oracle = cplx(re, im) / std::sqrt(2 * kPi * eps);
    EXPECT_LE(std::abs(gaussian_value(m, eps, 1) - oracle), 1e-8 * std::abs(oracle));
  }
}

TEST(GaussianValue, MatchesQuadrature2d) {
  using boost::math::quadrature::gauss_kronrod;
  std::mt19937_64 rng(4);
  for (int k = 0; k < 3; ++k) {
    const ComplexSymMatrix m = random_width(2, rng, 0.5);
    const double eps = 0.5;
    const double w = 12 * std::sqrt(eps / m.lambda());
    auto part = [&](bool imag) {
      return gauss_kronrod<double, 31>::integrate(
          [&](double x) {
            return gauss_kronrod<double, 31>::integrate(
                [&](double y) {
                  const cplx v = std::exp(-m.quad((RVec(2) << x, y).finished()) / (2 * eps));
                  return imag ? v.imag() : v.real();
                },
                -w, w, 10, 1e-13);
          },
          -w, w, 10, 1e-13);
    };
    const cplx oracle = cplx(part(false), part(true)) / (2 * kPi * eps);
    EXPECT_LE(std::abs(gaussian_value(m, eps, 2) - oracle), 1e-8 * std::abs(oracle));
  }
}

TEST(GaussianValue, PrincipalBranchOnRotatedScalar) {
  for (double th : {-1.4, -0.7, 0.0, 0.9, 1.5}) {
    const ComplexSymMatrix m(std::polar(1.0, th) * CMat::Identity(3, 3));
    EXPECT_NEAR(std::abs(det_inv_sqrt(m) - std::polar(1.0, -1.5 * th)), 0.0, 1e-12);
  }
  EXPECT_THROW(gaussian_value(ComplexSymMatrix::identity(1), 0.0, 1), InvalidArgument);
  EXPECT_THROW(gaussian_value(ComplexSymMatrix::identity(2), 1.0, 1), InvalidArgument);
}

TEST(Symplectic, StandardChecks) {
  EXPECT_TRUE(is_symplectic(symplectic_j(2), 1e-14).flag);
  std::mt19937_64 rng(5);
  for (int d = 1; d <= 3; ++d) EXPECT_TRUE(is_symplectic(random_symplectic(d, rng), 1e-10).flag);
  RMat f = RMat::Identity(2, 2);
  f(0, 0) = 2.0;
  const auto c = is_symplectic(f, 1e-10);
  EXPECT_FALSE(c.flag);
  EXPECT_GT(c.residual, 0.5);
}

TEST(Symplectic, LambdaIsSymplectic) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) EXPECT_TRUE(is_symplectic(lambda_of(random_width(1 + k % 3, rng)), 1e-10).flag);
}

TEST(WMatrix, IdentityAgainstIndependentAssembly) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const int d = 1 + k % 3;
    const RMat f = random_symplectic(d, rng);
    const ComplexSymMatrix tx = random_width(d, rng), ty = random_width(d, rng);
    // Right-hand side assembled from Eigen's matrix square roots.
    auto lam = [d](const CMat& t) {
      const RMat re = t.real(), rs = re.sqrt(), ri = rs.inverse();
      RMat l = RMat::Zero(2 * d, 2 * d);
      l.topLeftCorner(d, d) = rs;
      l.bottomLeftCorner(d, d) = ri * RMat(t.imag());
      l.bottomRightCorner(d, d) = ri;
      return l;
    };
    const RMat ly = lam(ty.entries().conjugate()), lf = lam(tx.entries()) * f;
    const RMat rhs = ly.transpose() * ly + lf.transpose() * lf;
    RMat re_inv = RMat::Zero(2 * d, 2 * d);
    re_inv.topLeftCorner(d, d) = tx.real().inverse();
    re_inv.bottomRightCorner(d, d) = ty.real().inverse();
    const CMat w = w_matrix(f, tx, ty);
    EXPECT_LE((w * re_inv.cast<cplx>() * w.adjoint() - rhs.cast<cplx>()).norm(), 1e-10 * rhs.norm());
    EXPECT_LE(w_identity_residual(f, tx, ty), 1e-10 * std::max(1.0, rhs.norm()));
    const auto sv = Eigen::JacobiSVD<CMat>(w).singularValues();
    EXPECT_TRUE(std::isfinite(sv(0) / sv(sv.size() - 1)));
    EXPECT_GT(sv(sv.size() - 1), 0.0);
  }
}
