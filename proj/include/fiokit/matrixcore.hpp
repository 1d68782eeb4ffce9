#pragma once

// Complex symmetric width matrices and the small dense algebra built on them:
// principal square roots, Gaussian normalisations, the symplectic matrices
// Lambda(Theta) and W(F; Theta^x, Theta^y).
//
// Block convention for a 2d x 2d phase-space Jacobian F used everywhere in
// this library:
//
//     F = [ A  B ]    A = dX/dq,  B = dX/dp,
//         [ C  D ]    C = dXi/dq, D = dXi/dp,
//
// i.e. F is the ordinary Jacobian of (q, p) -> (X, Xi).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>
#include <utility>

#include "fiokit/errors.hpp"

namespace fiokit {

using cplx = std::complex<double>;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

namespace detail {

struct SymEig {
  RVec values;
  RMat vectors;
};

inline SymEig real_sym_eig(const RMat& m) {
  Eigen::SelfAdjointEigenSolver<RMat> es(m);
  if (es.info() != Eigen::Success) throw InvalidArgument("symmetric eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline RMat sym_function(const SymEig& e, double (*f)(double)) {
  RVec fv = e.values.unaryExpr(f);
  return e.vectors * fv.asDiagonal() * e.vectors.transpose();
}

}  // namespace detail

/// d x d complex symmetric matrix with positive definite real part. Holds the
/// extreme eigenvalues lambda <= gamma of the real part.
class ComplexSymMatrix {
 public:
  explicit ComplexSymMatrix(CMat entries) : m_(std::move(entries)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols())
      throw InvalidArgument("width matrix must be square and non-empty");
    for (Eigen::Index j = 0; j < m_.rows(); ++j)
      for (Eigen::Index k = j + 1; k < m_.cols(); ++k)
        if (m_(j, k) != m_(k, j)) throw InvalidArgument("width matrix is not symmetric");
    if (!m_.allFinite()) throw InvalidArgument("width matrix has non-finite entries");
    auto eig = detail::real_sym_eig(m_.real());
    lambda_ = eig.values.minCoeff();
    gamma_ = eig.values.maxCoeff();
    if (!(lambda_ > 1e-13 * gamma_) || !(gamma_ > 0.0))
      throw InvalidArgument("real part of width matrix is not positive definite (min eigenvalue " +
                            std::to_string(lambda_) + ")");
    re_sqrt_ = detail::sym_function(eig, [](double v) { return std::sqrt(v); });
    re_inv_sqrt_ = detail::sym_function(eig, [](double v) { return 1.0 / std::sqrt(v); });
    det_re_ = eig.values.prod();
  }

  static ComplexSymMatrix identity(int d) { return ComplexSymMatrix(CMat::Identity(d, d)); }
  static ComplexSymMatrix scalar(int d, cplx s) {
    return ComplexSymMatrix(CMat(CMat::Identity(d, d) * s));
  }
  static ComplexSymMatrix from_parts(const RMat& re, const RMat& im) {
    CMat m = re.cast<cplx>() + kI * im.cast<cplx>();
    return ComplexSymMatrix(std::move(m));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMat& entries() const { return m_; }
  RMat real() const { return m_.real(); }
  RMat imag() const { return m_.imag(); }
  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }
  double det_real() const { return det_re_; }
  const RMat& real_sqrt() const { return re_sqrt_; }
  const RMat& real_inv_sqrt() const { return re_inv_sqrt_; }

  /// Largest eigenvalue of Re + Im Re^{-1} Im: the squared momentum spread of
  /// a coherent state with this width, in units of 1/eps. Equals gamma for
  /// real matrices.
  double gamma_eff() const {
    RMat im = imag();
    RMat g = real() + im * re_inv_sqrt_ * re_inv_sqrt_ * im;
    g = 0.5 * (g + g.transpose()).eval();
    return detail::real_sym_eig(g).values.maxCoeff();
  }

  ComplexSymMatrix conj() const { return ComplexSymMatrix(m_.conjugate()); }

  /// Quadratic form v . M v (bilinear, no conjugation) for real v.
  cplx quad(const RVec& v) const { return v.cast<cplx>().dot(m_ * v.cast<cplx>()); }

 private:
  CMat m_;
  double lambda_ = 0.0;
  double gamma_ = 0.0;
  double det_re_ = 0.0;
  RMat re_sqrt_;
  RMat re_inv_sqrt_;
};

inline ComplexSymMatrix operator+(const ComplexSymMatrix& a, const ComplexSymMatrix& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("width matrices of different dimension");
  return ComplexSymMatrix(CMat(a.entries() + b.entries()));
}

/// The unique square root with positive definite real part.
///
/// Eigendecomposition with principal scalar roots, then Newton polishing
/// R <- (R + R^{-1} M)/2 while it reduces the residual (the eigenvector basis
/// of a complex symmetric matrix can be badly conditioned).
inline ComplexSymMatrix principal_sqrt(const ComplexSymMatrix& m) {
  const CMat& a = m.entries();
  Eigen::ComplexEigenSolver<CMat> es(a);
  if (es.info() != Eigen::Success) throw InvalidArgument("complex eigensolver failed");
  CVec roots = es.eigenvalues().unaryExpr([](cplx z) { return std::sqrt(z); });
  CMat v = es.eigenvectors();
  CMat r = v * roots.asDiagonal() * v.inverse();
  r = (0.5 * (r + r.transpose())).eval();

  const double scale = a.norm();
  double res = (r * r - a).norm();
  for (int it = 0; it < 8 && res > 1e-15 * scale; ++it) {
    CMat next = 0.5 * (r + r.partialPivLu().solve(a));
    next = (0.5 * (next + next.transpose())).eval();
    double nres = (next * next - a).norm();
    if (!(nres < res)) break;
    r = std::move(next);
    res = nres;
  }
  for (Eigen::Index j = 0; j < r.rows(); ++j)
    for (Eigen::Index k = j + 1; k < r.cols(); ++k) r(k, j) = r(j, k);
  return ComplexSymMatrix(std::move(r));
}

/// (2 pi eps)^{-d/2} int exp(-M x.x / 2 eps) dx = det(principal_sqrt(M))^{-1}.
inline cplx gaussian_value(const ComplexSymMatrix& m, double eps, int d) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("eps must lie in (0, 1]");
  if (d != m.dim()) throw InvalidArgument("dimension does not match width matrix");
  return 1.0 / principal_sqrt(m).entries().determinant();
}

/// det(M)^{-1/2} on the principal branch.
inline cplx det_inv_sqrt(const ComplexSymMatrix& m) {
  return 1.0 / principal_sqrt(m).entries().determinant();
}

inline RMat symplectic_j(int d) {
  RMat j = RMat::Zero(2 * d, 2 * d);
  j.topRightCorner(d, d) = RMat::Identity(d, d);
  j.bottomLeftCorner(d, d) = -RMat::Identity(d, d);
  return j;
}

struct SymplecticCheck {
  bool flag;
  double residual;
};

/// Frobenius residual of F^T J F - J.
inline SymplecticCheck is_symplectic(const RMat& f, double tol) {
  if (f.rows() != f.cols() || f.rows() % 2 != 0 || f.rows() == 0)
    throw InvalidArgument("phase-space Jacobian must be 2d x 2d");
  const RMat j = symplectic_j(static_cast<int>(f.rows() / 2));
  const double r = (f.transpose() * j * f - j).norm();
  return {r <= tol, r};
}

/// Lambda(Theta) = [[Re^{1/2}, 0], [Re^{-1/2} Im, Re^{-1/2}]].
inline RMat lambda_of(const ComplexSymMatrix& theta) {
  const int d = theta.dim();
  RMat l = RMat::Zero(2 * d, 2 * d);
  l.topLeftCorner(d, d) = theta.real_sqrt();
  l.bottomLeftCorner(d, d) = theta.real_inv_sqrt() * theta.imag();
  l.bottomRightCorner(d, d) = theta.real_inv_sqrt();
  return l;
}

/// W(F; Theta^x, Theta^y) = [[C^T - i A^T Tx, -i Ty], [D^T - i B^T Tx, -I]].
inline CMat w_matrix(const RMat& f, const ComplexSymMatrix& tx, const ComplexSymMatrix& ty) {
  const int d = tx.dim();
  if (ty.dim() != d || f.rows() != 2 * d || f.cols() != 2 * d)
    throw InvalidArgument("w_matrix: dimension mismatch");
  const CMat a = f.topLeftCorner(d, d).cast<cplx>();
  const CMat b = f.topRightCorner(d, d).cast<cplx>();
  const CMat c = f.bottomLeftCorner(d, d).cast<cplx>();
  const CMat dd = f.bottomRightCorner(d, d).cast<cplx>();
  CMat w(2 * d, 2 * d);
  w.topLeftCorner(d, d) = c.transpose() - kI * a.transpose() * tx.entries();
  w.topRightCorner(d, d) = -kI * ty.entries();
  w.bottomLeftCorner(d, d) = dd.transpose() - kI * b.transpose() * tx.entries();
  w.bottomRightCorner(d, d) = -CMat::Identity(d, d);
  return w;
}

/// Frobenius residual of
///   W (Re Theta^{xy})^{-1} W^*  -  Lambda(conj Ty)^T Lambda(conj Ty) - (Lambda(Tx) F)^T (Lambda(Tx) F).
inline double w_identity_residual(const RMat& f, const ComplexSymMatrix& tx,
                                  const ComplexSymMatrix& ty) {
  const int d = tx.dim();
  const CMat w = w_matrix(f, tx, ty);
  RMat re_inv = RMat::Zero(2 * d, 2 * d);
  re_inv.topLeftCorner(d, d) = tx.real_inv_sqrt() * tx.real_inv_sqrt();
  re_inv.bottomRightCorner(d, d) = ty.real_inv_sqrt() * ty.real_inv_sqrt();
  const CMat lhs = w * re_inv.cast<cplx>() * w.adjoint();
  const RMat ly = lambda_of(ty.conj());
  const RMat lf = lambda_of(tx) * f;
  const RMat rhs = ly.transpose() * ly + lf.transpose() * lf;
  return (lhs - rhs.cast<cplx>()).norm();
}

}  // namespace fiokit
