#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace sunprobit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense symmetric matrix with the symmetry contract checked at construction.
// Stores the symmetrized copy so downstream factorizations see an exactly
// symmetric operand.
class SymMatrix {
public:
  explicit SymMatrix(Matrix m) {
    if (m.rows() < 1 || m.rows() != m.cols())
      throw DimensionMismatch("SymMatrix: need square matrix of dimension >= 1, got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    double scale = m.cwiseAbs().maxCoeff();
    double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (scale > 0.0 && asym > 1e-12 * scale)
      throw InvalidParams("SymMatrix: asymmetry " + std::to_string(asym / scale) +
                          " exceeds relative tolerance 1e-12");
    mat_ = 0.5 * (m + m.transpose());
  }

  const Matrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

private:
  Matrix mat_;
};

struct CholFactor {
  Matrix L;              // lower triangular, L * L^T reproduces the (jittered) input
  double jitter = 0.0;   // ridge that was added to the diagonal, 0 if none
};

// Cholesky with escalating diagonal jitter: clean attempt first, then four
// tries starting at 1e-10 * mean(diag) and growing tenfold.
inline CholFactor cholesky(const Matrix& m_in, double* jitter_out = nullptr) {
  if (m_in.rows() != m_in.cols() || m_in.rows() < 1)
    throw DimensionMismatch("cholesky: matrix must be square, dimension >= 1");
  Matrix m = 0.5 * (m_in + m_in.transpose());
  double base = 1e-10 * m.diagonal().mean();
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 4; ++attempt) {
    Matrix trial = m;
    if (attempt > 0) {
      jitter = base * std::pow(10.0, attempt - 1);
      trial.diagonal().array() += jitter;
    }
    Eigen::LLT<Matrix> llt(trial);
    if (llt.info() == Eigen::Success) {
      if (jitter_out) *jitter_out = (attempt > 0) ? jitter : 0.0;
      return {Matrix(llt.matrixL()), (attempt > 0) ? jitter : 0.0};
    }
  }
  throw NotPositiveDefinite("cholesky: not positive definite after jitter escalation (max " +
                            std::to_string(base * 1e3) + ")");
}

struct CorrDecomposition {
  Vector omega;  // sqrt of the diagonal
  Matrix corr;   // unit-diagonal scale-free part
};

// Splits a covariance into omega * corr * omega with omega = sqrt(diag).
inline CorrDecomposition correlation_decompose(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw DimensionMismatch("correlation_decompose: matrix must be square");
  Vector d = m.diagonal();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!(d[i] > 0.0))
      throw NotPositiveDefinite("correlation_decompose: nonpositive diagonal entry at " +
                                std::to_string(i));
  Vector omega = d.array().sqrt();
  Vector inv = omega.array().inverse();
  Matrix corr = inv.asDiagonal() * (0.5 * (m + m.transpose())) * inv.asDiagonal();
  corr.diagonal().setOnes();
  return {omega, corr};
}

// SPD solve m X = b through the jittered factorization above.
inline Matrix solve_spd(const Matrix& m, const Matrix& b) {
  if (m.rows() != b.rows())
    throw DimensionMismatch("solve_spd: rhs has " + std::to_string(b.rows()) +
                            " rows, matrix is " + std::to_string(m.rows()) + "-dimensional");
  CholFactor f = cholesky(m);
  Matrix x = f.L.triangularView<Eigen::Lower>().solve(b);
  f.L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

// Factor M with M M^T = m for positive *semi*definite m (pivoted LDL^T with
// the nonnegative part of D kept). Tolerates exactly singular inputs, e.g.
// the zero matrix; complains only when m is genuinely indefinite.
inline Matrix psd_factor(const Matrix& m_in) {
  if (m_in.rows() != m_in.cols() || m_in.rows() < 1)
    throw DimensionMismatch("psd_factor: matrix must be square");
  Matrix m = 0.5 * (m_in + m_in.transpose());
  Eigen::LDLT<Matrix> ldlt(m);
  if (ldlt.info() != Eigen::Success)
    throw NotPositiveDefinite("psd_factor: LDL^T factorization failed");
  Vector d = ldlt.vectorD();
  double scale = std::max(m.diagonal().cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] < -1e-8 * scale)
      throw NotPositiveDefinite("psd_factor: negative pivot " + std::to_string(d[i]));
    d[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
  }
  Matrix L = ldlt.matrixL();
  Matrix f = ldlt.transpositionsP().transpose() * Matrix(L * d.asDiagonal());
  return f;
}

} // namespace sunprobit
