#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "ttns/dense_tensor.hpp"

namespace ttns {

struct QrResult {
  Matrix q;  // orthonormal columns, min(rows, cols) of them
  Matrix r;  // upper triangular, q * r reconstructs the input
};

inline QrResult qr_thin(const Matrix& m) {
  if (m.rows() < 1) throw std::invalid_argument("qr_thin: empty matrix");
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  QrResult out;
  out.q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

struct SvdResult {
  Matrix u;          // thin left factor, orthonormal columns
  RealVector sigma;  // nonnegative, descending
  Matrix vh;         // thin right factor as V^*, orthonormal rows
};

/// Reduced SVD with min(rows, cols) singular values. Jacobi for small
/// problems, bidiagonal divide-and-conquer beyond that.
inline SvdResult svd_reduced(const Matrix& m) {
  SvdResult out;
  const Eigen::Index k = std::min(m.rows(), m.cols());
  if (k == 0) {
    out.u = Matrix(m.rows(), 0);
    out.sigma = RealVector(0);
    out.vh = Matrix(0, m.cols());
    return out;
  }
  if (k <= 16) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.sigma = svd.singularValues();
    out.vh = svd.matrixV().adjoint();
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.sigma = svd.singularValues();
    out.vh = svd.matrixV().adjoint();
  }
  return out;
}

/// Orthonormal basis of the numerical range: left singular vectors with
/// sigma > rel_tol * sigma_max. A zero matrix yields zero columns.
inline Matrix orthonormal_range(const Matrix& m, double rel_tol = 1e-12) {
  if (rel_tol < 0) throw std::invalid_argument("orthonormal_range: negative tolerance");
  SvdResult svd = svd_reduced(m);
  if (svd.sigma.size() == 0) return Matrix(m.rows(), 0);
  const double smax = svd.sigma(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.sigma.size(); ++i)
    if (svd.sigma(i) > rel_tol * smax && svd.sigma(i) > 0.0) ++rank;
  return svd.u.leftCols(rank);
}

/// Concatenates [a b] column-wise.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("hcat: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// SVD-based orthonormal factorization m = q * r with rank deflation:
/// singular values at or below rel_tol * sigma_max are dropped.
inline QrResult orthonormal_factor(const Matrix& m, double rel_tol = 1e-12) {
  SvdResult svd = svd_reduced(m);
  Eigen::Index rank = 0;
  const double smax = svd.sigma.size() > 0 ? svd.sigma(0) : 0.0;
  for (Eigen::Index i = 0; i < svd.sigma.size(); ++i)
    if (svd.sigma(i) > rel_tol * smax && svd.sigma(i) > 0.0) ++rank;
  if (rank == 0) rank = 1;  // keep a one-dimensional factor even for zero input
  QrResult out;
  out.q = svd.u.leftCols(rank);
  out.r = svd.sigma.head(rank).asDiagonal() * svd.vh.topRows(rank);
  if (svd.sigma.size() == 0) {  // degenerate empty input
    out.q = Matrix::Zero(m.rows(), 1);
    if (m.rows() > 0) out.q(0, 0) = 1.0;
    out.r = Matrix::Zero(1, m.cols());
  }
  return out;
}

}  // namespace ttns
