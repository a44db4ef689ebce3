#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttns {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Index = std::int64_t;

/// Dense complex tensor with reverse-lexicographic (first index fastest)
/// linearization. Mode 0 comes first; a matrix is the order-2 case.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<Index> dims)
      : dims_(std::move(dims)), data_(checked_size(dims_), Complex(0.0, 0.0)) {}

  DenseTensor(std::vector<Index> dims, std::vector<Complex> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != checked_size(dims_))
      throw std::invalid_argument("DenseTensor: data size does not match dims");
  }

  int order() const { return static_cast<int>(dims_.size()); }
  Index dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const { return static_cast<Index>(data_.size()); }

  Complex* data() { return data_.data(); }
  const Complex* data() const { return data_.data(); }
  std::vector<Complex>& storage() { return data_; }
  const std::vector<Complex>& storage() const { return data_; }

  Complex& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
  const Complex& operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

  Index flat_index(const std::vector<Index>& idx) const {
    if (static_cast<int>(idx.size()) != order())
      throw std::invalid_argument("flat_index: wrong multi-index length");
    Index off = 0, stride = 1;
    for (int m = 0; m < order(); ++m) {
      if (idx[static_cast<std::size_t>(m)] < 0 || idx[static_cast<std::size_t>(m)] >= dim(m))
        throw std::invalid_argument("flat_index: index out of range");
      off += idx[static_cast<std::size_t>(m)] * stride;
      stride *= dim(m);
    }
    return off;
  }

  Complex& at(const std::vector<Index>& idx) { return data_[static_cast<std::size_t>(flat_index(idx))]; }
  const Complex& at(const std::vector<Index>& idx) const {
    return data_[static_cast<std::size_t>(flat_index(idx))];
  }

  /// Reinterprets the flat data with new mode sizes of equal total length.
  DenseTensor reshaped(std::vector<Index> new_dims) const {
    DenseTensor out(std::move(new_dims), data_);
    return out;
  }

  DenseTensor& operator*=(Complex c) {
    for (auto& v : data_) v *= c;
    return *this;
  }

  DenseTensor& operator+=(const DenseTensor& other) {
    if (other.dims_ != dims_) throw std::invalid_argument("tensor +=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }

  DenseTensor& operator-=(const DenseTensor& other) {
    if (other.dims_ != dims_) throw std::invalid_argument("tensor -=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
  }

  static Index checked_size(const std::vector<Index>& dims) {
    if (dims.empty()) return 0;
    Index n = 1;
    for (Index d : dims) {
      if (d <= 0) throw std::invalid_argument("DenseTensor: nonpositive mode size");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<Index> dims_;
  std::vector<Complex> data_;
};

inline DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
inline DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
inline DenseTensor operator*(Complex c, DenseTensor a) { return a *= c; }

inline Complex dot(const DenseTensor& a, const DenseTensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  Complex s(0.0, 0.0);
  for (Index k = 0; k < a.size(); ++k) s += std::conj(a[k]) * b[k];
  return s;
}

inline double frobenius_norm(const DenseTensor& a) {
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k) s += std::norm(a[k]);
  return std::sqrt(s);
}

inline DenseTensor conjugate(DenseTensor a) {
  for (Index k = 0; k < a.size(); ++k) a[k] = std::conj(a[k]);
  return a;
}

inline bool all_finite(const DenseTensor& a) {
  for (Index k = 0; k < a.size(); ++k)
    if (!std::isfinite(a[k].real()) || !std::isfinite(a[k].imag())) return false;
  return true;
}

namespace detail {

inline void mode_extents(const DenseTensor& a, int mode, Index& left, Index& ni, Index& right) {
  if (mode < 0 || mode >= a.order()) throw std::invalid_argument("invalid mode index");
  left = 1;
  for (int m = 0; m < mode; ++m) left *= a.dim(m);
  ni = a.dim(mode);
  right = a.size() / (left * ni);
}

}  // namespace detail

/// Mode-i matricization: row k collects all entries with i-th subscript k;
/// columns run over the remaining subscripts, earliest mode fastest.
inline Matrix matricize(const DenseTensor& a, int mode) {
  Index left, ni, right;
  detail::mode_extents(a, mode, left, ni, right);
  Matrix m(ni, left * right);
  const Complex* src = a.data();
  for (Index r = 0; r < right; ++r)
    for (Index k = 0; k < ni; ++k) {
      const Complex* s = src + (k * left + r * left * ni);
      for (Index l = 0; l < left; ++l) m(k, l + r * left) = s[l];
    }
  return m;
}

/// Inverse of matricize: matricize(tensorize(m, i, dims), i) == m exactly.
inline DenseTensor tensorize(const Matrix& m, int mode, const std::vector<Index>& dims) {
  DenseTensor out(dims);
  Index left, ni, right;
  detail::mode_extents(out, mode, left, ni, right);
  if (m.rows() != ni || m.cols() != left * right)
    throw std::invalid_argument("tensorize: matrix shape does not match target dims");
  Complex* dst = out.data();
  for (Index r = 0; r < right; ++r)
    for (Index k = 0; k < ni; ++k) {
      Complex* d = dst + (k * left + r * left * ni);
      for (Index l = 0; l < left; ++l) d[l] = m(k, l + r * left);
    }
  return out;
}

/// Mode-i product: replaces mode i of size dims[i] by rows(m), contracting
/// with the matrix columns. Equals ten_i(m * mat_i(a)).
inline DenseTensor mode_product(const DenseTensor& a, int mode, const Matrix& m) {
  Index left, ni, right;
  detail::mode_extents(a, mode, left, ni, right);
  if (m.cols() != ni) throw std::invalid_argument("mode_product: dimension mismatch");
  const Index p = m.rows();
  std::vector<Index> out_dims = a.dims();
  out_dims[static_cast<std::size_t>(mode)] = p;
  DenseTensor out(out_dims);
  if (left == 1) {
    Eigen::Map<const Matrix> in(a.data(), ni, right);
    Eigen::Map<Matrix> res(out.data(), p, right);
    res.noalias() = m * in;
    return out;
  }
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const Matrix> slab(a.data() + r * left * ni, left, ni);
    Eigen::Map<Matrix> res(out.data() + r * left * p, left, p);
    res.noalias() = slab * m.transpose();
  }
  return out;
}

/// conj(mat_i(a)) * mat_i(b)^T: the Gram of two tensors over all modes but i.
inline Matrix partial_gram(const DenseTensor& a, const DenseTensor& b, int mode) {
  if (a.order() != b.order()) throw std::invalid_argument("partial_gram: order mismatch");
  for (int m = 0; m < a.order(); ++m)
    if (m != mode && a.dim(m) != b.dim(m))
      throw std::invalid_argument("partial_gram: shape mismatch off the kept mode");
  Index la, na, ra;
  detail::mode_extents(a, mode, la, na, ra);
  if (la == 1) {
    Eigen::Map<const Matrix> ma(a.data(), na, ra);
    Eigen::Map<const Matrix> mb(b.data(), b.dim(mode), ra);
    return ma.conjugate() * mb.transpose();
  }
  Matrix ma = matricize(a, mode);
  Matrix mb = matricize(b, mode);
  return ma.conjugate() * mb.transpose();
}

/// Gram over mode 0; used for contraction products of cores.
inline Matrix gram0(const DenseTensor& a, const DenseTensor& b) { return partial_gram(a, b, 0); }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Kronecker product of the given factors with the first factor fastest
/// (rightmost in the usual kron chain); matches the column ordering of
/// matricize over the remaining modes.
inline Matrix kron_first_fastest(const std::vector<Matrix>& factors) {
  if (factors.empty()) return Matrix::Identity(1, 1);
  Matrix acc = factors.back();
  for (auto it = factors.rbegin() + 1; it != factors.rend(); ++it) acc = kron(acc, *it);
  return acc;
}

/// U_i * mat_i(C) * (kron of the other bases)^T, the matricization of the
/// fully contracted Tucker tensor C x_j U_j.
inline Matrix tucker_matricization(const DenseTensor& c, const std::vector<Matrix>& bases,
                                   int mode) {
  if (static_cast<int>(bases.size()) != c.order())
    throw std::invalid_argument("tucker_matricization: one basis per mode required");
  for (int m = 0; m < c.order(); ++m)
    if (bases[static_cast<std::size_t>(m)].cols() != c.dim(m))
      throw std::invalid_argument("tucker_matricization: basis does not match core mode");
  std::vector<Matrix> rest;
  rest.reserve(bases.size() - 1);
  for (int m = 0; m < c.order(); ++m)
    if (m != mode) rest.push_back(bases[static_cast<std::size_t>(m)]);
  return bases[static_cast<std::size_t>(mode)] * matricize(c, mode) *
         kron_first_fastest(rest).transpose();
}

}  // namespace ttns
