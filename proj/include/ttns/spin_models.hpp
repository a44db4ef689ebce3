#pragma once

#include <Eigen/Eigenvalues>

#include "ttns/operators.hpp"
#include "ttns/ttn.hpp"

namespace ttns {

inline Matrix pauli_x() {
  Matrix s(2, 2);
  s << 0.0, 1.0, 1.0, 0.0;
  return s;
}

inline Matrix pauli_z() {
  Matrix s(2, 2);
  s << 1.0, 0.0, 0.0, -1.0;
  return s;
}

/// Transverse-field Ising chain with open boundaries on d sites.
struct IsingSpec {
  int d = 2;
  double omega = 1.0;

  void validate() const {
    if (d < 2) throw std::invalid_argument("IsingSpec: at least two sites required");
    if (omega < 0) throw std::invalid_argument("IsingSpec: omega must be nonnegative");
  }
};

/// H = -Omega sum_k sx^(k) - sum_k sz^(k) sz^(k+1): 2d-1 Kronecker terms.
inline KroneckerSumOp ising_hamiltonian(const IsingSpec& spec) {
  spec.validate();
  KroneckerSumOp h;
  const Matrix sx = pauli_x();
  const Matrix sz = pauli_z();
  for (int k = 1; k <= spec.d; ++k) {
    KronTerm t;
    t.coeff = Complex(-spec.omega, 0.0);
    t.site.emplace(k, sx);
    h.terms.push_back(std::move(t));
  }
  for (int k = 1; k <= spec.d - 1; ++k) {
    KronTerm t;
    t.coeff = Complex(-1.0, 0.0);
    t.site.emplace(k, sz);
    t.site.emplace(k + 1, sz);
    h.terms.push_back(std::move(t));
  }
  return h;
}

/// M = (1/d) sum_k sz^(k).
inline KroneckerSumOp magnetization_operator(int d) {
  KroneckerSumOp m;
  const Matrix sz = pauli_z();
  for (int k = 1; k <= d; ++k) {
    KronTerm t;
    t.coeff = Complex(1.0 / d, 0.0);
    t.site.emplace(k, sz);
    m.terms.push_back(std::move(t));
  }
  return m;
}

/// |psi0> = (1,0)^T at every site, as a rank-1 orthonormal TTN.
inline TTN all_up_state(TreePtr tree) {
  std::map<int, Eigen::VectorXcd> vecs;
  for (int l : tree->leaves()) {
    if (tree->leaf_dim(l) != 2)
      throw std::invalid_argument("all_up_state: all leaf dimensions must be 2");
    Eigen::VectorXcd up(2);
    up << 1.0, 0.0;
    vecs.emplace(tree->leaf_label(l), up);
  }
  return product_state(tree, vecs);
}

/// Mean sz expectation of a spin state, normalized by <x,x>.
inline double magnetization(const TTN& x, bool assume_orthonormal = true) {
  const int d = x.tree->leaf_count();
  const double n2 = std::real(inner(x, x));
  return energy(magnetization_operator(d), x, assume_orthonormal) / n2;
}

/// Dense reference propagation of i d/dt psi = H psi by one eigendecomposition
/// of H and repeated application of exp(-i h H).
struct ReferenceTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXcd> states;
  std::vector<double> magnetization;
};

inline double dense_magnetization(const Eigen::VectorXcd& psi, int d) {
  std::vector<Index> dims(static_cast<std::size_t>(d), 2);
  std::vector<int> labels(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) labels[static_cast<std::size_t>(k)] = k + 1;
  DenseTensor t(dims, std::vector<Complex>(psi.data(), psi.data() + psi.size()));
  DenseTensor mt = apply_dense(magnetization_operator(d), t, labels);
  const Complex v = dot(t, mt) / dot(t, t);
  return v.real();
}

inline ReferenceTrajectory exact_reference(const IsingSpec& spec, const Eigen::VectorXcd& psi0,
                                           double h, double t_final) {
  spec.validate();
  if (spec.d > 16) throw std::invalid_argument("exact_reference: dense path limited to 2^16");
  const Index n = Index{1} << spec.d;
  if (psi0.size() != n) throw std::invalid_argument("exact_reference: state length mismatch");
  const std::vector<Index> dims(static_cast<std::size_t>(spec.d), 2);
  Matrix hmat = materialize_dense(ising_hamiltonian(spec), dims, n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hmat);
  const Matrix& v = eig.eigenvectors();
  // X_k = exp(-i k h H) X_0, evaluated in the eigenbasis so unitarity does
  // not degrade with the step count
  const Eigen::VectorXcd coeff = v.adjoint() * psi0;

  ReferenceTrajectory out;
  const auto steps = static_cast<Index>(std::llround(t_final / h));
  out.times.push_back(0.0);
  out.states.push_back(psi0);
  out.magnetization.push_back(dense_magnetization(psi0, spec.d));
  for (Index s = 1; s <= steps; ++s) {
    const double t = static_cast<double>(s) * h;
    Eigen::VectorXcd z(n);
    for (Index k = 0; k < n; ++k) z(k) = coeff(k) * std::exp(Complex(0.0, -t * eig.eigenvalues()(k)));
    Eigen::VectorXcd psi = v * z;
    out.times.push_back(t);
    out.states.push_back(psi);
    out.magnetization.push_back(dense_magnetization(psi, spec.d));
  }
  return out;
}

inline Eigen::VectorXcd all_up_dense(int d) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(Index{1} << d);
  psi(0) = 1.0;
  return psi;
}

}  // namespace ttns
