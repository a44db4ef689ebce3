#pragma once

#include "ttns/linalg.hpp"
#include "ttns/ode.hpp"
#include "ttns/truncation.hpp"

namespace ttns {

/// Tucker tensor in extended form: the core carries a leading mode 0 whose
/// basis is the identity (r0 = 1 recovers the plain format), followed by one
/// mode per basis matrix.
struct TuckerState {
  DenseTensor core;            // (r0, r_1, ..., r_d)
  std::vector<Matrix> bases;   // U_i of shape n_i x r_i, orthonormal columns

  int order() const { return static_cast<int>(bases.size()); }
  Index extended_rank() const { return core.dim(0); }

  void check_shapes() const {
    if (core.order() != order() + 1)
      throw std::invalid_argument("TuckerState: core order must be #bases + 1");
    for (int i = 0; i < order(); ++i)
      if (bases[static_cast<std::size_t>(i)].cols() != core.dim(i + 1))
        throw std::invalid_argument("TuckerState: basis does not match core mode");
  }
};

/// Wraps a plain Tucker core (r_1, ..., r_d) into the extended form.
inline TuckerState tucker_from_plain(const DenseTensor& core, std::vector<Matrix> bases) {
  std::vector<Index> dims{1};
  for (Index d : core.dims()) dims.push_back(d);
  TuckerState s{core.reshaped(dims), std::move(bases)};
  s.check_shapes();
  return s;
}

/// Full tensor (r0, n_1, ..., n_d) of the extended Tucker state.
inline DenseTensor tucker_reconstruct(const TuckerState& s) {
  DenseTensor t = s.core;
  for (int i = 0; i < s.order(); ++i)
    t = mode_product(t, i + 1, s.bases[static_cast<std::size_t>(i)]);
  return t;
}

/// Right-hand side on extended full tensors (r0, n_1, ..., n_d).
using TensorField = std::function<DenseTensor(double, const DenseTensor&)>;

struct BasisUpdate {
  Matrix u_hat;  // n_i x r_hat, orthonormal columns
  Matrix m_hat;  // r_hat x r_i, u_hat^* u_old
};

/// Basis update and augmentation for mode i (1-based): integrates the
/// K-equation in the fixed complementary subspace and returns an orthonormal
/// basis of span(K(t1), U_i^0) (adaptive) or span(K(t1)) (fixed-rank).
inline BasisUpdate phi_basis(const TuckerState& s, int i, const TensorField& f, double t0,
                             double t1, const OdeConfig& ode, bool augment_with_old = true) {
  if (i < 1 || i > s.order()) throw std::invalid_argument("phi_basis: mode out of range");
  const Matrix& u0 = s.bases[static_cast<std::size_t>(i - 1)];
  QrResult qr = qr_thin(matricize(s.core, i).transpose());
  // complementary factor V: mat_i of ten_i(Q^T) expanded by the other bases
  DenseTensor t = tensorize(qr.q.transpose(), i, [&] {
    std::vector<Index> d = s.core.dims();
    d[static_cast<std::size_t>(i)] = qr.q.cols();
    return d;
  }());
  for (int j = 1; j <= s.order(); ++j) {
    if (j == i) continue;
    t = mode_product(t, j, s.bases[static_cast<std::size_t>(j - 1)]);
  }
  const Matrix v = matricize(t, i).transpose();
  const Matrix v_conj = v.conjugate();

  std::vector<Index> full_dims = t.dims();
  full_dims[static_cast<std::size_t>(i)] = u0.rows();
  const std::vector<Index> k_dims{u0.rows(), qr.q.cols()};
  OdeField k_field = [&](double time, const DenseTensor& k) {
    Matrix km = matricize(k, 0);
    DenseTensor y = tensorize((v * km.transpose()).transpose(), i, full_dims);
    Matrix rhs = matricize(f(time, y), i) * v_conj;
    return tensorize(rhs, 0, k_dims);
  };
  Matrix k0 = u0 * qr.r.transpose();
  DenseTensor k1 = ode_solve(k_field, tensorize(k0, 0, k_dims), t0, t1, ode);
  Matrix k1m = matricize(k1, 0);

  BasisUpdate out;
  out.u_hat = augment_with_old ? orthonormal_range(hcat(k1m, u0)) : orthonormal_range(k1m);
  if (out.u_hat.cols() == 0) {  // degenerate field: keep one direction
    out.u_hat = Matrix::Zero(u0.rows(), 1);
    out.u_hat(0, 0) = 1.0;
  }
  out.m_hat = out.u_hat.adjoint() * u0;
  return out;
}

/// The mode-0 subflow of the extended integrator is trivial: the augmented
/// basis of span(K_0(t1), I) is the identity, and so is the Gram with the
/// old basis.
inline std::pair<Matrix, Matrix> phi_zero_is_trivial(const TuckerState& s) {
  const Index r0 = s.extended_rank();
  return {Matrix::Identity(r0, r0), Matrix::Identity(r0, r0)};
}

struct CoreUpdate {
  DenseTensor c_hat1;  // evolved augmented core
  DenseTensor c_hat0;  // augmented starting core C^0 x M_hat
};

/// Galerkin step for the core in the augmented bases: starts from
/// C^0 x_i M_hat_i and integrates the orthogonally projected equation.
inline CoreUpdate psi_core(const DenseTensor& c0, const std::vector<Matrix>& u_hats,
                           const std::vector<Matrix>& m_hats, const TensorField& f, double t0,
                           double t1, const OdeConfig& ode) {
  const int d = static_cast<int>(u_hats.size());
  DenseTensor c_hat0 = c0;
  for (int i = 1; i <= d; ++i)
    c_hat0 = mode_product(c_hat0, i, m_hats[static_cast<std::size_t>(i - 1)]);
  std::vector<Matrix> adjoints;
  for (const Matrix& u : u_hats) adjoints.push_back(u.adjoint());
  OdeField field = [&](double time, const DenseTensor& c) {
    DenseTensor y = c;
    for (int i = 1; i <= d; ++i) y = mode_product(y, i, u_hats[static_cast<std::size_t>(i - 1)]);
    DenseTensor fy = f(time, y);
    for (int i = 1; i <= d; ++i) fy = mode_product(fy, i, adjoints[static_cast<std::size_t>(i - 1)]);
    return fy;
  };
  CoreUpdate out;
  out.c_hat1 = ode_solve(field, c_hat0, t0, t1, ode);
  out.c_hat0 = std::move(c_hat0);
  return out;
}

struct TuckerStepResult {
  TuckerState state;
  TruncationReport truncation;
};

/// One step of the rank-adaptive Tucker integrator: per-mode basis update and
/// augmentation, Galerkin core update in the augmented bases, then rank
/// truncation with tolerance theta (the height-1 instance of the tree
/// truncation engine).
inline TuckerStepResult tucker_step(const TuckerState& s, const TensorField& f, double t0,
                                    double t1, double theta, const OdeConfig& ode,
                                    Index rank_cap = 0) {
  s.check_shapes();
  const int d = s.order();
  std::vector<Matrix> u_hats, m_hats;
  for (int i = 1; i <= d; ++i) {
    BasisUpdate b = phi_basis(s, i, f, t0, t1, ode);
    if (b.u_hat.cols() > 2 * s.core.dim(i))
      throw std::runtime_error("tucker_step: augmented rank exceeds twice the input rank");
    u_hats.push_back(std::move(b.u_hat));
    m_hats.push_back(std::move(b.m_hat));
  }
  CoreUpdate core = psi_core(s.core, u_hats, m_hats, f, t0, t1, ode);

  // height-1 tree wrap for the shared truncation engine
  std::vector<Index> leaf_dims;
  for (const Matrix& u : u_hats) leaf_dims.push_back(u.rows());
  auto tree = std::make_shared<Tree>(Tree::star(leaf_dims));
  TTN wrap(tree);
  wrap.core(tree->root()) = core.c_hat1;
  for (int i = 0; i < d; ++i)
    wrap.basis(tree->leaves()[static_cast<std::size_t>(i)]) = u_hats[static_cast<std::size_t>(i)];
  TruncationOptions opts;
  opts.theta = theta;
  opts.rank_cap = rank_cap;
  auto [truncated, report] = truncate(wrap, opts);

  TuckerStepResult out;
  out.state.core = truncated.core(tree->root());
  for (int l : tree->leaves()) out.state.bases.push_back(truncated.basis(l));
  out.truncation = std::move(report);
  // at height 1 the truncated bases U_hat * P stay orthonormal
  return out;
}

}  // namespace ttns
