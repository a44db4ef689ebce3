#pragma once

#include <cmath>
#include <random>
#include <utility>

#include "ttns/dense_tensor.hpp"
#include "ttns/linalg.hpp"
#include "ttns/tree.hpp"

namespace ttns {

/// Orthonormal tree tensor network: one basis matrix per leaf (n_l x r_l),
/// one connection tensor per internal node with the parent-facing mode as
/// mode 0 and one mode per child; the root has mode-0 dimension 1.
struct TTN {
  TreePtr tree;
  std::vector<DenseTensor> conn;   // indexed by node id, internal nodes only
  std::vector<Matrix> leaf_basis;  // indexed by node id, leaves only

  TTN() = default;
  explicit TTN(TreePtr t)
      : tree(std::move(t)),
        conn(static_cast<std::size_t>(tree->node_count())),
        leaf_basis(static_cast<std::size_t>(tree->node_count())) {}

  Index rank(int v) const {
    return tree->is_leaf(v) ? leaf_basis[static_cast<std::size_t>(v)].cols()
                            : conn[static_cast<std::size_t>(v)].dim(0);
  }

  TreeRank ranks() const {
    TreeRank r(static_cast<std::size_t>(tree->node_count()));
    for (int v = 0; v < tree->node_count(); ++v) r[static_cast<std::size_t>(v)] = rank(v);
    return r;
  }

  Index max_rank() const {
    Index m = 0;
    for (int v = 0; v < tree->node_count(); ++v) m = std::max(m, rank(v));
    return m;
  }

  const DenseTensor& core(int v) const { return conn[static_cast<std::size_t>(v)]; }
  DenseTensor& core(int v) { return conn[static_cast<std::size_t>(v)]; }
  const Matrix& basis(int v) const { return leaf_basis[static_cast<std::size_t>(v)]; }
  Matrix& basis(int v) { return leaf_basis[static_cast<std::size_t>(v)]; }

  void check_shapes() const {
    for (int v = 0; v < tree->node_count(); ++v) {
      if (tree->is_leaf(v)) {
        if (basis(v).rows() != tree->leaf_dim(v))
          throw std::invalid_argument("TTN: leaf basis rows must equal the physical dimension");
        continue;
      }
      const DenseTensor& c = core(v);
      if (c.order() != tree->arity(v) + 1)
        throw std::invalid_argument("TTN: connection tensor order mismatch");
      for (int i = 0; i < tree->arity(v); ++i)
        if (c.dim(i + 1) != rank(tree->child(v, i)))
          throw std::invalid_argument("TTN: connection tensor does not match child rank");
    }
    if (rank(tree->root()) != 1) throw std::invalid_argument("TTN: root rank must be 1");
  }
};

/// Number of stored scalars: sum of n_l * r_l over leaves plus the product of
/// the connection tensor dimensions over internal nodes.
inline Index param_count(const TTN& x) {
  Index n = 0;
  for (int v = 0; v < x.tree->node_count(); ++v)
    n += x.tree->is_leaf(v) ? x.basis(v).size() : x.core(v).size();
  return n;
}

/// Cross Gram <X_v, Y_v> = (mat_0 X_v^T)^* mat_0(Y_v)^T, computed recursively
/// without full tensors. Trees and physical dimensions must match; ranks may
/// differ (the result is rank(x at v) x rank(y at v)).
inline Matrix inner_at(const TTN& x, const TTN& y, int v) {
  const Tree& tx = *x.tree;
  if (tx.node_count() != y.tree->node_count())
    throw std::invalid_argument("inner: tree mismatch");
  if (tx.is_leaf(v)) {
    if (y.tree->leaf_dim(v) != tx.leaf_dim(v) || !y.tree->is_leaf(v))
      throw std::invalid_argument("inner: tree mismatch at a leaf");
    return x.basis(v).adjoint() * y.basis(v);
  }
  DenseTensor acc = y.core(v);
  for (int i = 0; i < tx.arity(v); ++i)
    acc = mode_product(acc, i + 1, inner_at(x, y, tx.child(v, i)));
  // acc's child modes now range over x's child ranks; close over mode 0.
  return gram0(x.core(v), acc);
}

inline Complex inner(const TTN& x, const TTN& y) {
  Matrix g = inner_at(x, y, x.tree->root());
  return g(0, 0);
}

inline double norm(const TTN& x) {
  const double v = std::real(inner(x, x));
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

namespace detail {

inline DenseTensor expand_node(const TTN& x, int v, Index cap);

/// Materialized basis U_v = mat_0(X_v)^T of the subtree at v (n_v x r_v).
inline Matrix basis_dense(const TTN& x, int v, Index cap) {
  if (x.tree->is_leaf(v)) return x.basis(v);
  DenseTensor t = expand_node(x, v, cap);
  return matricize(t, 0).transpose();
}

inline DenseTensor expand_node(const TTN& x, int v, Index cap) {
  const Index nv = x.tree->physical_dim(v) * x.rank(v);
  if (nv > cap) throw std::runtime_error("TTN dense expansion exceeds the configured cap");
  if (x.tree->is_leaf(v))  // X_l = U_l^T
    return tensorize(x.basis(v).transpose(), 0, {x.basis(v).cols(), x.basis(v).rows()});
  DenseTensor t = x.core(v);
  for (int i = 0; i < x.tree->arity(v); ++i)
    t = mode_product(t, i + 1, basis_dense(x, x.tree->child(v, i), cap));
  return t;
}

}  // namespace detail

constexpr Index kDefaultDenseCap = Index{1} << 20;

/// Full tensor with one mode per leaf, in tree leaf order. Test oracle; the
/// integrator never calls this.
inline DenseTensor to_full(const TTN& x, Index cap = kDefaultDenseCap) {
  DenseTensor t = detail::expand_node(x, x.tree->root(), cap);
  std::vector<Index> dims;
  for (int l : x.tree->leaves()) dims.push_back(x.tree->leaf_dim(l));
  return t.reshaped(dims);  // mode 0 has size 1; child modes factor leaf-wise
}

/// Materialized subtree basis (physical_dim(v) x rank(v)); test oracle.
inline Matrix subtree_basis_dense(const TTN& x, int v, Index cap = kDefaultDenseCap) {
  return detail::basis_dense(x, v, cap);
}

struct OrthonormalizeOptions {
  double deflation_rel_tol = 1e-12;  // singular values below tol*smax are dropped
};

/// Leaves-to-root factorization sweep: each non-root factor is replaced by an
/// orthonormal one and the triangular-like remainder is pushed into the
/// parent connection tensor. Rank-deficient factors are deflated, so the
/// represented tensor is preserved while ranks may drop.
inline TTN orthonormalize(const TTN& x, const OrthonormalizeOptions& opts = {}) {
  TTN out = x;
  const Tree& tree = *x.tree;
  for (int v : tree.postorder()) {
    if (v == tree.root()) continue;
    const int p = tree.parent(v);
    const auto& siblings = tree.children(p);
    const int i =
        static_cast<int>(std::find(siblings.begin(), siblings.end(), v) - siblings.begin());
    Matrix r;
    if (tree.is_leaf(v)) {
      QrResult f = orthonormal_factor(out.basis(v), opts.deflation_rel_tol);
      out.basis(v) = f.q;
      r = f.r;
    } else {
      QrResult f = orthonormal_factor(matricize(out.core(v), 0).transpose(), opts.deflation_rel_tol);
      out.core(v) = tensorize(f.q.transpose(), 0, [&] {
        std::vector<Index> d = out.core(v).dims();
        d[0] = f.q.cols();
        return d;
      }());
      r = f.r;
    }
    out.core(p) = mode_product(out.core(p), i + 1, r);
  }
  return out;
}

/// Checks the localized orthonormality criterion: every leaf basis and every
/// non-root mat_0(C_v)^T has orthonormal columns within tol.
inline bool is_orthonormal(const TTN& x, double tol = 1e-10) {
  const Tree& tree = *x.tree;
  for (int v = 0; v < tree.node_count(); ++v) {
    if (v == tree.root()) continue;  // the root factor carries the state's scale
    Matrix g;
    if (tree.is_leaf(v)) {
      g = x.basis(v).adjoint() * x.basis(v);
    } else {
      Matrix q = matricize(x.core(v), 0).transpose();
      g = q.adjoint() * q;
    }
    if ((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

namespace detail {

/// Deterministic standard complex Gaussians (Box-Muller on a fixed PRNG).
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : eng_(seed) {}
  Complex next() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return Complex(radius * std::cos(2.0 * M_PI * u2), radius * std::sin(2.0 * M_PI * u2));
  }

 private:
  double uniform() {
    // (0,1] to keep the logarithm finite
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  std::mt19937_64 eng_;
};

inline bool has_full_multilinear_rank(const DenseTensor& c, double sigma_floor) {
  for (int m = 0; m < c.order(); ++m) {
    SvdResult svd = svd_reduced(matricize(c, m));
    if (svd.sigma.size() < c.dim(m)) return false;
    if (svd.sigma(svd.sigma.size() - 1) <= sigma_floor) return false;
  }
  return true;
}

}  // namespace detail

/// Rank-1 product state from one vector per leaf (keyed by leaf label).
inline TTN product_state(TreePtr tree, const std::map<int, Eigen::VectorXcd>& leaf_vectors) {
  TTN x(tree);
  for (int v = 0; v < tree->node_count(); ++v) {
    if (tree->is_leaf(v)) {
      const auto it = leaf_vectors.find(tree->leaf_label(v));
      if (it == leaf_vectors.end())
        throw std::invalid_argument("product_state: missing vector for a leaf label");
      if (it->second.size() != tree->leaf_dim(v))
        throw std::invalid_argument("product_state: vector length does not match the leaf");
      x.basis(v) = it->second;
    } else {
      DenseTensor c(std::vector<Index>(static_cast<std::size_t>(tree->arity(v)) + 1, 1));
      c[0] = Complex(1.0, 0.0);
      x.core(v) = c;
    }
  }
  return x;
}

/// Deterministic random orthonormal TTN of the given tree rank with full
/// multilinear rank at every connection tensor.
inline TTN random_ttn(TreePtr tree, const TreeRank& rank, std::uint64_t seed) {
  validate_tree_rank(*tree, rank);
  for (int attempt = 0; attempt < 32; ++attempt) {
    detail::GaussianSource rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(attempt));
    TTN x(tree);
    for (int v = 0; v < tree->node_count(); ++v) {
      if (tree->is_leaf(v)) {
        Matrix u(tree->leaf_dim(v), rank[static_cast<std::size_t>(v)]);
        for (Eigen::Index j = 0; j < u.cols(); ++j)
          for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, j) = rng.next();
        x.basis(v) = u;
      } else {
        std::vector<Index> dims{rank[static_cast<std::size_t>(v)]};
        for (int c : tree->children(v)) dims.push_back(rank[static_cast<std::size_t>(c)]);
        DenseTensor t(dims);
        for (Index k = 0; k < t.size(); ++k) t[k] = rng.next();
        x.core(v) = t;
      }
    }
    TTN y = orthonormalize(x);
    if (y.ranks() != rank) continue;  // deflation hit: resample
    if (!tree->is_leaf(tree->root())) {
      DenseTensor& root = y.core(tree->root());
      root *= Complex(1.0 / frobenius_norm(root), 0.0);  // unit-norm sample
    }
    bool full_rank = true;
    for (int v = 0; v < tree->node_count(); ++v)
      if (!tree->is_leaf(v) && !detail::has_full_multilinear_rank(y.core(v), 1e-6)) {
        full_rank = false;
        break;
      }
    if (full_rank) return y;
  }
  throw std::runtime_error("random_ttn: could not draw a full-rank sample for this rank map");
}

}  // namespace ttns
