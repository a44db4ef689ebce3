#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>

#include "ttns/dense_tensor.hpp"
#include "ttns/linalg.hpp"
#include "ttns/ttn.hpp"

namespace ttns {

/// One coefficient-weighted tensor product of single-site matrices; sites not
/// listed act as the identity. Keys are 1-based leaf labels.
struct KronTerm {
  Complex coeff;
  std::map<int, Matrix> site;
};

/// Linear operator given as a sum of Kronecker terms.
struct KroneckerSumOp {
  std::vector<KronTerm> terms;
};

inline std::uint64_t term_support_mask(const KronTerm& term) {
  std::uint64_t m = 0;
  for (const auto& [label, op] : term.site) {
    if (label < 1 || label > 64)
      throw std::invalid_argument("KronTerm: leaf labels must lie in 1..64");
    (void)op;
    m |= std::uint64_t{1} << (label - 1);
  }
  return m;
}

/// Leaf-label masks per tree node.
inline std::vector<std::uint64_t> node_leaf_masks(const Tree& tree) {
  std::vector<std::uint64_t> masks(static_cast<std::size_t>(tree.node_count()), 0);
  for (int v : tree.postorder()) {
    if (tree.is_leaf(v)) {
      const int label = tree.leaf_label(v);
      if (label < 1 || label > 64)
        throw std::invalid_argument("node_leaf_masks: leaf labels must lie in 1..64");
      masks[static_cast<std::size_t>(v)] = std::uint64_t{1} << (label - 1);
    } else {
      for (int c : tree.children(v))
        masks[static_cast<std::size_t>(v)] |= masks[static_cast<std::size_t>(c)];
    }
  }
  return masks;
}

/// Applies the operator to a dense tensor whose mode i carries the leaf with
/// label mode_labels[i].
inline DenseTensor apply_dense(const KroneckerSumOp& op, const DenseTensor& psi,
                               const std::vector<int>& mode_labels,
                               Index cap = kDefaultDenseCap) {
  if (psi.size() > cap) throw std::runtime_error("apply_dense: tensor exceeds the dense cap");
  if (static_cast<int>(mode_labels.size()) != psi.order())
    throw std::invalid_argument("apply_dense: one label per mode required");
  DenseTensor out(psi.dims());
  for (const KronTerm& term : op.terms) {
    DenseTensor t = psi;
    for (const auto& [label, a] : term.site) {
      const auto it = std::find(mode_labels.begin(), mode_labels.end(), label);
      if (it == mode_labels.end())
        throw std::invalid_argument("apply_dense: operator touches a label not present");
      const int mode = static_cast<int>(it - mode_labels.begin());
      if (a.rows() != a.cols() || a.cols() != psi.dim(mode))
        throw std::invalid_argument("apply_dense: site matrix does not match the leaf dimension");
      t = mode_product(t, mode, a);
    }
    t *= term.coeff;
    out += t;
  }
  return out;
}

/// Dense matrix of the operator on the tensor space with modes = labels 1..d
/// (first label fastest). Test-sized inputs only.
inline Matrix materialize_dense(const KroneckerSumOp& op, const std::vector<Index>& dims_by_label,
                                Index cap = 4096) {
  Index n = 1;
  for (Index d : dims_by_label) n *= d;
  if (n > cap) throw std::runtime_error("materialize_dense: operator exceeds the dense cap");
  Matrix out = Matrix::Zero(n, n);
  for (const KronTerm& term : op.terms) {
    std::vector<Matrix> factors;
    for (std::size_t k = 0; k < dims_by_label.size(); ++k) {
      const auto it = term.site.find(static_cast<int>(k) + 1);
      factors.push_back(it == term.site.end()
                            ? Matrix::Identity(dims_by_label[k], dims_by_label[k])
                            : it->second);
    }
    out += term.coeff * kron_first_fastest(factors);
  }
  return out;
}

inline bool is_hermitian_dense(const KroneckerSumOp& op, const std::vector<Index>& dims_by_label,
                               double tol = 1e-12, Index cap = 4096) {
  Matrix h = materialize_dense(op, dims_by_label, cap);
  return (h - h.adjoint()).cwiseAbs().maxCoeff() <= tol * (1.0 + h.cwiseAbs().maxCoeff());
}

/// Product op_a * op_b as a Kronecker sum (site matrices multiply where the
/// supports meet).
inline KroneckerSumOp compose(const KroneckerSumOp& a, const KroneckerSumOp& b) {
  KroneckerSumOp out;
  for (const KronTerm& p : a.terms)
    for (const KronTerm& q : b.terms) {
      KronTerm t;
      t.coeff = p.coeff * q.coeff;
      t.site = q.site;
      for (const auto& [label, m] : p.site) {
        auto it = t.site.find(label);
        if (it == t.site.end())
          t.site.emplace(label, m);
        else
          it->second = m * it->second;  // apply b first, then a
      }
      out.terms.push_back(std::move(t));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Environment blocks: projected single-site products through a TTN.
// ---------------------------------------------------------------------------

/// blocks[node][term] = <U_node | (x) site ops in L(node) | U_node>, with an
/// empty matrix standing for the identity (term does not touch the subtree).
/// With orthonormal factors, untouched subtrees contract to the identity; for
/// general factors pass assume_orthonormal = false.
struct EnvBundle {
  std::vector<std::vector<Matrix>> blocks;
  std::vector<std::uint64_t> term_masks;
  std::vector<std::uint64_t> node_masks;

  const Matrix* block(int node, int term) const {
    const Matrix& b = blocks[static_cast<std::size_t>(node)][static_cast<std::size_t>(term)];
    return b.size() == 0 ? nullptr : &b;
  }

  static EnvBundle build(const TTN& x, const KroneckerSumOp& op, bool assume_orthonormal = true) {
    const Tree& tree = *x.tree;
    EnvBundle env;
    env.node_masks = node_leaf_masks(tree);
    env.term_masks.reserve(op.terms.size());
    for (const KronTerm& t : op.terms) env.term_masks.push_back(term_support_mask(t));
    env.blocks.assign(static_cast<std::size_t>(tree.node_count()),
                      std::vector<Matrix>(op.terms.size()));
    for (int v : tree.postorder()) {
      for (std::size_t p = 0; p < op.terms.size(); ++p) {
        const bool touched = (env.term_masks[p] & env.node_masks[static_cast<std::size_t>(v)]) != 0;
        if (!touched && assume_orthonormal) continue;
        Matrix& out = env.blocks[static_cast<std::size_t>(v)][p];
        if (tree.is_leaf(v)) {
          const Matrix& u = x.basis(v);
          const auto it = op.terms[p].site.find(tree.leaf_label(v));
          out = it == op.terms[p].site.end() ? Matrix(u.adjoint() * u)
                                             : Matrix(u.adjoint() * it->second * u);
        } else {
          DenseTensor acc = x.core(v);
          for (int i = 0; i < tree.arity(v); ++i) {
            const Matrix* b = env.block(tree.child(v, i), static_cast<int>(p));
            if (b != nullptr) acc = mode_product(acc, i + 1, *b);
          }
          out = gram0(x.core(v), acc);
        }
      }
    }
    return env;
  }
};

/// <x, op x> without dense tensors: the root environment block of each term
/// is already the full 1x1 contraction. Requires a self-adjoint operator; the
/// imaginary residue is checked.
inline double energy(const KroneckerSumOp& op, const TTN& x, bool assume_orthonormal = true) {
  EnvBundle env = EnvBundle::build(x, op, assume_orthonormal);
  const int root = x.tree->root();
  Complex e(0.0, 0.0);
  const Complex norm2 = inner(x, x);
  for (std::size_t p = 0; p < op.terms.size(); ++p) {
    const Matrix* b = env.block(root, static_cast<int>(p));
    e += op.terms[p].coeff * (b == nullptr ? norm2 : (*b)(0, 0));
  }
  if (std::abs(e.imag()) > 1e-8 * (1.0 + std::abs(e.real())))
    throw std::runtime_error("energy: operator is not self-adjoint on this state");
  return e.real();
}

// ---------------------------------------------------------------------------
// Reduced operators on subtrees.
// ---------------------------------------------------------------------------

enum class RhsKind { schrodinger, gradient, explicit_fn, zero };

inline Complex rhs_scale(RhsKind kind) {
  switch (kind) {
    case RhsKind::schrodinger:
      return Complex(0.0, -1.0);  // F = -i H[Y]
    case RhsKind::gradient:
      return Complex(-2.0, 0.0);  // F = -grad <Y,HY> = -2 H[Y]
    default:
      return Complex(0.0, 0.0);
  }
}

/// One term of a reduced operator: coeff * (env0 on mode 0) * (surviving site
/// ops inside the subtree). env0 of size 0 stands for the identity;
/// root_term < 0 marks terms whose site part is fully outside the subtree
/// (merged into a single environment term).
struct ReducedTerm {
  Complex coeff;
  Matrix env0;
  int root_term = -1;
};

/// Reduced right-hand side operator at a tree node.
struct NodeOperator {
  std::vector<ReducedTerm> terms;
};

inline NodeOperator root_operator(const KroneckerSumOp& op, Complex scale) {
  NodeOperator out;
  for (std::size_t p = 0; p < op.terms.size(); ++p)
    out.terms.push_back({scale * op.terms[p].coeff, Matrix(), static_cast<int>(p)});
  return out;
}

/// Accessor for sibling blocks during reduction and for child blocks in the
/// Galerkin right-hand side: (child index, root term) -> block or identity.
using BlockFn = std::function<const Matrix*(int, int)>;

/// Reduces a node operator to child i through the starting-value data:
/// q_core = ten_{i+1}(Q^T) from the QR of mat_{i+1}(C^0)^T. Sibling site
/// factors are contracted into a new mode-0 environment; site factors inside
/// the child pass through (tracked by root_term). Terms without support in
/// the child collapse into one merged environment term.
inline NodeOperator reduce_to_child(const NodeOperator& parent, const DenseTensor& q_core, int i,
                                    int arity, const BlockFn& sibling_block,
                                    std::uint64_t child_mask,
                                    const std::vector<std::uint64_t>& term_masks) {
  const int mode = i + 1;
  const Index rc = q_core.dim(mode);
  NodeOperator out;
  Matrix env_acc;
  for (const ReducedTerm& term : parent.terms) {
    bool trivial = term.env0.size() == 0;
    DenseTensor t = q_core;
    if (term.env0.size() != 0) t = mode_product(t, 0, term.env0);
    for (int j = 0; j < arity; ++j) {
      if (j == i) continue;
      const Matrix* b = term.root_term >= 0 ? sibling_block(j, term.root_term) : nullptr;
      if (b != nullptr) {
        t = mode_product(t, j + 1, *b);
        trivial = false;
      }
    }
    Matrix env = trivial ? Matrix() : Matrix(partial_gram(q_core, t, mode));
    const bool keep = term.root_term >= 0 &&
                      (term_masks[static_cast<std::size_t>(term.root_term)] & child_mask) != 0;
    if (keep) {
      out.terms.push_back({term.coeff, std::move(env), term.root_term});
    } else {
      if (env_acc.size() == 0) env_acc = Matrix::Zero(rc, rc);
      env_acc += term.coeff * (env.size() == 0 ? Matrix(Matrix::Identity(rc, rc)) : env);
    }
  }
  if (env_acc.size() != 0) out.terms.push_back({Complex(1.0, 0.0), std::move(env_acc), -1});
  return out;
}

// ---------------------------------------------------------------------------
// Precompiled linear right-hand sides for the core and leaf subflow ODEs.
// ---------------------------------------------------------------------------

/// Linear map c -> sum of mode products, grouped so that terms acting through
/// a single factor share one matrix per mode.
struct CoreRhs {
  Complex id_coeff{0.0, 0.0};
  Matrix mode0;                // accumulated mode-0 factor (0x0 if none)
  std::vector<Matrix> single;  // accumulated per-mode factors for modes 1..m
  struct CrossTerm {
    Complex coeff;
    Matrix env0;                 // 0x0 = identity
    std::vector<Matrix> factor;  // per mode 1..m; 0x0 = identity
  };
  std::vector<CrossTerm> cross;

  DenseTensor apply(const DenseTensor& c) const {
    DenseTensor out(c.dims());
    if (id_coeff != Complex(0.0, 0.0)) {
      DenseTensor t = c;
      t *= id_coeff;
      out += t;
    }
    if (mode0.size() != 0) out += mode_product(c, 0, mode0);
    for (std::size_t j = 0; j < single.size(); ++j)
      if (single[j].size() != 0) out += mode_product(c, static_cast<int>(j) + 1, single[j]);
    for (const CrossTerm& ct : cross) {
      DenseTensor t = c;
      if (ct.env0.size() != 0) t = mode_product(t, 0, ct.env0);
      for (std::size_t j = 0; j < ct.factor.size(); ++j)
        if (ct.factor[j].size() != 0) t = mode_product(t, static_cast<int>(j) + 1, ct.factor[j]);
      t *= ct.coeff;
      out += t;
    }
    return out;
  }
};

/// Compiles a node operator against per-child blocks (internal nodes) or a
/// single physical mode (leaves, with child_block returning the site matrix).
inline CoreRhs build_core_rhs(const NodeOperator& node_op, int n_modes,
                              const BlockFn& child_block) {
  CoreRhs rhs;
  rhs.single.resize(static_cast<std::size_t>(n_modes));
  for (const ReducedTerm& term : node_op.terms) {
    std::vector<const Matrix*> factors(static_cast<std::size_t>(n_modes), nullptr);
    int active = 0;
    for (int j = 0; j < n_modes; ++j) {
      factors[static_cast<std::size_t>(j)] =
          term.root_term >= 0 ? child_block(j, term.root_term) : nullptr;
      if (factors[static_cast<std::size_t>(j)] != nullptr) ++active;
    }
    const bool has_env = term.env0.size() != 0;
    const int weight = active + (has_env ? 1 : 0);
    if (weight == 0) {
      rhs.id_coeff += term.coeff;
    } else if (weight == 1) {
      if (has_env) {
        if (rhs.mode0.size() == 0)
          rhs.mode0 = term.coeff * term.env0;
        else
          rhs.mode0 += term.coeff * term.env0;
      } else {
        for (int j = 0; j < n_modes; ++j)
          if (factors[static_cast<std::size_t>(j)] != nullptr) {
            Matrix& slot = rhs.single[static_cast<std::size_t>(j)];
            if (slot.size() == 0)
              slot = term.coeff * (*factors[static_cast<std::size_t>(j)]);
            else
              slot += term.coeff * (*factors[static_cast<std::size_t>(j)]);
          }
      }
    } else {
      CoreRhs::CrossTerm ct;
      ct.coeff = term.coeff;
      ct.env0 = term.env0;
      ct.factor.resize(static_cast<std::size_t>(n_modes));
      for (int j = 0; j < n_modes; ++j)
        if (factors[static_cast<std::size_t>(j)] != nullptr)
          ct.factor[static_cast<std::size_t>(j)] = *factors[static_cast<std::size_t>(j)];
      rhs.cross.push_back(std::move(ct));
    }
  }
  return rhs;
}

/// Projected right-hand side F_tau(C x U) x U^* for the connection-tensor
/// ODE, evaluated through per-term child blocks.
inline DenseTensor galerkin_rhs(const NodeOperator& node_op, const DenseTensor& c_hat,
                                const BlockFn& child_block) {
  return build_core_rhs(node_op, c_hat.order() - 1, child_block).apply(c_hat);
}

// ---------------------------------------------------------------------------
// Dense prolongation / restriction (oracle path, capped sizes).
// ---------------------------------------------------------------------------

/// Explicit prolongation/restriction pair between a node's tensor space and a
/// child's, relative to a starting value. Everything is materialized, so this
/// path is for test-sized problems and the explicit right-hand-side fallback.
struct DenseProjection {
  Matrix v0;                       // (r_parent * prod_{j != i} n_j) x r_child
  Matrix s_factor;                 // R from the QR of mat_{i+1}(C)^T
  DenseTensor q_core;              // ten_{i+1}(Q^T), core-sized
  std::vector<Index> parent_dims;  // (r_parent, n_child_1, ..., n_child_m)
  std::vector<Index> child_dims;   // (r_child, grandchild physical dims)
  int mode = 0;                    // i + 1

  DenseTensor prolong(const DenseTensor& z) const {
    Matrix m0 = matricize(z, 0);
    return tensorize((v0 * m0).transpose(), mode, parent_dims);
  }

  DenseTensor restrict_to_child(const DenseTensor& w) const {
    Matrix mi = matricize(w, mode);
    return tensorize((mi * v0.conjugate()).transpose(), 0, child_dims);
  }
};

/// Builds the projection for child i of node v from the state x, using the
/// effective connection tensor c_eff (the node's tensor with any parent
/// factor already applied).
inline DenseProjection make_dense_projection(const TTN& x, int v, int i, const DenseTensor& c_eff,
                                             Index cap = kDefaultDenseCap) {
  const Tree& tree = *x.tree;
  const int childv = tree.child(v, i);
  DenseProjection proj;
  proj.mode = i + 1;
  QrResult qr = qr_thin(matricize(c_eff, i + 1).transpose());
  proj.s_factor = qr.r;
  proj.q_core = tensorize(qr.q.transpose(), i + 1, [&] {
    std::vector<Index> d = c_eff.dims();
    d[static_cast<std::size_t>(i + 1)] = qr.q.cols();
    return d;
  }());
  DenseTensor t = proj.q_core;
  for (int j = 0; j < tree.arity(v); ++j) {
    if (j == i) continue;
    t = mode_product(t, j + 1, subtree_basis_dense(x, tree.child(v, j), cap));
  }
  proj.v0 = matricize(t, i + 1).transpose();
  proj.parent_dims.push_back(c_eff.dim(0));
  for (int j = 0; j < tree.arity(v); ++j)
    proj.parent_dims.push_back(tree.physical_dim(tree.child(v, j)));
  proj.child_dims.push_back(qr.q.cols());
  if (tree.is_leaf(childv)) {
    proj.child_dims.push_back(tree.leaf_dim(childv));
  } else {
    for (int c : tree.children(childv)) proj.child_dims.push_back(tree.physical_dim(c));
  }
  return proj;
}

inline DenseProjection make_dense_projection(const TTN& x, int v, int i,
                                             Index cap = kDefaultDenseCap) {
  return make_dense_projection(x, v, i, x.core(v), cap);
}

/// Kronecker product of a term's site matrices over the leaves of the
/// subtree at v (identity where the term has no site), in the flattened
/// first-leaf-fastest ordering. Returns nullopt if the term does not touch
/// the subtree.
inline std::optional<Matrix> term_factor_on_subtree(const KroneckerSumOp& op, int term,
                                                    const Tree& tree, int v) {
  const KronTerm& t = op.terms.at(static_cast<std::size_t>(term));
  std::vector<Matrix> factors;
  bool touched = false;
  for (int l : tree.leaves(v)) {
    const auto it = t.site.find(tree.leaf_label(l));
    if (it == t.site.end()) {
      factors.push_back(Matrix::Identity(tree.leaf_dim(l), tree.leaf_dim(l)));
    } else {
      factors.push_back(it->second);
      touched = true;
    }
  }
  if (!touched) return std::nullopt;
  return kron_first_fastest(factors);
}

/// Dense application of a reduced operator to an element of the node's
/// tensor space (mode 0 = rank, one flattened physical mode per child).
/// Test-sized inputs only.
inline DenseTensor apply_reduced_dense(const NodeOperator& node_op, const KroneckerSumOp& op,
                                       const Tree& tree, int v, const DenseTensor& z,
                                       Index cap = kDefaultDenseCap) {
  if (z.size() > cap) throw std::runtime_error("apply_reduced_dense: tensor exceeds the cap");
  DenseTensor out(z.dims());
  const int m = tree.is_leaf(v) ? 1 : tree.arity(v);
  for (const ReducedTerm& term : node_op.terms) {
    DenseTensor t = z;
    if (term.env0.size() != 0) t = mode_product(t, 0, term.env0);
    if (term.root_term >= 0) {
      for (int j = 0; j < m; ++j) {
        const int cj = tree.is_leaf(v) ? v : tree.child(v, j);
        std::optional<Matrix> a = term_factor_on_subtree(op, term.root_term, tree, cj);
        if (a) t = mode_product(t, j + 1, *a);
      }
    }
    t *= term.coeff;
    out += t;
  }
  return out;
}

}  // namespace ttns
