#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttns/dense_tensor.hpp"

namespace ttns {

/// Ordered rooted tree with labeled leaves. Vertices are stored in preorder;
/// node 0 is the root. Every subtree is addressed both by its node id and by
/// the path of child indices from the root.
class Tree {
 public:
  struct Node {
    std::vector<int> children;  // empty for leaves
    int parent = -1;
    int leaf_label = 0;  // 1-based, leaves only
    Index dim = 0;       // physical dimension, leaves only
  };

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int root() const { return 0; }
  bool is_leaf(int v) const { return nodes_[idx(v)].children.empty(); }
  int parent(int v) const { return nodes_[idx(v)].parent; }
  int arity(int v) const { return static_cast<int>(nodes_[idx(v)].children.size()); }
  int child(int v, int i) const { return nodes_[idx(v)].children.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& children(int v) const { return nodes_[idx(v)].children; }
  int leaf_label(int v) const { return nodes_[idx(v)].leaf_label; }
  Index leaf_dim(int v) const { return nodes_[idx(v)].dim; }

  int height(int v) const {
    if (is_leaf(v)) return 0;
    int h = 0;
    for (int c : children(v)) h = std::max(h, height(c));
    return 1 + h;
  }
  int height() const { return height(root()); }

  int vertex_count(int v) const {
    int n = 1;
    for (int c : children(v)) n += vertex_count(c);
    return n;
  }
  int vertex_count() const { return vertex_count(root()); }

  /// Leaf node ids of the subtree at v, in tree order.
  std::vector<int> leaves(int v) const {
    std::vector<int> out;
    collect_leaves(v, out);
    return out;
  }
  std::vector<int> leaves() const { return leaves(root()); }
  int leaf_count() const { return static_cast<int>(leaves().size()); }

  /// Product of physical dimensions below v.
  Index physical_dim(int v) const {
    Index n = 1;
    for (int l : leaves(v)) n *= leaf_dim(l);
    return n;
  }

  /// Path of child indices from the root to v.
  std::vector<int> address(int v) const {
    std::vector<int> path;
    while (v != root()) {
      const int p = parent(v);
      const auto& ch = children(p);
      const auto it = std::find(ch.begin(), ch.end(), v);
      path.push_back(static_cast<int>(it - ch.begin()));
      v = p;
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  int resolve(const std::vector<int>& path) const {
    int v = root();
    for (int i : path) {
      if (i < 0 || i >= arity(v)) throw std::invalid_argument("Tree::resolve: bad address");
      v = child(v, i);
    }
    return v;
  }

  /// Nested-list literal with 1-based leaf labels, e.g. "((1,2),(3,4))".
  std::string to_literal() const { return literal_of(root()); }

  /// Node ids in a bottom-up order (children before parents).
  std::vector<int> postorder() const {
    std::vector<int> out;
    post(root(), out);
    return out;
  }

  /// Degenerate tree consisting of one leaf (the state is a single vector).
  static Tree single_leaf(int label, Index dim) {
    Tree t;
    t.add_leaf(-1, label, dim);
    return t;
  }

  /// Height-1 tree: one root with d leaf children of the given dimensions.
  static Tree star(const std::vector<Index>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("Tree::star: at least 2 leaves");
    Tree t;
    const int node = t.add_node(-1);
    for (std::size_t k = 0; k < dims.size(); ++k)
      t.add_leaf(node, static_cast<int>(k) + 1, dims[k]);
    t.validate();
    return t;
  }

  /// Balanced binary tree: the first ceil(k/2) leaves go left, recursively.
  static Tree balanced_binary(Index n_per_leaf, int d) {
    check_d(d);
    Tree t;
    t.build_balanced(1, d, n_per_leaf, -1);
    t.validate();
    return t;
  }

  /// Right-leaning binary comb of maximal height (tensor-train shape).
  static Tree tensor_train(Index n_per_leaf, int d) {
    check_d(d);
    Tree t;
    int parent = -1;
    for (int k = 1; k <= d - 1; ++k) {
      const int node = t.add_node(parent);
      t.add_leaf(node, k, n_per_leaf);
      parent = node;
    }
    t.add_leaf(parent, d, n_per_leaf);
    t.validate();
    return t;
  }

  /// Parses a nested-list literal such as "((1,2),(3,4))" or "(1,(2,3),4)".
  /// All leaves get the same physical dimension n_per_leaf.
  static Tree parse(const std::string& literal, Index n_per_leaf) {
    Tree t;
    std::size_t pos = 0;
    t.parse_subtree(literal, pos, n_per_leaf, -1);
    skip_ws(literal, pos);
    if (pos != literal.size()) throw std::invalid_argument("Tree::parse: trailing characters");
    if (t.node_count() == 1) throw std::invalid_argument("Tree::parse: a single leaf is not a tree");
    t.validate();
    return t;
  }

 private:
  std::vector<Node> nodes_;

  static std::size_t idx(int v) { return static_cast<std::size_t>(v); }

  static void check_d(int d) {
    if (d < 2) throw std::invalid_argument("tree construction requires at least 2 leaves");
  }

  int add_node(int parent) {
    Node n;
    n.parent = parent;
    nodes_.push_back(n);
    const int id = node_count() - 1;
    if (parent >= 0) nodes_[idx(parent)].children.push_back(id);
    return id;
  }

  int add_leaf(int parent, int label, Index dim) {
    const int id = add_node(parent);
    nodes_[idx(id)].leaf_label = label;
    nodes_[idx(id)].dim = dim;
    return id;
  }

  void build_balanced(int lo, int hi, Index n, int parent) {
    if (lo == hi) {
      add_leaf(parent, lo, n);
      return;
    }
    const int node = add_node(parent);
    const int mid = lo + (hi - lo + 1) / 2 - 1;  // first ceil(k/2) leaves left
    build_balanced(lo, mid, n, node);
    build_balanced(mid + 1, hi, n, node);
  }

  void collect_leaves(int v, std::vector<int>& out) const {
    if (is_leaf(v)) {
      out.push_back(v);
      return;
    }
    for (int c : children(v)) collect_leaves(c, out);
  }

  void post(int v, std::vector<int>& out) const {
    for (int c : children(v)) post(c, out);
    out.push_back(v);
  }

  std::string literal_of(int v) const {
    if (is_leaf(v)) return std::to_string(leaf_label(v));
    std::string s = "(";
    for (std::size_t i = 0; i < children(v).size(); ++i) {
      if (i > 0) s += ",";
      s += literal_of(children(v)[i]);
    }
    return s + ")";
  }

  static void skip_ws(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }

  int parse_subtree(const std::string& s, std::size_t& pos, Index n, int parent) {
    skip_ws(s, pos);
    if (pos >= s.size()) throw std::invalid_argument("Tree::parse: unexpected end of input");
    if (s[pos] == '(') {
      ++pos;
      const int node = add_node(parent);
      int count = 0;
      while (true) {
        parse_subtree(s, pos, n, node);
        ++count;
        skip_ws(s, pos);
        if (pos >= s.size()) throw std::invalid_argument("Tree::parse: missing ')'");
        if (s[pos] == ',') {
          ++pos;
          continue;
        }
        if (s[pos] == ')') {
          ++pos;
          break;
        }
        throw std::invalid_argument("Tree::parse: expected ',' or ')'");
      }
      if (count < 2)
        throw std::invalid_argument("Tree::parse: internal nodes need at least two children");
      return node;
    }
    if (std::isdigit(static_cast<unsigned char>(s[pos]))) {
      int label = 0;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        label = label * 10 + (s[pos] - '0');
        ++pos;
      }
      if (label < 1) throw std::invalid_argument("Tree::parse: leaf labels are 1-based");
      return add_leaf(parent, label, n);
    }
    throw std::invalid_argument("Tree::parse: unexpected character");
  }

  void validate() const {
    std::set<int> labels;
    for (int l : leaves()) {
      if (!labels.insert(leaf_label(l)).second)
        throw std::invalid_argument("Tree: duplicate leaf label");
    }
    for (int v = 0; v < node_count(); ++v)
      if (!is_leaf(v) && arity(v) < 2)
        throw std::invalid_argument("Tree: internal nodes need arity >= 2");
  }
};

using TreePtr = std::shared_ptr<const Tree>;

/// Per-subtree mode-0 ranks, indexed by node id; the root rank is 1.
using TreeRank = std::vector<Index>;

inline void validate_tree_rank(const Tree& tree, const TreeRank& rank) {
  if (static_cast<int>(rank.size()) != tree.node_count())
    throw std::invalid_argument("TreeRank: one rank per subtree required");
  if (rank[static_cast<std::size_t>(tree.root())] != 1)
    throw std::invalid_argument("TreeRank: root rank must be 1");
  for (int v = 0; v < tree.node_count(); ++v) {
    if (rank[static_cast<std::size_t>(v)] < 1)
      throw std::invalid_argument("TreeRank: ranks must be positive");
    if (tree.is_leaf(v)) {
      if (rank[static_cast<std::size_t>(v)] > tree.leaf_dim(v))
        throw std::invalid_argument("TreeRank: leaf rank exceeds physical dimension");
      continue;
    }
    // full multilinear rank needs r_i <= prod_{j != i} r_j over modes 0..m
    const int m = tree.arity(v);
    std::vector<Index> r(static_cast<std::size_t>(m) + 1);
    r[0] = rank[static_cast<std::size_t>(v)];
    for (int i = 0; i < m; ++i) r[static_cast<std::size_t>(i) + 1] = rank[static_cast<std::size_t>(tree.child(v, i))];
    for (std::size_t i = 0; i < r.size(); ++i) {
      Index prod = 1;
      for (std::size_t j = 0; j < r.size(); ++j)
        if (j != i) prod *= r[j];
      if (r[i] > prod) throw std::invalid_argument("TreeRank: rank compatibility violated");
    }
  }
}

/// Largest compatible rank map with uniform target r (root stays 1); clamps
/// each subtree by its own leaf-space size and by the complement size.
inline TreeRank uniform_compatible_rank(const Tree& tree, Index r) {
  TreeRank rank(static_cast<std::size_t>(tree.node_count()), 1);
  const Index total = tree.physical_dim(tree.root());
  // clamp from below (subtree dimension), iterate to restore compatibility
  for (int v = 0; v < tree.node_count(); ++v) {
    if (v == tree.root()) continue;
    const Index sub = tree.physical_dim(v);
    rank[static_cast<std::size_t>(v)] = std::min({r, sub, total / sub > 0 ? total / sub : Index{1}});
    rank[static_cast<std::size_t>(v)] = std::max<Index>(rank[static_cast<std::size_t>(v)], 1);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int v : tree.postorder()) {
      if (tree.is_leaf(v) || v == tree.root()) continue;
      Index prod = 1;
      for (int c : tree.children(v)) prod *= rank[static_cast<std::size_t>(c)];
      if (rank[static_cast<std::size_t>(v)] > prod) {
        rank[static_cast<std::size_t>(v)] = prod;
        changed = true;
      }
    }
    // mode-i compatibility within each connection tensor
    for (int v = 0; v < tree.node_count(); ++v) {
      if (tree.is_leaf(v)) continue;
      const int m = tree.arity(v);
      for (int i = 0; i < m; ++i) {
        Index prod = rank[static_cast<std::size_t>(v)];
        for (int j = 0; j < m; ++j)
          if (j != i) prod *= rank[static_cast<std::size_t>(tree.child(v, j))];
        auto& ri = rank[static_cast<std::size_t>(tree.child(v, i))];
        if (ri > prod) {
          ri = prod;
          changed = true;
        }
      }
    }
  }
  validate_tree_rank(tree, rank);
  return rank;
}

}  // namespace ttns
