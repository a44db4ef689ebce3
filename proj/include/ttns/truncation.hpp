#pragma once

#include <cmath>
#include <limits>

#include "ttns/linalg.hpp"
#include "ttns/ttn.hpp"

namespace ttns {

struct TruncationOptions {
  double theta = 0.0;
  Index rank_cap = 0;                 // 0 = unlimited
  std::vector<Index> node_rank_cap;   // optional per-node caps (by node id)
  bool rescale_root_tolerance = false;  // use theta / ||C_root|| at the root
};

struct TruncationEntry {
  int node = 0;         // parent node id
  int child_index = 0;  // which matricization
  Index kept = 0;
  Index discarded = 0;
  double tail = 0.0;  // l2 norm of the discarded singular values
};

/// Per-step record of the rank truncation, including the data for the
/// certified error bound ||X - X_hat|| <= (||C_root|| (d-1) + 1) * theta.
/// A binding rank cap voids the certificate.
struct TruncationReport {
  double theta = 0.0;
  std::vector<TruncationEntry> entries;
  double tail_sum = 0.0;
  bool cap_hit = false;
  bool root_rescaled = false;
  double root_core_norm = 0.0;  // Frobenius norm of the truncated root core
  int vertex_count = 0;

  bool certificate_valid() const { return !cap_hit; }

  double certified_bound() const {
    if (cap_hit) return std::numeric_limits<double>::quiet_NaN();
    if (root_rescaled) return static_cast<double>(vertex_count) * theta;
    return (root_core_norm * (vertex_count - 1) + 1.0) * theta;
  }
};

namespace detail {

struct TruncationPass {
  const Tree& tree;
  const TruncationOptions& opts;
  TTN& work;
  TruncationReport& report;

  Index cap_for(int node) const {
    Index cap = opts.rank_cap > 0 ? opts.rank_cap : std::numeric_limits<Index>::max();
    if (!opts.node_rank_cap.empty())
      cap = std::min(cap, opts.node_rank_cap[static_cast<std::size_t>(node)]);
    return cap;
  }

  void run(int v) {
    const int m = tree.arity(v);
    DenseTensor c = work.core(v);
    double theta_here = opts.theta;
    if (v == tree.root() && opts.rescale_root_tolerance) {
      const double cnorm = frobenius_norm(c);
      if (cnorm > 0.0) theta_here = opts.theta / cnorm;
    }
    std::vector<Matrix> projections(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const int child = tree.child(v, i);
      SvdResult svd = svd_reduced(matricize(c, i + 1));
      const Eigen::Index nsv = svd.sigma.size();
      // suffix sums of sigma^2, accumulated from the smallest values
      std::vector<double> suffix(static_cast<std::size_t>(nsv) + 1, 0.0);
      for (Eigen::Index k = nsv - 1; k >= 0; --k)
        suffix[static_cast<std::size_t>(k)] =
            suffix[static_cast<std::size_t>(k) + 1] + svd.sigma(k) * svd.sigma(k);
      Index kept = nsv;
      for (Eigen::Index r = 0; r <= nsv; ++r)
        if (std::sqrt(suffix[static_cast<std::size_t>(r)]) <= theta_here) {
          kept = r;
          break;
        }
      if (kept < 1) kept = 1;  // a state keeps at least one direction per mode
      const Index cap = cap_for(child);
      if (kept > cap) {
        kept = cap;
        report.cap_hit = true;
      }
      TruncationEntry entry;
      entry.node = v;
      entry.child_index = i;
      entry.kept = kept;
      entry.discarded = c.dim(i + 1) - kept;
      entry.tail = std::sqrt(suffix[static_cast<std::size_t>(kept)]);
      report.tail_sum += entry.tail;
      report.entries.push_back(entry);
      projections[static_cast<std::size_t>(i)] = svd.u.leftCols(kept);
    }
    for (int i = 0; i < m; ++i) {
      const int child = tree.child(v, i);
      const Matrix& p = projections[static_cast<std::size_t>(i)];
      if (tree.is_leaf(child)) {
        work.basis(child) = work.basis(child) * p;
      } else {
        work.core(child) = mode_product(work.core(child), 0, p.transpose());
        run(child);
      }
    }
    for (int i = 0; i < m; ++i)
      c = mode_product(c, i + 1, projections[static_cast<std::size_t>(i)].adjoint());
    work.core(v) = std::move(c);
  }
};

}  // namespace detail

/// Root-to-leaves adaptive rank truncation of an orthonormal TTN: per child,
/// the reduced SVD of the corresponding matricization of the connection
/// tensor is cut at the smallest rank whose discarded tail stays within
/// theta; the leading left singular vectors rotate the child factors and the
/// node core. The output is in general not orthonormal.
inline std::pair<TTN, TruncationReport> truncate(const TTN& x_hat,
                                                 const TruncationOptions& opts) {
  if (opts.theta < 0) throw std::invalid_argument("truncate: theta must be nonnegative");
  if (!opts.node_rank_cap.empty() &&
      static_cast<int>(opts.node_rank_cap.size()) != x_hat.tree->node_count())
    throw std::invalid_argument("truncate: per-node caps need one entry per node");
  TTN work = x_hat;
  TruncationReport report;
  report.theta = opts.theta;
  report.root_rescaled = opts.rescale_root_tolerance;
  report.vertex_count = x_hat.tree->vertex_count();
  if (!x_hat.tree->is_leaf(x_hat.tree->root())) {
    detail::TruncationPass pass{*x_hat.tree, opts, work, report};
    pass.run(x_hat.tree->root());
  }
  report.root_core_norm = x_hat.tree->is_leaf(x_hat.tree->root())
                              ? work.basis(x_hat.tree->root()).norm()
                              : frobenius_norm(work.core(x_hat.tree->root()));
  return {std::move(work), std::move(report)};
}

}  // namespace ttns
