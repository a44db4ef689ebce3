#pragma once

#include <future>
#include <mutex>

#include "ttns/ode.hpp"
#include "ttns/operators.hpp"
#include "ttns/truncation.hpp"
#include "ttns/ttn.hpp"

namespace ttns {

/// Right-hand side F(t, Y) of the tensor differential equation. Structured
/// kinds act through the Kronecker-sum operator; the explicit kind supplies
/// dY/dt directly as a dense tensor (per-leaf modes, capped sizes).
struct Rhs {
  RhsKind kind = RhsKind::zero;
  KroneckerSumOp op;
  std::function<DenseTensor(double)> explicit_deriv;

  static Rhs schrodinger(KroneckerSumOp hamiltonian) {
    return Rhs{RhsKind::schrodinger, std::move(hamiltonian), {}};
  }
  static Rhs gradient(KroneckerSumOp hamiltonian) {
    return Rhs{RhsKind::gradient, std::move(hamiltonian), {}};
  }
  static Rhs zero() { return Rhs{}; }
  static Rhs explicit_fn(std::function<DenseTensor(double)> deriv) {
    return Rhs{RhsKind::explicit_fn, {}, std::move(deriv)};
  }
};

enum class IntegratorMode { adaptive, fixed_rank };

struct StepConfig {
  double h = 0.01;
  double theta = 1e-8;
  Index rank_cap = 0;  // 0 = unlimited; applied only at the truncation stage
  OdeConfig ode;
  IntegratorMode mode = IntegratorMode::adaptive;
  bool reorthonormalize = true;       // truncated output is not orthonormal
  bool root_tol_rescale = false;      // theta / ||C_root|| at the root cut
  bool parallel = false;              // child subflows run concurrently
  Index dense_cap = kDefaultDenseCap; // explicit/trace dense expansions
};

/// Dense per-node records of the augmented starting values, for
/// reconstruction checks on oracle-sized problems.
struct StepTrace {
  struct NodeRecord {
    int node;
    DenseTensor y0;      // node input, expanded with the original bases
    DenseTensor y_hat0;  // augmented start, expanded with the augmented bases
  };
  std::vector<NodeRecord> records;
};

struct StepReport {
  double t1 = 0.0;
  TreeRank ranks;
  Index max_rank = 0;
  Index params = 0;
  double norm_before = 0.0;
  double norm_augmented = 0.0;
  double norm_after = 0.0;
  TruncationReport truncation;
};

struct StepResult {
  TTN state;      // truncated (and reorthonormalized) next state
  TTN augmented;  // pre-truncation rank-augmented state
  std::vector<DenseTensor> c_hat0;  // augmented starting cores, by node id
  StepReport report;
};

namespace detail {

struct ChildOutcome {
  Matrix m_hat;                    // r_hat x r0
  std::vector<Matrix> aug_blocks;  // per root term; empty = identity
};

struct NodeRhs {
  NodeOperator op;  // structured path
  std::function<DenseTensor(double, const DenseTensor&)> dense;
  bool is_dense = false;
};

struct StepEngine {
  const Tree& tree;
  const TTN& y0;
  const Rhs& rhs;
  const StepConfig& cfg;
  double t0, t1;
  EnvBundle env;       // blocks through the original state (structured path)
  bool adaptive;
  TTN aug;
  std::vector<DenseTensor> c_hat0_store;
  StepTrace* trace;
  std::mutex trace_mutex;

  StepEngine(const TTN& state, const Rhs& f, double time0, double time1, const StepConfig& config,
             StepTrace* tr)
      : tree(*state.tree),
        y0(state),
        rhs(f),
        cfg(config),
        t0(time0),
        t1(time1),
        env(EnvBundle::build(state, f.op)),
        adaptive(config.mode == IntegratorMode::adaptive),
        aug(state.tree),
        c_hat0_store(static_cast<std::size_t>(state.tree->node_count())),
        trace(tr) {}

  static Matrix range_or_first(const Matrix& m, const Matrix& fallback) {
    Matrix u = orthonormal_range(m);
    if (u.cols() > 0) return u;
    return fallback.leftCols(1);
  }

  /// Leaf subflow: integrate the n_l x r_l equation for Y_l = mat form of
  /// X_l x_0 S^T, augment with the old basis, and report the Gram and the
  /// projected site blocks for the parent.
  ChildOutcome process_leaf(int v, const Matrix& s_factor, const NodeRhs& node_rhs) {
    const Matrix& u0 = y0.basis(v);
    const Index r = s_factor.rows();
    const Index n = u0.rows();
    DenseTensor y_l0 = tensorize(Matrix(s_factor * u0.transpose()), 0, {r, n});
    DenseTensor y_l1;
    if (node_rhs.is_dense) {
      y_l1 = ode_solve([&](double t, const DenseTensor& y) { return node_rhs.dense(t, y); }, y_l0,
                       t0, t1, cfg.ode);
    } else {
      const int label = tree.leaf_label(v);
      CoreRhs leaf_rhs = build_core_rhs(node_rhs.op, 1, [&](int, int term) -> const Matrix* {
        const auto it = rhs.op.terms[static_cast<std::size_t>(term)].site.find(label);
        return it == rhs.op.terms[static_cast<std::size_t>(term)].site.end() ? nullptr
                                                                             : &it->second;
      });
      y_l1 = ode_solve([&](double, const DenseTensor& y) { return leaf_rhs.apply(y); }, y_l0, t0,
                       t1, cfg.ode);
    }
    Matrix k1 = matricize(y_l1, 0).transpose();  // n x r
    Matrix u_hat = adaptive ? range_or_first(hcat(k1, u0), u0) : range_or_first(k1, u0);
    ChildOutcome out;
    out.m_hat = u_hat.adjoint() * u0;
    if (!node_rhs.is_dense) {
      out.aug_blocks.resize(rhs.op.terms.size());
      for (std::size_t p = 0; p < rhs.op.terms.size(); ++p) {
        const auto it = rhs.op.terms[p].site.find(tree.leaf_label(v));
        if (it != rhs.op.terms[p].site.end())
          out.aug_blocks[p] = u_hat.adjoint() * it->second * u_hat;
      }
    }
    aug.basis(v) = std::move(u_hat);
    return out;
  }

  struct CoreOutcome {
    DenseTensor c_hat1;
    DenseTensor c_hat0;
    std::vector<ChildOutcome> children;
  };

  /// Children subflows plus the Galerkin update of the connection tensor.
  CoreOutcome run_core(int v, const DenseTensor& c_eff, const NodeRhs& node_rhs) {
    const int m = tree.arity(v);
    std::vector<ChildOutcome> children(static_cast<std::size_t>(m));
    auto run_child = [&](int i) {
      const int c = tree.child(v, i);
      QrResult qr = qr_thin(matricize(c_eff, i + 1).transpose());
      DenseTensor q_core = tensorize(qr.q.transpose(), i + 1, [&] {
        std::vector<Index> d = c_eff.dims();
        d[static_cast<std::size_t>(i + 1)] = qr.q.cols();
        return d;
      }());
      NodeRhs child_rhs;
      if (node_rhs.is_dense) {
        DenseProjection proj = make_dense_projection(y0, v, i, c_eff, cfg.dense_cap);
        child_rhs.is_dense = true;
        child_rhs.dense = [parent = node_rhs.dense, proj](double t, const DenseTensor& z) {
          return proj.restrict_to_child(parent(t, proj.prolong(z)));
        };
      } else {
        child_rhs.op = reduce_to_child(
            node_rhs.op, q_core, i, m,
            [&](int j, int term) { return env.block(tree.child(v, j), term); },
            env.node_masks[static_cast<std::size_t>(c)], env.term_masks);
      }
      if (tree.is_leaf(c)) {
        children[static_cast<std::size_t>(i)] = process_leaf(c, qr.r, child_rhs);
      } else {
        DenseTensor child_c_eff = mode_product(y0.core(c), 0, qr.r);
        children[static_cast<std::size_t>(i)] = process_internal(c, child_c_eff, child_rhs);
      }
    };
    if (cfg.parallel && m > 1) {
      std::vector<std::future<void>> futures;
      for (int i = 0; i + 1 < m; ++i)
        futures.push_back(std::async(std::launch::async, run_child, i));
      run_child(m - 1);
      for (auto& f : futures) f.get();
    } else {
      for (int i = 0; i < m; ++i) run_child(i);
    }

    DenseTensor c_hat0 = c_eff;
    for (int i = 0; i < m; ++i)
      c_hat0 = mode_product(c_hat0, i + 1, children[static_cast<std::size_t>(i)].m_hat);

    record_trace(v, c_eff, c_hat0);

    CoreOutcome out;
    if (node_rhs.is_dense) {
      std::vector<Matrix> bases, adjoints;
      for (int i = 0; i < m; ++i) {
        bases.push_back(subtree_basis_dense(aug, tree.child(v, i), cfg.dense_cap));
        adjoints.push_back(bases.back().adjoint());
      }
      OdeField field = [&](double t, const DenseTensor& c) {
        DenseTensor w = c;
        for (int i = 0; i < m; ++i) w = mode_product(w, i + 1, bases[static_cast<std::size_t>(i)]);
        DenseTensor fw = node_rhs.dense(t, w);
        for (int i = 0; i < m; ++i)
          fw = mode_product(fw, i + 1, adjoints[static_cast<std::size_t>(i)]);
        return fw;
      };
      out.c_hat1 = ode_solve(field, c_hat0, t0, t1, cfg.ode);
    } else {
      CoreRhs core_rhs = build_core_rhs(node_rhs.op, m, [&](int j, int term) -> const Matrix* {
        const Matrix& b = children[static_cast<std::size_t>(j)].aug_blocks[static_cast<std::size_t>(term)];
        return b.size() == 0 ? nullptr : &b;
      });
      out.c_hat1 = ode_solve([&](double, const DenseTensor& c) { return core_rhs.apply(c); },
                             c_hat0, t0, t1, cfg.ode);
    }
    out.c_hat0 = std::move(c_hat0);
    out.children = std::move(children);
    return out;
  }

  /// Internal-node subflow: recurse, then re-express the evolved subtree with
  /// an orthonormal basis of span(mat_0(C1)^T, mat_0(C0)^T).
  ChildOutcome process_internal(int v, const DenseTensor& c_eff, const NodeRhs& node_rhs) {
    CoreOutcome core = run_core(v, c_eff, node_rhs);
    c_hat0_store[static_cast<std::size_t>(v)] = core.c_hat0;
    Matrix new0 = matricize(core.c_hat1, 0).transpose();
    Matrix q_hat;
    if (adaptive) {
      Matrix old0 = matricize(core.c_hat0, 0).transpose();
      q_hat = range_or_first(hcat(new0, old0), Matrix::Identity(new0.rows(), new0.rows()));
    } else {
      q_hat = range_or_first(new0, Matrix::Identity(new0.rows(), new0.rows()));
    }
    std::vector<Index> dims = core.c_hat1.dims();
    dims[0] = q_hat.cols();
    aug.core(v) = tensorize(q_hat.transpose(), 0, dims);

    ChildOutcome out;
    DenseTensor acc = y0.core(v);
    for (int j = 0; j < tree.arity(v); ++j)
      acc = mode_product(acc, j + 1, core.children[static_cast<std::size_t>(j)].m_hat);
    out.m_hat = gram0(aug.core(v), acc);
    if (!node_rhs.is_dense) {
      out.aug_blocks.resize(rhs.op.terms.size());
      for (std::size_t p = 0; p < rhs.op.terms.size(); ++p) {
        if ((env.term_masks[p] & env.node_masks[static_cast<std::size_t>(v)]) == 0) continue;
        DenseTensor bacc = aug.core(v);
        for (int j = 0; j < tree.arity(v); ++j) {
          const Matrix& b =
              core.children[static_cast<std::size_t>(j)].aug_blocks[p];
          if (b.size() != 0) bacc = mode_product(bacc, j + 1, b);
        }
        out.aug_blocks[p] = gram0(aug.core(v), bacc);
      }
    }
    return out;
  }

  void record_trace(int v, const DenseTensor& c_eff, const DenseTensor& c_hat0) {
    if (trace == nullptr) return;
    if (y0.rank(v) * tree.physical_dim(v) > cfg.dense_cap) return;
    StepTrace::NodeRecord rec;
    rec.node = v;
    rec.y0 = c_eff;
    rec.y_hat0 = c_hat0;
    for (int i = 0; i < tree.arity(v); ++i) {
      rec.y0 = mode_product(rec.y0, i + 1, subtree_basis_dense(y0, tree.child(v, i), cfg.dense_cap));
      rec.y_hat0 =
          mode_product(rec.y_hat0, i + 1, subtree_basis_dense(aug, tree.child(v, i), cfg.dense_cap));
    }
    std::lock_guard<std::mutex> lock(trace_mutex);
    trace->records.push_back(std::move(rec));
  }

  NodeRhs root_rhs() {
    NodeRhs out;
    if (rhs.kind == RhsKind::explicit_fn) {
      if (!rhs.explicit_deriv) throw std::invalid_argument("explicit rhs needs a derivative");
      out.is_dense = true;
      std::vector<Index> root_dims{1};
      for (int c : tree.children(tree.root())) root_dims.push_back(tree.physical_dim(c));
      out.dense = [f = rhs.explicit_deriv, root_dims](double t, const DenseTensor&) {
        return f(t).reshaped(root_dims);
      };
    } else {
      out.op = root_operator(rhs.op, rhs_scale(rhs.kind));
    }
    return out;
  }
};

}  // namespace detail

/// One rank-augmenting sweep (no truncation): children subflows from the
/// leaves up, Galerkin connection-tensor updates on the way back. Returns
/// the augmented state and the augmented starting cores.
inline StepResult step_augment(const TTN& state, const Rhs& rhs, double t0, double t1,
                               const StepConfig& cfg, StepTrace* trace = nullptr) {
  state.check_shapes();
  detail::StepEngine engine(state, rhs, t0, t1, cfg, trace);
  detail::NodeRhs root = engine.root_rhs();
  const int root_id = state.tree->root();
  if (state.tree->is_leaf(root_id))
    throw std::invalid_argument("step_augment: a single-leaf state has no subflows");
  detail::StepEngine::CoreOutcome core = engine.run_core(root_id, state.core(root_id), root);
  engine.c_hat0_store[static_cast<std::size_t>(root_id)] = core.c_hat0;
  engine.aug.core(root_id) = core.c_hat1;

  StepResult out;
  out.augmented = std::move(engine.aug);
  out.c_hat0 = std::move(engine.c_hat0_store);
  for (int v = 0; v < state.tree->node_count(); ++v) {
    if (out.augmented.rank(v) > 2 * state.rank(v))
      throw std::runtime_error("step_augment: augmented rank exceeded twice the input rank");
  }
  out.report.t1 = t1;
  out.report.norm_before = norm(state);
  out.report.norm_augmented = norm(out.augmented);
  return out;
}

/// One full integrator step: rank augmentation followed by rank truncation
/// (adaptive) or truncation back to the input ranks (fixed-rank variant,
/// which augments with the new values only).
inline StepResult step(const TTN& state, const Rhs& rhs, double t0, const StepConfig& cfg,
                       StepTrace* trace = nullptr) {
  StepResult out = step_augment(state, rhs, t0, t0 + cfg.h, cfg, trace);
  TruncationOptions topts;
  topts.theta = cfg.theta;
  topts.rescale_root_tolerance = cfg.root_tol_rescale;
  topts.rank_cap = cfg.rank_cap;
  if (cfg.mode == IntegratorMode::fixed_rank) topts.node_rank_cap = state.ranks();
  auto [truncated, treport] = truncate(out.augmented, topts);
  out.report.truncation = std::move(treport);
  out.state = cfg.reorthonormalize ? orthonormalize(truncated) : std::move(truncated);
  out.report.ranks = out.state.ranks();
  out.report.max_rank = out.state.max_rank();
  out.report.params = param_count(out.state);
  out.report.norm_after = norm(out.state);
  return out;
}

struct IntegrateOptions {
  // called after every step with the step index (1-based) and its result
  std::function<void(int, const StepResult&)> on_step;
};

struct IntegrationError : std::runtime_error {
  IntegrationError(int step_index, const std::string& what)
      : std::runtime_error("integration failed at step " + std::to_string(step_index) + ": " +
                           what),
        step(step_index) {}
  int step;
};

/// Uniform-step time loop from t0 to t_final; (t_final - t0) must be an
/// integer multiple of cfg.h. Returns the final state and per-step reports.
inline std::pair<TTN, std::vector<StepReport>> integrate(const TTN& y0, const Rhs& rhs, double t0,
                                                         double t_final, const StepConfig& cfg,
                                                         const IntegrateOptions& opts = {}) {
  if (cfg.h <= 0) throw std::invalid_argument("integrate: step size must be positive");
  const double span = t_final - t0;
  if (span < 0) throw std::invalid_argument("integrate: t_final must be >= t0");
  const auto n_steps = static_cast<long long>(std::llround(span / cfg.h));
  if (std::abs(static_cast<double>(n_steps) * cfg.h - span) > 1e-9 * std::max(1.0, std::abs(span)))
    throw std::invalid_argument("integrate: (t_final - t0) must be a multiple of h");

  std::vector<StepReport> reports;
  TTN y = orthonormalize(y0);
  for (long long k = 1; k <= n_steps; ++k) {
    const double t = t0 + static_cast<double>(k - 1) * cfg.h;
    StepResult result;
    try {
      result = step(y, rhs, t, cfg);
    } catch (const OdeBlowup& e) {
      throw IntegrationError(static_cast<int>(k), e.what());
    }
    if (!std::isfinite(result.report.norm_after))
      throw IntegrationError(static_cast<int>(k), "non-finite state norm");
    y = result.state;
    reports.push_back(result.report);
    if (opts.on_step) opts.on_step(static_cast<int>(k), result);
  }
  return {std::move(y), std::move(reports)};
}

}  // namespace ttns
