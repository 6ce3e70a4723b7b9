#pragma once

// Continuous-optimization structure learning with a trace-exponential
// acyclicity constraint, and the two-step tiered discovery.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/graph.hpp"

namespace promptcause {

struct DiscoveryConfig {
  double lambda_l1 = 0.1;
  double edge_threshold = 0.3;
  int max_outer_iters = 100;
  double tolerance = 1e-8;  // on h(W)
  std::uint64_t seed = 0;   // the learner is deterministic; kept for stochastic learners
  double rho_max = 1e16;
  int max_inner_iters = 3000;
  double inner_tol = 1e-4;  // on the pseudo-gradient of the inner problem

  void check() const {
    if (!(edge_threshold >= 0)) throw Error("edge_threshold must be >= 0");
    if (!(tolerance > 0)) throw Error("tolerance must be > 0");
    if (!(lambda_l1 >= 0)) throw Error("lambda_l1 must be >= 0");
    if (max_outer_iters < 1) throw Error("max_outer_iters must be >= 1");
  }
};

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// exp(A) for entrywise-nonnegative A by scaling and squaring of the Taylor
// series. Every term is nonnegative, so a nilpotent pattern leaves the diagonal
// at exactly 1.
inline Eigen::MatrixXd expm_nonnegative(const Eigen::MatrixXd& a) {
  const auto d = a.rows();
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm > 0.5) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  const Eigen::MatrixXd b = a / std::ldexp(1.0, s);
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(d, d);
  for (int k = 1; k <= 30; ++k) {
    term = term * b / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() <= 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < s; ++i) result = result * result;
  return result;
}

// h(W) = tr(exp(W o W)) - d. Zero exactly on DAG patterns, positive otherwise.
inline double acyclicity(const Eigen::MatrixXd& w) {
  if (w.rows() != w.cols()) throw Error("acyclicity: matrix is not square");
  if (w.rows() == 0) return 0.0;
  const Eigen::MatrixXd e = expm_nonnegative(w.cwiseProduct(w));
  return std::max(0.0, e.trace() - static_cast<double>(w.rows()));
}

// h(W) and its gradient exp(W o W)^T o 2W.
inline double acyclicity_with_gradient(const Eigen::MatrixXd& w, Eigen::MatrixXd& grad) {
  const Eigen::MatrixXd e = expm_nonnegative(w.cwiseProduct(w));
  grad = e.transpose().cwiseProduct(2.0 * w);
  return std::max(0.0, e.trace() - static_cast<double>(w.rows()));
}

namespace detail {

// Strongly connected components of the mask graph (Tarjan). Edges between
// different components can never lie on a cycle.
inline std::vector<std::vector<Eigen::Index>> cyclic_components(const BoolMatrix& mask) {
  const auto d = mask.rows();
  std::vector<Eigen::Index> index(static_cast<std::size_t>(d), -1), low(static_cast<std::size_t>(d), 0);
  std::vector<bool> on_stack(static_cast<std::size_t>(d), false);
  std::vector<Eigen::Index> stack;
  std::vector<std::vector<Eigen::Index>> comps;
  Eigen::Index counter = 0;
  // Iterative Tarjan to stay safe on large masks.
  for (Eigen::Index root = 0; root < d; ++root) {
    if (index[static_cast<std::size_t>(root)] >= 0) continue;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> call{{root, 0}};
    while (!call.empty()) {
      auto& [v, next] = call.back();
      const auto vi = static_cast<std::size_t>(v);
      if (next == 0 && index[vi] < 0) {
        index[vi] = low[vi] = counter++;
        stack.push_back(v);
        on_stack[vi] = true;
      }
      bool descended = false;
      while (next < d) {
        const auto u = next++;
        if (!mask(v, u)) continue;
        const auto ui = static_cast<std::size_t>(u);
        if (index[ui] < 0) {
          call.push_back({u, 0});
          descended = true;
          break;
        }
        if (on_stack[ui]) low[vi] = std::min(low[vi], index[ui]);
      }
      if (descended) continue;
      if (low[vi] == index[vi]) {
        std::vector<Eigen::Index> comp;
        Eigen::Index u;
        do {
          u = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(u)] = false;
          comp.push_back(u);
        } while (u != v);
        if (comp.size() > 1) {
          std::sort(comp.begin(), comp.end());
          comps.push_back(std::move(comp));
        }
      }
      const auto finished = v;
      call.pop_back();
      if (!call.empty()) {
        const auto parent = static_cast<std::size_t>(call.back().first);
        low[parent] = std::min(low[parent], low[static_cast<std::size_t>(finished)]);
      }
    }
  }
  return comps;
}

// h and gradient restricted to the cyclic components of the mask.
class MaskedAcyclicity {
 public:
  explicit MaskedAcyclicity(const BoolMatrix& mask) : comps_(cyclic_components(mask)) {}

  double eval(const Eigen::MatrixXd& w, Eigen::MatrixXd* grad) const {
    if (grad) grad->setZero(w.rows(), w.cols());
    double h = 0.0;
    for (const auto& c : comps_) {
      const auto k = static_cast<Eigen::Index>(c.size());
      Eigen::MatrixXd sub(k, k);
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = w(c[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(j)]);
      if (grad) {
        Eigen::MatrixXd g;
        h += acyclicity_with_gradient(sub, g);
        for (Eigen::Index i = 0; i < k; ++i)
          for (Eigen::Index j = 0; j < k; ++j) (*grad)(c[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(j)]) = g(i, j);
      } else {
        h += acyclicity(sub);
      }
    }
    return h;
  }

 private:
  std::vector<std::vector<Eigen::Index>> comps_;
};

inline bool pattern_has_cycle(const Eigen::MatrixXd& w, std::vector<Eigen::Index>* cycle) {
  const auto d = w.rows();
  std::vector<int> color(static_cast<std::size_t>(d), 0);
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(d), -1);
  for (Eigen::Index root = 0; root < d; ++root) {
    if (color[static_cast<std::size_t>(root)]) continue;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> st{{root, 0}};
    color[static_cast<std::size_t>(root)] = 1;
    while (!st.empty()) {
      auto& [v, next] = st.back();
      if (next >= d) {
        color[static_cast<std::size_t>(v)] = 2;
        st.pop_back();
        continue;
      }
      const auto u = next++;
      if (w(v, u) == 0.0) continue;
      const auto ui = static_cast<std::size_t>(u);
      if (color[ui] == 1) {
        if (cycle) {
          cycle->clear();
          for (auto x = v; x != u; x = parent[static_cast<std::size_t>(x)]) cycle->push_back(x);
          cycle->push_back(u);
          std::reverse(cycle->begin(), cycle->end());
        }
        return true;
      }
      if (color[ui] == 0) {
        color[ui] = 1;
        parent[ui] = v;
        st.push_back({u, 0});
      }
    }
  }
  return false;
}

// Zeroes the weakest edge on each remaining cycle until the nonzero pattern is a DAG.
inline std::size_t break_cycles(Eigen::MatrixXd& w) {
  std::size_t removed = 0;
  std::vector<Eigen::Index> cyc;
  while (pattern_has_cycle(w, &cyc)) {
    Eigen::Index bi = cyc.back(), bj = cyc.front();
    double best = std::abs(w(bi, bj));
    for (std::size_t k = 0; k + 1 < cyc.size(); ++k) {
      const double a = std::abs(w(cyc[k], cyc[k + 1]));
      if (a < best) {
        best = a;
        bi = cyc[k];
        bj = cyc[k + 1];
      }
    }
    w(bi, bj) = 0.0;
    ++removed;
  }
  return removed;
}

}  // namespace detail

struct LearnResult {
  Eigen::MatrixXd weights;
  bool converged = false;  // false: NonConvergence, best-effort weights returned
  int outer_iterations = 0;
  double final_h = 0.0;
  std::size_t cycle_edges_removed = 0;
};

// Minimizes 1/(2n)||X - XW||^2 + lambda ||W||_1 subject to h(W) = 0 with an
// augmented Lagrangian outer loop and an orthant-wise L-BFGS inner solver.
// Entries outside `mask` stay 0. Columns are centered internally.
inline LearnResult learn_subgraph(const Eigen::MatrixXd& x, const BoolMatrix& mask, const DiscoveryConfig& cfg = {}) {
  cfg.check();
  const auto d = x.cols();
  if (mask.rows() != d || mask.cols() != d) throw Error("learn_subgraph: mask shape does not match data");
  for (Eigen::Index i = 0; i < d; ++i)
    if (mask(i, i)) throw Error("learn_subgraph: mask must be false on the diagonal");
  if (x.rows() < 2) throw InsufficientData("learn_subgraph needs at least 2 rows");

  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(x.rows());
  const Eigen::MatrixXd maskd = mask.cast<double>();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const detail::MaskedAcyclicity hfun(mask);

  double rho = 1.0, alpha = 0.0;
  // Smooth part of the augmented objective, optionally with gradient.
  auto smooth = [&](const Eigen::MatrixXd& w, Eigen::MatrixXd* grad) {
    const Eigen::MatrixXd r = eye - w;
    const Eigen::MatrixXd sr = cov * r;
    const double loss = 0.5 * (r.cwiseProduct(sr)).sum();
    Eigen::MatrixXd hg;
    const double h = hfun.eval(w, grad ? &hg : nullptr);
    if (grad) *grad = (-sr + (rho * h + alpha) * hg).cwiseProduct(maskd);
    return loss + 0.5 * rho * h * h + alpha * h;
  };

  // Orthant-wise limited-memory quasi-Newton on smooth + lambda * |W|_1.
  const double lam = cfg.lambda_l1;
  auto objective = [&](const Eigen::MatrixXd& w, Eigen::MatrixXd* grad) { return smooth(w, grad) + lam * w.cwiseAbs().sum(); };
  auto pseudo_gradient = [&](const Eigen::MatrixXd& w, const Eigen::MatrixXd& g) {
    Eigen::MatrixXd pg(d, d);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double wk = w.data()[k], gk = g.data()[k];
      double v = 0.0;
      if (wk > 0) v = gk + lam;
      else if (wk < 0) v = gk - lam;
      else if (gk + lam < 0) v = gk + lam;
      else if (gk - lam > 0) v = gk - lam;
      pg.data()[k] = v;
    }
    return pg.cwiseProduct(maskd);
  };

  auto inner = [&](Eigen::MatrixXd w) {
    constexpr std::size_t kHistory = 10;
    std::deque<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> hist;  // (s, y)
    Eigen::MatrixXd g;
    double f = objective(w, &g);
    for (int it = 0; it < cfg.max_inner_iters; ++it) {
      const Eigen::MatrixXd pg = pseudo_gradient(w, g);
      if (pg.cwiseAbs().maxCoeff() < cfg.inner_tol) break;

      // Two-loop recursion.
      Eigen::MatrixXd q = pg;
      std::vector<double> a(hist.size());
      for (std::size_t k = hist.size(); k-- > 0;) {
        const auto& [sk, yk] = hist[k];
        a[k] = sk.cwiseProduct(q).sum() / sk.cwiseProduct(yk).sum();
        q -= a[k] * yk;
      }
      if (!hist.empty()) q *= hist.back().first.cwiseProduct(hist.back().second).sum() / hist.back().second.squaredNorm();
      for (std::size_t k = 0; k < hist.size(); ++k) {
        const auto& [sk, yk] = hist[k];
        const double b = yk.cwiseProduct(q).sum() / sk.cwiseProduct(yk).sum();
        q += (a[k] - b) * sk;
      }
      Eigen::MatrixXd dir = -q;
      // Keep only components that descend along the pseudo-gradient.
      for (Eigen::Index k = 0; k < dir.size(); ++k)
        if (dir.data()[k] * pg.data()[k] >= 0) dir.data()[k] = 0.0;
      if (dir.cwiseAbs().maxCoeff() == 0.0) {
        if (hist.empty()) break;
        hist.clear();
        continue;
      }
      Eigen::MatrixXd orthant(d, d);
      for (Eigen::Index k = 0; k < w.size(); ++k) {
        const double wk = w.data()[k];
        orthant.data()[k] = wk > 0 ? 1.0 : wk < 0 ? -1.0 : (pg.data()[k] < 0 ? 1.0 : pg.data()[k] > 0 ? -1.0 : 0.0);
      }

      double t = hist.empty() ? 1.0 / std::max(1.0, pg.cwiseAbs().maxCoeff()) : 1.0;
      Eigen::MatrixXd w_new;
      double f_new = f;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        w_new = w + t * dir;
        for (Eigen::Index k = 0; k < w_new.size(); ++k)
          if (w_new.data()[k] * orthant.data()[k] <= 0) w_new.data()[k] = 0.0;
        f_new = objective(w_new, nullptr);
        if (f_new <= f + 1e-4 * pg.cwiseProduct(w_new - w).sum()) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (hist.empty()) break;
        hist.clear();  // restart from steepest descent
        continue;
      }
      Eigen::MatrixXd g_new;
      f_new = objective(w_new, &g_new);
      Eigen::MatrixXd sk = w_new - w, yk = g_new - g;
      const double rel = std::abs(f - f_new) / std::max({std::abs(f), std::abs(f_new), 1.0});
      w = std::move(w_new);
      g = std::move(g_new);
      f = f_new;
      if (sk.cwiseProduct(yk).sum() > 1e-16 * sk.squaredNorm()) {
        hist.emplace_back(std::move(sk), std::move(yk));
        if (hist.size() > kHistory) hist.pop_front();
      }
      if (rel < 1e-15) break;
    }
    return w;
  };

  LearnResult res;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  double h = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
    res.outer_iterations = outer + 1;
    Eigen::MatrixXd w_new;
    double h_new = 0;
    while (true) {
      w_new = inner(w);
      h_new = hfun.eval(w_new, nullptr);
      if (h_new > 0.25 * h && rho < cfg.rho_max) {
        rho *= 10;
      } else {
        break;
      }
    }
    w = std::move(w_new);
    h = h_new;
    alpha += rho * h;
    if (h <= cfg.tolerance || rho >= cfg.rho_max) break;
  }
  res.converged = h <= cfg.tolerance;
  res.final_h = h;
  res.cycle_edges_removed = detail::break_cycles(w);
  res.weights = std::move(w);
  return res;
}

// Edges (i, j, w) with |w| > threshold; the kept pattern must be a DAG.
struct WeightedEdge {
  Eigen::Index src;
  Eigen::Index dst;
  double weight;
};

inline std::vector<WeightedEdge> prune(const Eigen::MatrixXd& w, double threshold) {
  if (!(threshold >= 0)) throw Error("prune: threshold must be >= 0");
  Eigen::MatrixXd kept = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  std::vector<WeightedEdge> out;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (std::abs(w(i, j)) > threshold) {
        kept(i, j) = w(i, j);
        out.push_back({i, j, w(i, j)});
      }
  if (detail::pattern_has_cycle(kept, nullptr)) throw CycleAfterPrune("pruned edge set contains a cycle");
  return out;
}

struct StepDiagnostics {
  std::string name;
  std::size_t variables = 0;
  bool converged = false;
  int outer_iterations = 0;
  double final_h = 0.0;
  std::size_t cycle_edges_removed = 0;
};

struct DiscoveryResult {
  CausalGraph graph;
  std::vector<StepDiagnostics> steps;
  bool converged() const {
    return std::all_of(steps.begin(), steps.end(), [](const StepDiagnostics& s) { return s.converged; });
  }
};

// Step 1 learns over M u L (M->L, L->L allowed), step 2 over L u C (L->C, C->C
// allowed). The pruned edge sets are merged and isolated nodes dropped.
// Columns flagged constant are excluded.
inline DiscoveryResult two_step_discover(const ObservationMatrix& m, const DiscoveryConfig& cfg = {}) {
  cfg.check();
  const auto& schema = m.schema;
  if (schema.meta_names().empty() || schema.ling_names().empty() || schema.metric_names().empty())
    throw Error("two_step_discover: every tier needs at least one variable");

  std::vector<std::size_t> meta, ling, metric;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (!m.constant.empty() && m.constant[c]) continue;
    if (column_is_constant(m.rows.col(static_cast<Eigen::Index>(c)))) continue;
    (schema.tier(c) == Tier::meta ? meta : schema.tier(c) == Tier::linguistic ? ling : metric).push_back(c);
  }

  struct Step {
    std::string name;
    std::vector<std::size_t> cols;
    BoolMatrix mask;
  };
  auto make_step = [&](std::string name, const std::vector<std::size_t>& upstream, const std::vector<std::size_t>& downstream) {
    Step s{std::move(name), upstream, {}};
    s.cols.insert(s.cols.end(), downstream.begin(), downstream.end());
    const auto k = static_cast<Eigen::Index>(s.cols.size());
    const auto nu = static_cast<Eigen::Index>(upstream.size());
    s.mask = BoolMatrix::Constant(k, k, false);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = nu; j < k; ++j) s.mask(i, j) = i != j;
    return s;
  };
  const std::vector<Step> steps{make_step("meta->linguistic", meta, ling), make_step("linguistic->metric", ling, metric)};

  auto run = [&](const Step& s) {
    Eigen::MatrixXd x(m.rows.rows(), static_cast<Eigen::Index>(s.cols.size()));
    // Every column, binary meta columns included, enters at unit variance so the
    // penalty and the pruning threshold act on comparable scales.
    for (std::size_t k = 0; k < s.cols.size(); ++k) {
      const auto col = m.rows.col(static_cast<Eigen::Index>(s.cols[k]));
      const double mu = col.mean();
      const double sd = std::sqrt((col.array() - mu).square().mean());
      x.col(static_cast<Eigen::Index>(k)) = (col.array() - mu) / sd;
    }
    if (s.cols.size() < 2) return LearnResult{Eigen::MatrixXd::Zero(x.cols(), x.cols()), true, 0, 0.0, 0};
    return learn_subgraph(x, s.mask, cfg);
  };
  // The two fits share no state; run them concurrently.
  auto second = std::async(std::launch::async, run, std::cref(steps[1]));
  const LearnResult first = run(steps[0]);
  const LearnResult other = second.get();

  DiscoveryResult out;
  CausalGraph full;
  for (std::size_t c = 0; c < schema.size(); ++c) full.add_node(schema.name(c), schema.tier(c));
  const LearnResult* results[] = {&first, &other};
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& s = steps[k];
    const auto& r = *results[k];
    out.steps.push_back({s.name, s.cols.size(), r.converged, r.outer_iterations, r.final_h, r.cycle_edges_removed});
    for (const auto& e : prune(r.weights, cfg.edge_threshold))
      full.add_edge(schema.name(s.cols[static_cast<std::size_t>(e.src)]), schema.name(s.cols[static_cast<std::size_t>(e.dst)]), e.weight);
  }
  out.graph = full.without_isolated();
  out.graph.validate();
  return out;
}

}  // namespace promptcause
