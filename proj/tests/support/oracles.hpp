#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code paths it checks.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "promptcause/graph.hpp"
#include "promptcause/inference.hpp"

namespace oracle {

namespace pc = promptcause;

// Adjacency as a bit mask: bit (i * n + j) set means i -> j.
using Pattern = std::uint32_t;

inline bool has_edge(Pattern p, int n, int i, int j) { return (p >> (i * n + j)) & 1u; }

// Cycle check by repeatedly removing sources.
inline bool is_dag(Pattern p, int n) {
  std::vector<bool> removed(static_cast<std::size_t>(n), false);
  for (int round = 0; round < n; ++round) {
    int source = -1;
    for (int v = 0; v < n && source < 0; ++v) {
      if (removed[static_cast<std::size_t>(v)]) continue;
      bool has_parent = false;
      for (int u = 0; u < n; ++u)
        if (!removed[static_cast<std::size_t>(u)] && has_edge(p, n, u, v)) has_parent = true;
      if (!has_parent) source = v;
    }
    if (source < 0) return false;
    removed[static_cast<std::size_t>(source)] = true;
  }
  return true;
}

// Every DAG on n labelled nodes (no self-loops).
inline std::vector<Pattern> all_dags(int n) {
  std::vector<int> slots;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) slots.push_back(i * n + j);
  std::vector<Pattern> out;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << slots.size()); ++m) {
    Pattern p = 0;
    for (std::size_t k = 0; k < slots.size(); ++k)
      if ((m >> k) & 1u) p |= Pattern{1} << slots[k];
    if (is_dag(p, n)) out.push_back(p);
  }
  return out;
}

inline std::string node_name(int i) { return "v" + std::to_string(i); }

inline pc::CausalGraph to_graph(Pattern p, int n) {
  pc::CausalGraph g;
  for (int i = 0; i < n; ++i) g.add_node(node_name(i), pc::Tier::linguistic);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (has_edge(p, n, i, j)) g.add_edge(node_name(i), node_name(j), 1.0);
  return g;
}

inline bool is_descendant_or_self(Pattern p, int n, int from, int target) {
  if (from == target) return true;
  for (int c = 0; c < n; ++c)
    if (has_edge(p, n, from, c) && is_descendant_or_self(p, n, c, target)) return true;
  return false;
}

// Path-blocking definition: X and Y are d-separated by Z when every simple
// path in the skeleton between a node of X and a node of Y is blocked.
inline bool d_separated_by_paths(Pattern p, int n, std::uint32_t xs, std::uint32_t ys, std::uint32_t zs) {
  auto in = [](std::uint32_t set, int v) { return (set >> v) & 1u; };
  auto adjacent = [&](int a, int b) { return has_edge(p, n, a, b) || has_edge(p, n, b, a); };
  auto blocked = [&](const std::vector<int>& path) {
    for (std::size_t k = 1; k + 1 < path.size(); ++k) {
      const int a = path[k - 1], v = path[k], b = path[k + 1];
      const bool collider = has_edge(p, n, a, v) && has_edge(p, n, b, v);
      if (collider) {
        bool opened = false;
        for (int z = 0; z < n; ++z)
          if (in(zs, z) && is_descendant_or_self(p, n, v, z)) opened = true;
        if (!opened) return true;
      } else if (in(zs, v)) {
        return true;
      }
    }
    return false;
  };
  bool separated = true;
  std::vector<int> path;
  std::vector<bool> on_path(static_cast<std::size_t>(n), false);
  std::function<void(int)> walk = [&](int v) {
    if (!separated) return;
    if (in(ys, v) && path.size() > 1) {
      if (!blocked(path)) separated = false;
      return;
    }
    for (int w = 0; w < n; ++w) {
      if (on_path[static_cast<std::size_t>(w)] || !adjacent(v, w)) continue;
      path.push_back(w);
      on_path[static_cast<std::size_t>(w)] = true;
      walk(w);
      on_path[static_cast<std::size_t>(w)] = false;
      path.pop_back();
    }
  };
  for (int x = 0; x < n && separated; ++x) {
    if (!in(xs, x)) continue;
    path = {x};
    std::fill(on_path.begin(), on_path.end(), false);
    on_path[static_cast<std::size_t>(x)] = true;
    walk(x);
  }
  return separated;
}

inline std::vector<std::string> names_of(std::uint32_t set, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i)
    if ((set >> i) & 1u) out.push_back(node_name(i));
  return out;
}

// Tiered chain M -> L1 -> C1 with an unrelated L2 (slopes 1 and 2).
inline pc::SyntheticScm chain_scm() {
  pc::SyntheticScm scm;
  scm.add_binary("M", pc::Tier::meta, 0.5);
  scm.add("L1", pc::Tier::linguistic, {{"M", 1.0}}, 1.0);
  scm.add("L2", pc::Tier::linguistic, {}, 1.0);
  scm.add("C1", pc::Tier::metric, {{"L1", 2.0}}, 1.0);
  return scm;
}

inline pc::CausalGraph chain_truth() {
  pc::CausalGraph g;
  g.add_node("M", pc::Tier::meta);
  g.add_node("L1", pc::Tier::linguistic);
  g.add_node("C1", pc::Tier::metric);
  g.add_edge("M", "L1", 1.0);
  g.add_edge("L1", "C1", 2.0);
  return g;
}

// X = 2Z + e1, Y = 10X + Z + e2, so E[Y] = 21Z + const.
inline pc::SyntheticScm confounder_scm() {
  pc::SyntheticScm scm;
  scm.add("Z", pc::Tier::linguistic, {}, 1.0);
  scm.add("X", pc::Tier::linguistic, {{"Z", 2.0}}, 1.0);
  scm.add("Y", pc::Tier::metric, {{"X", 10.0}, {"Z", 1.0}}, 1.0);
  return scm;
}

// Plain least-squares fit of y on [1, columns], coefficient of column k.
inline double ols_coefficient(const std::vector<Eigen::VectorXd>& columns, const Eigen::VectorXd& y, std::size_t k) {
  Eigen::MatrixXd x(y.size(), static_cast<Eigen::Index>(columns.size()) + 1);
  x.col(0).setOnes();
  for (std::size_t c = 0; c < columns.size(); ++c) x.col(static_cast<Eigen::Index>(c) + 1) = columns[c];
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  return beta(static_cast<Eigen::Index>(k) + 1);
}

}  // namespace oracle
