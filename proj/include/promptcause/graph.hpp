#pragma once

// Tiered causal DAG over named variables, structural queries and export.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"

namespace promptcause {

struct Edge {
  std::string src;
  std::string dst;
  double weight = 0.0;

  bool operator==(const Edge&) const = default;
};

class CausalGraph {
 public:
  // Adds a node; re-adding an existing name with the same tier is a no-op.
  void add_node(const std::string& name, Tier tier) {
    if (auto it = index_.find(name); it != index_.end()) {
      if (tiers_[it->second] != tier) throw Error("node '" + name + "' re-added with a different tier");
      return;
    }
    index_.emplace(name, names_.size());
    names_.push_back(name);
    tiers_.push_back(tier);
    parents_.emplace_back();
    children_.emplace_back();
  }

  // Adds (or reweights) src -> dst. Enforces the tier rules; acyclicity is
  // checked by validate().
  void add_edge(const std::string& src, const std::string& dst, double weight) {
    const auto s = index_of(src), d = index_of(dst);
    if (s == d) throw Error("self-loop on '" + src + "'");
    if (tiers_[d] == Tier::meta) throw Error("edge " + src + " -> " + dst + " points into a meta-prompt variable");
    if (tiers_[s] == Tier::metric && tiers_[d] != Tier::metric)
      throw Error("edge " + src + " -> " + dst + " leaves the metric tier backwards");
    for (auto& [c, w] : children_[s])
      if (c == d) {
        w = weight;
        for (auto& [p, pw] : parents_[d])
          if (p == s) pw = weight;
        return;
      }
    children_[s].push_back({d, weight});
    parents_[d].push_back({s, weight});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t node_count() const { return names_.size(); }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& c : children_) n += c.size();
    return n;
  }
  const std::vector<std::string>& nodes() const { return names_; }
  Tier tier(const std::string& name) const { return tiers_[index_of(name)]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownNode(name);
    return it->second;
  }

  bool has_edge(const std::string& src, const std::string& dst) const { return weight(src, dst).has_value(); }

  std::optional<double> weight(const std::string& src, const std::string& dst) const {
    const auto s = index_of(src), d = index_of(dst);
    for (const auto& [c, w] : children_[s])
      if (c == d) return w;
    return std::nullopt;
  }

  // Edges sorted by (src, dst) name.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t s = 0; s < names_.size(); ++s)
      for (const auto& [d, w] : children_[s]) out.push_back({names_[s], names_[d], w});
    std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) {
      return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
    });
    return out;
  }

  // Parents and children in node-insertion order.
  std::vector<std::string> parents(const std::string& name) const { return neighbor_names(parents_[index_of(name)]); }
  std::vector<std::string> children(const std::string& name) const { return neighbor_names(children_[index_of(name)]); }

  std::vector<std::string> ancestors(const std::string& name, std::optional<Tier> filter = std::nullopt) const {
    return closure(index_of(name), parents_, filter);
  }
  std::vector<std::string> descendants(const std::string& name, std::optional<Tier> filter = std::nullopt) const {
    return closure(index_of(name), children_, filter);
  }

  // Kahn's algorithm; nullopt when a cycle exists. Ties broken by insertion order.
  std::optional<std::vector<std::string>> topological_order() const {
    std::vector<std::size_t> indeg(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) indeg[i] = parents_[i].size();
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (!indeg[i]) ready.insert(i);
    std::vector<std::string> order;
    while (!ready.empty()) {
      const auto v = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(names_[v]);
      for (const auto& [c, w] : children_[v])
        if (--indeg[c] == 0) ready.insert(c);
    }
    if (order.size() != names_.size()) return std::nullopt;
    return order;
  }

  bool is_acyclic() const { return topological_order().has_value(); }

  // Full structural audit: acyclic and tier-respecting.
  void validate() const {
    if (!is_acyclic()) throw CycleAfterPrune("causal graph contains a cycle");
    for (std::size_t s = 0; s < names_.size(); ++s)
      for (const auto& [d, w] : children_[s]) {
        if (tiers_[d] == Tier::meta || (tiers_[s] == Tier::metric && tiers_[d] != Tier::metric))
          throw Error("edge " + names_[s] + " -> " + names_[d] + " violates the tier order");
      }
  }

  // Copy without nodes that have neither parents nor children.
  CausalGraph without_isolated() const {
    CausalGraph g;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (!parents_[i].empty() || !children_[i].empty()) g.add_node(names_[i], tiers_[i]);
    for (const auto& e : edges()) g.add_edge(e.src, e.dst, e.weight);
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < names_.size(); ++i)
      nodes.push_back({{"name", names_[i]}, {"tier", std::string(1, tier_code(tiers_[i]))}});
    nlohmann::json es = nlohmann::json::array();
    for (const auto& e : edges()) es.push_back({{"src", e.src}, {"dst", e.dst}, {"weight", e.weight}});
    return {{"nodes", nodes}, {"edges", es}};
  }

  static CausalGraph from_json(const nlohmann::json& j) {
    CausalGraph g;
    try {
      for (const auto& n : j.at("nodes")) g.add_node(n.at("name").get<std::string>(), parse_tier(n.at("tier").get<std::string>()));
      for (const auto& e : j.at("edges"))
        g.add_edge(e.at("src").get<std::string>(), e.at("dst").get<std::string>(), e.at("weight").get<double>());
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("malformed graph JSON: ") + ex.what());
    }
    g.validate();
    return g;
  }

  std::string to_dot() const {
    std::string out = "digraph causal {\n  rankdir=LR;\n";
    for (Tier t : {Tier::meta, Tier::linguistic, Tier::metric}) {
      out += "  { rank=same;";
      for (std::size_t i = 0; i < names_.size(); ++i)
        if (tiers_[i] == t) out += " \"" + names_[i] + "\";";
      out += " }\n";
    }
    for (const auto& e : edges())
      out += "  \"" + e.src + "\" -> \"" + e.dst + "\" [label=\"" + io::format_double(std::round(e.weight * 1000) / 1000) + "\"];\n";
    out += "}\n";
    return out;
  }

  const std::vector<std::pair<std::size_t, double>>& parent_list(std::size_t i) const { return parents_[i]; }
  const std::vector<std::pair<std::size_t, double>>& child_list(std::size_t i) const { return children_[i]; }

 private:
  std::vector<std::string> neighbor_names(const std::vector<std::pair<std::size_t, double>>& adj) const {
    std::vector<std::size_t> idx;
    for (const auto& [n, w] : adj) idx.push_back(n);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(names_[i]);
    return out;
  }

  std::vector<std::string> closure(std::size_t start, const std::vector<std::vector<std::pair<std::size_t, double>>>& adj,
                                   std::optional<Tier> filter) const {
    std::vector<bool> seen(names_.size(), false);
    std::vector<std::size_t> stack{start};
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& [n, w] : adj[v])
        if (!seen[n]) {
          seen[n] = true;
          stack.push_back(n);
        }
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (seen[i] && i != start && (!filter || tiers_[i] == *filter)) out.push_back(names_[i]);
    return out;
  }

  std::vector<std::string> names_;
  std::vector<Tier> tiers_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::pair<std::size_t, double>>> parents_;
  std::vector<std::vector<std::pair<std::size_t, double>>> children_;
};

// d-separation of X and Y given Z via the reachable-set (Bayes-ball) procedure.
inline bool d_separated(const CausalGraph& g, const std::vector<std::string>& xs, const std::vector<std::string>& ys,
                        const std::vector<std::string>& zs) {
  const std::size_t n = g.node_count();
  auto to_mask = [&](const std::vector<std::string>& names) {
    std::vector<bool> m(n, false);
    for (const auto& s : names) m[g.index_of(s)] = true;
    return m;
  };
  const auto in_x = to_mask(xs), in_y = to_mask(ys), in_z = to_mask(zs);
  for (std::size_t i = 0; i < n; ++i)
    if ((in_x[i] && in_y[i]) || (in_x[i] && in_z[i]) || (in_y[i] && in_z[i]))
      throw OverlappingSets("node '" + g.nodes()[i] + "' appears in more than one of X, Y, Z");

  // Z together with its ancestors: colliders there are open.
  std::vector<bool> anc_z = in_z;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i)
    if (in_z[i]) stack.push_back(i);
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (const auto& [p, w] : g.parent_list(v))
      if (!anc_z[p]) {
        anc_z[p] = true;
        stack.push_back(p);
      }
  }

  // State: (node, arrived_from_child). Arriving "up" means traveling against edge direction.
  std::vector<std::array<bool, 2>> visited(n, {false, false});
  std::vector<std::pair<std::size_t, bool>> queue;
  for (std::size_t i = 0; i < n; ++i)
    if (in_x[i]) queue.push_back({i, true});
  while (!queue.empty()) {
    const auto [v, up] = queue.back();
    queue.pop_back();
    if (visited[v][up]) continue;
    visited[v][up] = true;
    if (!in_z[v] && in_y[v]) return false;
    if (up && !in_z[v]) {
      for (const auto& [p, w] : g.parent_list(v)) queue.push_back({p, true});
      for (const auto& [c, w] : g.child_list(v)) queue.push_back({c, false});
    } else if (!up) {
      if (!in_z[v])
        for (const auto& [c, w] : g.child_list(v)) queue.push_back({c, false});
      if (anc_z[v])
        for (const auto& [p, w] : g.parent_list(v)) queue.push_back({p, true});
    }
  }
  return true;
}

// Structural Hamming distance: node pairs whose edge status differs (a reversal counts once).
inline std::size_t structural_hamming_distance(const CausalGraph& a, const CausalGraph& b) {
  std::set<std::pair<std::string, std::string>> ea, eb;
  for (const auto& e : a.edges()) ea.insert({e.src, e.dst});
  for (const auto& e : b.edges()) eb.insert({e.src, e.dst});
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto* s : {&ea, &eb})
    for (const auto& [u, v] : *s) pairs.insert(u < v ? std::pair{u, v} : std::pair{v, u});
  std::size_t d = 0;
  for (const auto& [u, v] : pairs) {
    const bool a_uv = ea.count({u, v}), a_vu = ea.count({v, u});
    const bool b_uv = eb.count({u, v}), b_vu = eb.count({v, u});
    if (a_uv != b_uv || a_vu != b_vu) ++d;
  }
  return d;
}

}  // namespace promptcause
