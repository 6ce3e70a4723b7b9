#pragma once

// Genetic search over intention vectors, scored by a linear structural
// surrogate fitted on the causal graph.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/graph.hpp"
#include "promptcause/intention.hpp"
#include "promptcause/io.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

// +1 when larger is better, -1 when smaller is better.
inline double metric_direction(const std::string& metric) {
  static const std::vector<std::string> lower_is_better{"syn_err", "run_err_rate", "timeout_rate", "black_count"};
  return std::find(lower_is_better.begin(), lower_is_better.end(), metric) != lower_is_better.end() ? -1.0 : 1.0;
}

// Per-node least-squares structural equations on graph parents. Meta-prompt
// variables are set from the candidate vector; root nodes sit at their sample
// means; every other node is propagated in topological order.
class CausalSurrogate {
 public:
  CausalSurrogate(const CausalGraph& g, const ObservationMatrix& m) : schema_(m.schema) {
    const auto order = g.topological_order();
    if (!order) throw CycleAfterPrune("surrogate needs an acyclic graph");
    means_ = m.rows.colwise().mean().transpose();
    for (const auto& name : *order) {
      if (!schema_.contains(name)) throw UnknownNode(name);
      Equation eq;
      eq.node = schema_.index_of(name);
      for (const auto& p : g.parents(name)) eq.parents.push_back(schema_.index_of(p));
      if (schema_.tier(eq.node) == Tier::meta) continue;
      if (eq.parents.empty()) {
        eq.intercept = means_(static_cast<Eigen::Index>(eq.node));
      } else {
        Eigen::MatrixXd x(m.rows.rows(), static_cast<Eigen::Index>(eq.parents.size()) + 1);
        x.col(0).setOnes();
        for (std::size_t k = 0; k < eq.parents.size(); ++k)
          x.col(static_cast<Eigen::Index>(k) + 1) = m.rows.col(static_cast<Eigen::Index>(eq.parents[k]));
        const Eigen::VectorXd beta = x.completeOrthogonalDecomposition().solve(m.rows.col(static_cast<Eigen::Index>(eq.node)));
        eq.intercept = beta(0);
        eq.coef.assign(beta.data() + 1, beta.data() + beta.size());
      }
      equations_.push_back(std::move(eq));
    }
  }

  // E[objective | do(M = v)].
  double expected(const IntentionVector& v, const std::string& objective) const {
    if (!schema_.contains(objective) || schema_.tier(schema_.index_of(objective)) != Tier::metric) throw UnknownMetric(objective);
    const auto& meta = schema_.meta_names();
    if (v.size() != meta.size())
      throw LengthMismatch("intention vector has " + std::to_string(v.size()) + " bits, matrix has " + std::to_string(meta.size()) +
                           " meta-prompt variables");
    Eigen::VectorXd val = means_;
    for (std::size_t i = 0; i < meta.size(); ++i) val(static_cast<Eigen::Index>(i)) = v[i] ? 1.0 : 0.0;
    for (const auto& eq : equations_) {
      double x = eq.intercept;
      for (std::size_t k = 0; k < eq.parents.size(); ++k) x += eq.coef[k] * val(static_cast<Eigen::Index>(eq.parents[k]));
      val(static_cast<Eigen::Index>(eq.node)) = x;
    }
    return val(static_cast<Eigen::Index>(schema_.index_of(objective)));
  }

 private:
  struct Equation {
    std::size_t node = 0;
    std::vector<std::size_t> parents;
    double intercept = 0.0;
    std::vector<double> coef;
  };
  VariableSchema schema_;
  Eigen::VectorXd means_;
  std::vector<Equation> equations_;
};

inline double surrogate_fitness(const IntentionVector& v, const CausalGraph& g, const ObservationMatrix& m, const std::string& objective) {
  return CausalSurrogate(g, m).expected(v, objective);
}

struct GaConfig {
  std::size_t population = 20;
  std::size_t generations = 30;
  std::size_t survivors = 5;
  double mutation_rate = 0.05;
  std::uint64_t seed = 0;

  void check() const {
    if (population < 1) throw Error("population must be >= 1");
    if (survivors < 1 || survivors > population) throw Error("survivors must lie in [1, population]");
    if (generations < 1) throw Error("generations must be >= 1");
    if (!(mutation_rate >= 0 && mutation_rate <= 1)) throw Error("mutation_rate must lie in [0, 1]");
  }
};

// Swaps the inclusive segment [i, j] between the parents.
inline std::pair<IntentionVector, IntentionVector> crossover_at(const IntentionVector& a, const IntentionVector& b, std::size_t i,
                                                                std::size_t j) {
  if (a.size() != b.size()) throw LengthMismatch("crossover parents differ in length");
  if (!(i < j && j < a.size())) throw Error("crossover cut points must satisfy i < j < length");
  IntentionVector x = a, y = b;
  for (std::size_t k = i; k <= j; ++k) {
    x.set(k, b[k]);
    y.set(k, a[k]);
  }
  return {x, y};
}

// Two-point crossover with an unordered pair of distinct cut points drawn uniformly.
inline std::pair<IntentionVector, IntentionVector> crossover(const IntentionVector& a, const IntentionVector& b, Rng& rng) {
  if (a.size() != b.size()) throw LengthMismatch("crossover parents differ in length");
  if (a.size() < 3) throw LengthMismatch("crossover needs vectors of length >= 3");
  std::size_t i = rng.below(a.size());
  std::size_t j = rng.below(a.size() - 1);
  if (j >= i) ++j;
  if (i > j) std::swap(i, j);
  return crossover_at(a, b, i, j);
}

inline IntentionVector mutate(const IntentionVector& v, double rate, Rng& rng) {
  if (!(rate >= 0 && rate <= 1)) throw Error("mutation rate must lie in [0, 1]");
  IntentionVector out = v;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (rng.bernoulli(rate)) out.flip(k);
  return out;
}

struct GenerationStats {
  std::size_t generation = 0;
  IntentionVector best;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
};

struct SearchTrace {
  std::vector<GenerationStats> generations;

  std::string to_csv() const {
    std::string out = io::csv_row({"generation", "best_vector", "best_fitness", "mean_fitness"});
    for (const auto& g : generations)
      out += io::csv_row({std::to_string(g.generation), g.best.str(), io::format_double(g.best_fitness), io::format_double(g.mean_fitness)});
    return out;
  }
};

struct OptimizeResult {
  IntentionVector best;
  double best_fitness = 0.0;
  SearchTrace trace;
};

// Maximizes `fitness` over bit vectors of length `bits`. Survivors are the
// top-N by fitness (ties by bit string); children come from uniformly chosen
// survivor pairs. Each child draws from its own seed-derived stream.
template <class Fitness>
OptimizeResult genetic_search(Fitness&& fitness, std::size_t bits, const GaConfig& cfg) {
  cfg.check();
  if (bits < 2) throw Error("intention vectors need at least 2 bits");
  std::map<IntentionVector, double> cache;
  auto score = [&](const IntentionVector& v) {
    auto it = cache.find(v);
    if (it != cache.end()) return it->second;
    const double f = fitness(v);
    cache.emplace(v, f);
    return f;
  };

  std::vector<IntentionVector> pop;
  {
    Rng init(derive_seed(cfg.seed, 0));
    for (std::size_t i = 0; i < cfg.population; ++i) {
      IntentionVector v(bits);
      for (std::size_t k = 0; k < bits; ++k) v.set(k, init.bernoulli(0.5));
      pop.push_back(std::move(v));
    }
  }

  OptimizeResult res;
  bool have_best = false;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    std::vector<std::pair<double, IntentionVector>> scored;
    double sum = 0.0;
    for (const auto& v : pop) {
      const double f = score(v);
      sum += f;
      scored.push_back({f, v});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (!have_best || scored.front().first > res.best_fitness) {
      res.best = scored.front().second;
      res.best_fitness = scored.front().first;
      have_best = true;
    }
    res.trace.generations.push_back({gen, res.best, res.best_fitness, sum / static_cast<double>(pop.size())});
    if (gen + 1 == cfg.generations) break;

    std::vector<IntentionVector> next;
    for (std::size_t i = 0; i < cfg.survivors; ++i) next.push_back(scored[i].second);
    const std::size_t n_surv = next.size();
    std::size_t child = 0;
    while (next.size() < cfg.population) {
      Rng rng(derive_seed(cfg.seed, (gen + 1) * 1000003ULL + child++));
      const std::size_t pa = rng.below(n_surv);
      std::size_t pb = pa;
      if (n_surv > 1) {
        pb = rng.below(n_surv - 1);
        if (pb >= pa) ++pb;
      }
      auto [c1, c2] = bits >= 3 ? crossover(next[pa], next[pb], rng) : std::pair{next[pa], next[pb]};
      next.push_back(mutate(c1, cfg.mutation_rate, rng));
      if (next.size() < cfg.population) next.push_back(mutate(c2, cfg.mutation_rate, rng));
    }
    pop = std::move(next);
  }
  return res;
}

// Searches for the intention vector maximizing the (direction-adjusted)
// surrogate expectation of `objective`.
inline OptimizeResult optimize(const CausalGraph& g, const ObservationMatrix& m, const std::string& objective, const GaConfig& ga,
                               const IntentionRegistry& registry) {
  validate_registry(registry);
  if (registry.size() < 2) throw Error("registry needs at least 2 intentions");
  if (m.schema.meta_names().size() != registry.size())
    throw LengthMismatch("registry has " + std::to_string(registry.size()) + " intentions, matrix has " +
                         std::to_string(m.schema.meta_names().size()) + " meta-prompt variables");
  const CausalSurrogate sur(g, m);
  const double dir = metric_direction(objective);
  sur.expected(IntentionVector(registry.size()), objective);  // surfaces UnknownMetric early
  return genetic_search([&](const IntentionVector& v) { return dir * sur.expected(v, objective); }, registry.size(), ga);
}

// Evaluation template for live runs: original prompt, best single intention,
// and the searched combination, to be filled with measured metric values.
inline std::string evaluation_template(const std::string& objective, const IntentionVector& best, const IntentionRegistry& registry) {
  std::string names;
  for (const auto& n : decode_intentions(best, registry)) names += (names.empty() ? "" : " + ") + n;
  if (names.empty()) names = "(none)";
  std::string out = "| Objective | Original | Best single intention | Searched (" + best.str() + ": " + names + ") | Gain |\n";
  out += "|---|---|---|---|---|\n";
  out += "| " + objective + " | _fill_ | _fill_ | _fill_ | _fill_ |\n";
  return out;
}

}  // namespace promptcause
