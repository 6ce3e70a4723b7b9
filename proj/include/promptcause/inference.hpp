#pragma once

// Average treatment effects by cross-fitted double machine learning with a
// graph-derived adjustment set, plus a linear structural model for fixtures.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/graph.hpp"
#include "promptcause/regression.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

struct DmlConfig {
  int folds = 2;
  int repetitions = 1;
  std::size_t min_n = 50;
  NuisanceModel model = NuisanceModel::ridge;
  std::uint64_t seed = 0;
};

struct AteEstimate {
  std::string treatment;
  std::string outcome;
  double x1 = 1.0;
  double x0 = 0.0;
  double theta = 0.0;  // effect per unit of treatment
  double point = 0.0;  // theta * (x1 - x0)
  double stderr_ = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<std::string> adjustment_set;
  std::size_t n_used = 0;

  nlohmann::json to_json() const {
    return {{"treatment", treatment}, {"outcome", outcome}, {"x1", x1},           {"x0", x0},
            {"theta", theta},         {"point", point},     {"stderr", stderr_},  {"ci95", {ci_low, ci_high}},
            {"adjustment_set", adjustment_set},             {"n_used", n_used}};
  }
};

// Pa(T) u (Pa(Y) \ {T} \ desc(T)). Variables missing from the graph have no
// parents. Result follows matrix column order.
inline std::vector<std::string> adjustment_set(const CausalGraph& g, const VariableSchema& schema, const std::string& treatment,
                                               const std::string& outcome) {
  std::set<std::string> z;
  if (g.contains(treatment))
    for (const auto& p : g.parents(treatment)) z.insert(p);
  if (g.contains(outcome)) {
    std::set<std::string> desc;
    if (g.contains(treatment))
      for (const auto& d : g.descendants(treatment)) desc.insert(d);
    for (const auto& p : g.parents(outcome))
      if (p != treatment && !desc.count(p)) z.insert(p);
  }
  std::vector<std::string> out;
  for (const auto& n : schema.names())
    if (z.count(n)) out.push_back(n);
  return out;
}

namespace detail {

inline Eigen::MatrixXd gather(const ObservationMatrix& m, const std::vector<std::string>& names, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(m.schema.index_of(names[c]));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.rows(rows[r], col);
  }
  return out;
}

struct ThetaFit {
  double theta;
  double se;
};

inline ThetaFit cross_fit_theta(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, int folds,
                                NuisanceModel model, Rng& rng) {
  const auto n = t.size();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));

  Eigen::VectorXd vt(n), uy(n);
  for (int k = 0; k < folds; ++k) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    if (test.empty() || train.empty()) continue;
    auto take = [&](const std::vector<Eigen::Index>& idx) {
      Eigen::MatrixXd zz(static_cast<Eigen::Index>(idx.size()), z.cols());
      Eigen::VectorXd tt(static_cast<Eigen::Index>(idx.size())), yy(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        zz.row(static_cast<Eigen::Index>(r)) = z.row(idx[r]);
        tt(static_cast<Eigen::Index>(r)) = t(idx[r]);
        yy(static_cast<Eigen::Index>(r)) = y(idx[r]);
      }
      return std::tuple{zz, tt, yy};
    };
    const auto [ztr, ttr, ytr] = take(train);
    const auto [zte, tte, yte] = take(test);
    auto mt = make_regressor(model);
    auto my = make_regressor(model);
    mt->fit(ztr, ttr);
    my->fit(ztr, ytr);
    const Eigen::VectorXd pt = mt->predict(zte), py = my->predict(zte);
    for (std::size_t r = 0; r < test.size(); ++r) {
      vt(test[r]) = tte(static_cast<Eigen::Index>(r)) - pt(static_cast<Eigen::Index>(r));
      uy(test[r]) = yte(static_cast<Eigen::Index>(r)) - py(static_cast<Eigen::Index>(r));
    }
  }
  const double svv = vt.squaredNorm();
  if (!(svv > 1e-12 * std::max(1.0, t.squaredNorm())))
    throw NotIdentifiable("treatment has no variation left after adjustment");
  const double theta = vt.dot(uy) / svv;
  const Eigen::VectorXd eps = uy - theta * vt;
  const double meat = (vt.array().square() * eps.array().square()).sum();
  return {theta, std::sqrt(meat) / svv};
}

}  // namespace detail

// ATE of moving `treatment` from x0 to x1 on `outcome`, adjusting for the given set.
inline AteEstimate estimate_ate_adjusted(const ObservationMatrix& m, const std::string& treatment, const std::string& outcome,
                                         const std::vector<std::string>& adjust, double x1, double x0, const DmlConfig& cfg = {}) {
  if (treatment == outcome) throw Error("treatment and outcome must differ");
  m.schema.index_of(treatment);
  m.schema.index_of(outcome);
  for (const auto& a : adjust) {
    m.schema.index_of(a);
    if (a == treatment || a == outcome) throw OverlappingSets("adjustment set contains the treatment or outcome");
  }
  if (cfg.folds < 2) throw Error("DML needs at least 2 folds");
  if (cfg.repetitions < 1) throw Error("DML needs at least 1 repetition");
  if (m.n() < cfg.min_n)
    throw InsufficientData("effect estimation needs at least " + std::to_string(cfg.min_n) + " rows, got " + std::to_string(m.n()));

  AteEstimate est;
  est.treatment = treatment;
  est.outcome = outcome;
  est.x1 = x1;
  est.x0 = x0;
  est.adjustment_set = adjust;
  est.n_used = m.n();

  // Equal interventions: the effect is zero by definition and nothing is fitted.
  if (x1 == x0) return est;

  std::vector<Eigen::Index> all(m.n());
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  const Eigen::VectorXd t = m.column(treatment), y = m.column(outcome);
  const Eigen::MatrixXd z = detail::gather(m, adjust, all);

  std::vector<detail::ThetaFit> fits;
  for (int r = 0; r < cfg.repetitions; ++r) {
    Rng rng(derive_seed(cfg.seed, fnv1a(treatment + "\x1f" + outcome, static_cast<std::uint64_t>(r) + 1)));
    fits.push_back(detail::cross_fit_theta(t, y, z, cfg.folds, cfg.model, rng));
  }
  double theta = fits[0].theta, se = fits[0].se;
  if (fits.size() > 1) {
    // Median aggregation across repetitions, with the spread folded into the error.
    std::vector<double> th;
    for (const auto& f : fits) th.push_back(f.theta);
    std::sort(th.begin(), th.end());
    theta = th.size() % 2 ? th[th.size() / 2] : 0.5 * (th[th.size() / 2 - 1] + th[th.size() / 2]);
    std::vector<double> v;
    for (const auto& f : fits) v.push_back(f.se * f.se + (f.theta - theta) * (f.theta - theta));
    std::sort(v.begin(), v.end());
    se = std::sqrt(v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]));
  }
  const double gap = x1 - x0;
  est.theta = theta;
  est.point = theta * gap;
  est.stderr_ = se * std::abs(gap);
  est.ci_low = est.point - 1.96 * est.stderr_;
  est.ci_high = est.point + 1.96 * est.stderr_;
  return est;
}

inline AteEstimate estimate_ate(const ObservationMatrix& m, const CausalGraph& g, const std::string& treatment,
                                const std::string& outcome, double x1, double x0, const DmlConfig& cfg = {}) {
  if (treatment == outcome) throw Error("treatment and outcome must differ");
  m.schema.index_of(treatment);
  m.schema.index_of(outcome);
  if (g.contains(treatment) && g.contains(outcome)) {
    const auto anc = g.ancestors(treatment);
    if (std::find(anc.begin(), anc.end(), outcome) != anc.end())
      throw NotIdentifiable("treatment '" + treatment + "' is a descendant of outcome '" + outcome + "'");
  }
  return estimate_ate_adjusted(m, treatment, outcome, adjustment_set(g, m.schema, treatment, outcome), x1, x0, cfg);
}

// Sample mean of `variable` over rows where the binary `condition` equals `value`.
inline double conditional_mean(const ObservationMatrix& m, const std::string& variable, const std::string& condition, double value) {
  const Eigen::VectorXd v = m.column(variable), c = m.column(condition);
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (c(i) != 0.0 && c(i) != 1.0) throw Error("conditioning variable '" + condition + "' is not binary");
    if (c(i) == value) {
      sum += v(i);
      ++count;
    }
  }
  if (!count) throw EmptyStratum("no rows with " + condition + " = " + io::format_double(value));
  return sum / static_cast<double>(count);
}

// Linear structural causal model with Gaussian noise; exogenous nodes may be Bernoulli.
class SyntheticScm {
 public:
  struct Node {
    std::string name;
    Tier tier = Tier::linguistic;
    double intercept = 0.0;
    std::vector<std::pair<std::string, double>> parents;
    double noise_sd = 1.0;
    std::optional<double> bernoulli_p;  // exogenous binary node
  };

  // Nodes must be added parents-first.
  SyntheticScm& add(Node node) {
    if (index_.count(node.name)) throw Error("duplicate SCM node '" + node.name + "'");
    for (const auto& [p, w] : node.parents)
      if (!index_.count(p)) throw Error("SCM node '" + node.name + "' references unknown or later parent '" + p + "'");
    if (node.bernoulli_p && !node.parents.empty()) throw Error("Bernoulli SCM nodes must be exogenous");
    if (node.noise_sd < 0) throw Error("noise sd must be >= 0");
    index_[node.name] = nodes_.size();
    nodes_.push_back(std::move(node));
    return *this;
  }

  SyntheticScm& add(const std::string& name, Tier tier, std::vector<std::pair<std::string, double>> parents, double noise_sd,
                    double intercept = 0.0) {
    return add(Node{name, tier, intercept, std::move(parents), noise_sd, std::nullopt});
  }

  SyntheticScm& add_binary(const std::string& name, Tier tier, double p) {
    return add(Node{name, tier, 0.0, {}, 0.0, p});
  }

  const std::vector<Node>& nodes() const { return nodes_; }

  VariableSchema schema() const {
    std::vector<std::string> tiers[3];
    for (const auto& n : nodes_) tiers[static_cast<int>(n.tier)].push_back(n.name);
    return VariableSchema(tiers[0], tiers[1], tiers[2]);
  }

  CausalGraph graph() const {
    CausalGraph g;
    for (const auto& n : nodes_) g.add_node(n.name, n.tier);
    for (const auto& n : nodes_)
      for (const auto& [p, w] : n.parents) g.add_edge(p, n.name, w);
    return g;
  }

  ObservationMatrix sample(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    const VariableSchema sch = schema();
    ObservationMatrix m;
    m.schema = sch;
    m.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nodes_.size()));
    std::vector<double> vals(nodes_.size());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const auto& nd = nodes_[k];
        double v;
        if (nd.bernoulli_p) {
          v = rng.bernoulli(*nd.bernoulli_p) ? 1.0 : 0.0;
        } else {
          v = nd.intercept + (nd.noise_sd > 0 ? rng.normal(0.0, nd.noise_sd) : 0.0);
          for (const auto& [p, w] : nd.parents) v += w * vals[index_.at(p)];
        }
        vals[k] = v;
        m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(sch.index_of(nd.name))) = v;
      }
      m.row_ids.push_back(std::to_string(r));
    }
    m.constant.assign(nodes_.size(), false);
    return m;
  }

  // E[target | do(interventions)] by mean propagation (noise is zero-mean).
  double interventional_mean(const std::string& target, const std::map<std::string, double>& interventions) const {
    std::vector<double> mean(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto& nd = nodes_[k];
      if (auto it = interventions.find(nd.name); it != interventions.end()) {
        mean[k] = it->second;
      } else if (nd.bernoulli_p) {
        mean[k] = *nd.bernoulli_p;
      } else {
        double v = nd.intercept;
        for (const auto& [p, w] : nd.parents) v += w * mean[index_.at(p)];
        mean[k] = v;
      }
    }
    auto it = index_.find(target);
    if (it == index_.end()) throw UnknownNode(target);
    return mean[it->second];
  }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace promptcause
