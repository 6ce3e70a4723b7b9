#pragma once

// Prompt-effect analysis (effects of one meta-prompt variable on every metric,
// explained through linguistic ancestors) and held-out graph verification.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/graph.hpp"
#include "promptcause/inference.hpp"
#include "promptcause/regression.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

struct AnalysisConfig {
  DmlConfig dml;
  std::size_t top_metrics = 3;
  std::size_t top_features = 2;
  double negligible = 0.01;
};

struct FeatureEffect {
  std::string feature;
  double l1 = 0.0;  // E[L | M=1]
  double l0 = 0.0;  // E[L | M=0]
  AteEstimate estimate;
  bool responsible = false;
};

struct MetricExplanation {
  std::string metric;
  AteEstimate effect;  // ATE of the meta variable on this metric
  std::vector<FeatureEffect> features;
  bool no_ancestors = false;
};

struct AnalysisReport {
  std::string meta_var;
  std::vector<AteEstimate> ranked_metrics;  // |ATE| descending, then name
  std::vector<std::string> top;             // selected metrics
  std::vector<MetricExplanation> explanations;
  bool no_detectable_effect = false;

  nlohmann::json to_json() const {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& e : ranked_metrics) ranked.push_back(e.to_json());
    nlohmann::json expl = nlohmann::json::array();
    for (const auto& x : explanations) {
      nlohmann::json feats = nlohmann::json::array();
      for (const auto& f : x.features) {
        auto j = f.estimate.to_json();
        j["l_meta1"] = f.l1;
        j["l_meta0"] = f.l0;
        j["responsible"] = f.responsible;
        feats.push_back(j);
      }
      expl.push_back({{"metric", x.metric}, {"ate", x.effect.point}, {"no_ancestors", x.no_ancestors}, {"features", feats}});
    }
    return {{"meta_var", meta_var},
            {"ranked_metrics", ranked},
            {"top", top},
            {"explanations", expl},
            {"no_detectable_effect", no_detectable_effect}};
  }
};

namespace detail {

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  return s == "-0.0000" ? "0.0000" : s;
}

inline bool by_magnitude(double a, const std::string& na, double b, const std::string& nb) {
  const double ma = std::abs(a), mb = std::abs(b);
  if (ma != mb) return ma > mb;
  return na < nb;
}

}  // namespace detail

// One row per selected metric: sign, effect and the responsible features.
inline std::string render_analysis_markdown(const std::vector<AnalysisReport>& reports) {
  std::string out = "| Meta variable | Metric | Sign | ATE | Responsible features |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    if (r.explanations.empty()) {
      out += "| " + r.meta_var + " | (none) | | | |\n";
      continue;
    }
    for (const auto& x : r.explanations) {
      std::string feats;
      for (const auto& f : x.features)
        if (f.responsible) feats += (feats.empty() ? "" : ", ") + f.feature + " (" + detail::fixed4(f.estimate.point) + ")";
      if (x.no_ancestors) feats = "(no linguistic ancestors)";
      const double a = x.effect.point;
      out += "| " + r.meta_var + " | " + x.metric + " | " + (a > 0 ? "+" : a < 0 ? "-" : "0") + " | " + detail::fixed4(a) + " | " +
             feats + " |\n";
    }
    if (r.no_detectable_effect) out += "| " + r.meta_var + " | | | | no detectable effect |\n";
  }
  return out;
}

inline AnalysisReport analyze(const CausalGraph& g, const ObservationMatrix& m, const std::string& meta_var,
                              const AnalysisConfig& cfg = {}) {
  if (!g.contains(meta_var)) throw UnknownNode(meta_var);
  if (g.tier(meta_var) != Tier::meta || m.schema.tier(m.schema.index_of(meta_var)) != Tier::meta)
    throw Error("'" + meta_var + "' is not a meta-prompt variable");
  // Both strata must be populated.
  conditional_mean(m, meta_var, meta_var, 1.0);
  conditional_mean(m, meta_var, meta_var, 0.0);

  AnalysisReport rep;
  rep.meta_var = meta_var;
  for (const auto& c : m.schema.metric_names()) rep.ranked_metrics.push_back(estimate_ate(m, g, meta_var, c, 1.0, 0.0, cfg.dml));
  std::sort(rep.ranked_metrics.begin(), rep.ranked_metrics.end(), [](const AteEstimate& a, const AteEstimate& b) {
    return detail::by_magnitude(a.point, a.outcome, b.point, b.outcome);
  });
  rep.no_detectable_effect = rep.ranked_metrics.empty() || std::abs(rep.ranked_metrics.front().point) < cfg.negligible;

  const std::size_t k = std::min(cfg.top_metrics, rep.ranked_metrics.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& eff = rep.ranked_metrics[i];
    rep.top.push_back(eff.outcome);
    MetricExplanation x;
    x.metric = eff.outcome;
    x.effect = eff;
    const auto ancestors = g.contains(eff.outcome) ? g.ancestors(eff.outcome, Tier::linguistic) : std::vector<std::string>{};
    for (const auto& l : ancestors) {
      FeatureEffect f;
      f.feature = l;
      f.l1 = conditional_mean(m, l, meta_var, 1.0);
      f.l0 = conditional_mean(m, l, meta_var, 0.0);
      f.estimate = estimate_ate(m, g, l, eff.outcome, f.l1, f.l0, cfg.dml);
      x.features.push_back(std::move(f));
    }
    std::sort(x.features.begin(), x.features.end(), [](const FeatureEffect& a, const FeatureEffect& b) {
      return detail::by_magnitude(a.estimate.point, a.feature, b.estimate.point, b.feature);
    });
    for (std::size_t j = 0; j < x.features.size() && j < cfg.top_features; ++j) x.features[j].responsible = true;
    x.no_ancestors = x.features.empty();
    rep.explanations.push_back(std::move(x));
  }
  return rep;
}

struct VerifyConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t min_n = 50;
  NuisanceModel model = NuisanceModel::ridge;
};

struct MetricFit {
  std::string metric;
  double r2 = 0.0;  // NaN when the evaluation split has zero variance
  double mse = 0.0;
  std::vector<std::string> predictors;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct VerificationReport {
  std::vector<MetricFit> metrics;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& f : metrics)
      rows.push_back({{"metric", f.metric},
                      {"r2", std::isfinite(f.r2) ? nlohmann::json(f.r2) : nlohmann::json(nullptr)},
                      {"mse", f.mse},
                      {"predictors", f.predictors},
                      {"n_train", f.n_train},
                      {"n_test", f.n_test}});
    return {{"split", {{"test_fraction", test_fraction}, {"seed", seed}}}, {"metrics", rows}};
  }

  // metric, R2, MSE rows.
  std::string to_csv() const {
    std::string out = io::csv_row({"metric", "r2", "mse", "predictors"});
    for (const auto& f : metrics) {
      std::string preds;
      for (const auto& p : f.predictors) preds += (preds.empty() ? "" : ";") + p;
      out += io::csv_row({f.metric, std::isfinite(f.r2) ? io::format_double(f.r2) : "nan", io::format_double(f.mse), preds});
    }
    return out;
  }
};

// Seeded 80/20 split; each metric is predicted from its meta-prompt and
// linguistic ancestors in the graph (the training mean when it has none).
inline VerificationReport verify_graph(const CausalGraph& g, const ObservationMatrix& m, const VerifyConfig& cfg = {}) {
  if (m.n() < cfg.min_n)
    throw InsufficientData("verification needs at least " + std::to_string(cfg.min_n) + " rows, got " + std::to_string(m.n()));
  if (!(cfg.test_fraction > 0 && cfg.test_fraction < 1)) throw Error("test_fraction must lie in (0, 1)");
  const std::size_t n = m.n();
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(derive_seed(cfg.seed, 0x5e1f));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::size_t n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  const std::vector<Eigen::Index> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<Eigen::Index> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());

  VerificationReport rep;
  rep.test_fraction = cfg.test_fraction;
  rep.seed = cfg.seed;
  for (const auto& c : m.schema.metric_names()) {
    MetricFit fit;
    fit.metric = c;
    fit.n_train = train.size();
    fit.n_test = test.size();
    if (g.contains(c))
      for (const auto& a : g.ancestors(c))
        if (g.tier(a) != Tier::metric && m.schema.contains(a)) fit.predictors.push_back(a);
    const Eigen::MatrixXd xtr = detail::gather(m, fit.predictors, train), xte = detail::gather(m, fit.predictors, test);
    const Eigen::MatrixXd ytr = detail::gather(m, {c}, train), yte = detail::gather(m, {c}, test);
    auto reg = make_regressor(cfg.model);
    reg->fit(xtr, ytr.col(0));
    const Eigen::VectorXd pred = reg->predict(xte);
    const Eigen::VectorXd y = yte.col(0);
    const double sse = (y - pred).squaredNorm();
    const double sst = (y.array() - y.mean()).square().sum();
    fit.mse = sse / static_cast<double>(test.size());
    fit.r2 = sst > 0 ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
    rep.metrics.push_back(std::move(fit));
  }
  return rep;
}

}  // namespace promptcause
