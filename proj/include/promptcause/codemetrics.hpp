#pragma once

// Record-level code metrics: execution rates, syntax errors, similarity to the
// gold solution, mutual similarity and style violations.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/pysyntax.hpp"
#include "promptcause/sandbox.hpp"
#include "promptcause/similarity.hpp"
#include "promptcause/style.hpp"

namespace promptcause {

inline int count_syntax_errors(std::string_view program) { return py::count_syntax_errors(program); }

struct CodeMetricVector {
  double pass_rate = 0.0;
  double run_err_rate = 0.0;
  double syn_err = 0.0;
  double gold_sim_CB = 0.0;
  double gold_sim_B = 0.0;
  double mut_sim_CB = 0.0;
  double mut_sim_B = 0.0;
  double timeout_rate = 0.0;
  double black_count = 0.0;
  // Not a metric column: the complement of the three rates above.
  double wrong_output_rate = 0.0;

  // Raw cell counts behind the rates.
  std::size_t cells = 0, passed = 0, runtime_errors = 0, timeouts = 0, wrong_outputs = 0;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"pass_rate",   "run_err_rate", "syn_err",      "gold_sim_CB", "gold_sim_B",
                                            "mut_sim_CB",  "mut_sim_B",    "timeout_rate", "black_count"};
    return n;
  }

  std::vector<double> values() const {
    return {pass_rate, run_err_rate, syn_err, gold_sim_CB, gold_sim_B, mut_sim_CB, mut_sim_B, timeout_rate, black_count};
  }

  KeyedRow to_row(const std::string& id) const { return {id, names(), values()}; }
};

struct MetricsConfig {
  SandboxLimits limits;
  CodeBleuWeights codebleu_weights;
  BleuOptions bleu;
};

inline void tally_outcomes(const std::vector<ExecutionOutcome>& outcomes, CodeMetricVector& m) {
  m.cells = m.passed = m.runtime_errors = m.timeouts = m.wrong_outputs = 0;
  for (const auto& o : outcomes) {
    m.cells += o.cells.size();
    m.passed += o.count(TestStatus::pass);
    m.runtime_errors += o.count(TestStatus::runtime_error);
    m.timeouts += o.count(TestStatus::timeout);
    m.wrong_outputs += o.count(TestStatus::wrong_output);
  }
  const double n = static_cast<double>(m.cells);
  m.pass_rate = static_cast<double>(m.passed) / n;
  m.run_err_rate = static_cast<double>(m.runtime_errors) / n;
  m.timeout_rate = static_cast<double>(m.timeouts) / n;
  m.wrong_output_rate = static_cast<double>(m.wrong_outputs) / n;
}

// Every solution is run against every test. With the same number of tests per
// solution, the per-solution mean followed by the mean across solutions equals
// the cell mean used here. Similarities are averaged over solutions. Fields
// that cannot be computed (no tests, no gold, < 2 solutions) are NaN.
inline CodeMetricVector compute_metrics(const PromptRecord& record, const std::string& gold, const MetricsConfig& cfg = {},
                                        ExecutionCache* cache = nullptr) {
  if (record.solutions.empty()) throw Error("record " + record.id + " has no solutions");
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  CodeMetricVector m;
  const auto& sols = record.solutions;
  const double k = static_cast<double>(sols.size());

  if (record.test_cases.empty()) {
    m.pass_rate = m.run_err_rate = m.timeout_rate = m.wrong_output_rate = nan;
  } else {
    tally_outcomes(run_batch(sols, record.test_cases, cfg.limits, cache), m);
  }

  double syn = 0, style = 0;
  for (const auto& s : sols) {
    syn += count_syntax_errors(s);
    style += static_cast<double>(style_violations(s));
  }
  m.syn_err = syn / k;
  m.black_count = style / k;

  if (gold.empty()) {
    m.gold_sim_CB = m.gold_sim_B = nan;
  } else {
    const auto gold_tokens = py::code_tokens(gold);
    double cb = 0, b = 0;
    for (const auto& s : sols) {
      cb += codebleu(s, gold, cfg.codebleu_weights, cfg.bleu);
      b += bleu(py::code_tokens(s), gold_tokens, cfg.bleu);
    }
    m.gold_sim_CB = cb / k;
    m.gold_sim_B = b / k;
  }

  if (sols.size() < 2) {
    m.mut_sim_CB = m.mut_sim_B = nan;
  } else {
    m.mut_sim_CB = mutual_similarity(sols, SimilarityMetric::codebleu, cfg.codebleu_weights, cfg.bleu);
    m.mut_sim_B = mutual_similarity(sols, SimilarityMetric::bleu, cfg.codebleu_weights, cfg.bleu);
  }
  return m;
}

}  // namespace promptcause
