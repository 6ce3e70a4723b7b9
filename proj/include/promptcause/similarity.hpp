#pragma once

// Token BLEU, keyword-weighted BLEU and a three-component CodeBLEU
// (n-gram, weighted n-gram, syntax-subtree match) for Python sources.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptcause/error.hpp"
#include "promptcause/pysyntax.hpp"

namespace promptcause {

struct BleuOptions {
  int max_n = 4;
  // Add-k smoothing applied to n-gram orders >= 2 (order 1 is never smoothed).
  double smoothing_k = 1.0;
};

namespace detail {

using Ngram = std::vector<std::string_view>;

inline std::map<Ngram, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    Ngram g;
    g.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) g.push_back(toks[i + static_cast<std::size_t>(k)]);
    ++counts[g];
  }
  return counts;
}

// Combines per-order precisions with the brevity penalty.
inline double combine_bleu(const std::vector<double>& precisions, std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (double p : precisions) {
    if (!(p > 0.0)) return 0.0;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand_len);
  const double r = static_cast<double>(ref_len);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return std::clamp(bp * std::exp(log_sum / static_cast<double>(precisions.size())), 0.0, 1.0);
}

inline double smoothed(double matches, double total, int n, double k) {
  if (n >= 2) {
    matches += k;
    total += k;
  }
  return total > 0.0 ? matches / total : 0.0;
}

}  // namespace detail

// Sentence-level BLEU of one candidate against one reference.
inline double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   const BleuOptions& opt = {}) {
  if (opt.max_n < 1) throw Error("bleu: max_n must be >= 1");
  if (candidate.empty()) return 0.0;
  std::vector<double> precisions;
  for (int n = 1; n <= opt.max_n; ++n) {
    const auto cand = detail::ngram_counts(candidate, n);
    const auto ref = detail::ngram_counts(reference, n);
    double matches = 0.0;
    double total = 0.0;
    for (const auto& [g, c] : cand) {
      total += c;
      if (auto it = ref.find(g); it != ref.end()) matches += std::min(c, it->second);
    }
    precisions.push_back(detail::smoothed(matches, total, n, opt.smoothing_k));
  }
  return detail::combine_bleu(precisions, candidate.size(), reference.size());
}

// Keyword weight 5, everything else 1.
inline double keyword_weight(std::string_view token) { return py::keywords().count(token) ? 5.0 : 1.0; }

// BLEU whose unigram precision weights each token by keyword_weight.
inline double weighted_bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                            const BleuOptions& opt = {}) {
  if (opt.max_n < 1) throw Error("weighted_bleu: max_n must be >= 1");
  if (candidate.empty()) return 0.0;
  std::vector<double> precisions;
  for (int n = 1; n <= opt.max_n; ++n) {
    const auto cand = detail::ngram_counts(candidate, n);
    const auto ref = detail::ngram_counts(reference, n);
    double matches = 0.0;
    double total = 0.0;
    for (const auto& [g, c] : cand) {
      const double w = n == 1 ? keyword_weight(g.front()) : 1.0;
      total += w * c;
      if (auto it = ref.find(g); it != ref.end()) matches += w * std::min(c, it->second);
    }
    precisions.push_back(detail::smoothed(matches, total, n, opt.smoothing_k));
  }
  return detail::combine_bleu(precisions, candidate.size(), reference.size());
}

// Fraction of the reference's syntax subtrees (multiset, clipped) found in the candidate.
inline double syntax_match(const py::AstNode& candidate, const py::AstNode& reference) {
  const auto ref = py::subtrees(reference);
  const auto cand = py::subtrees(candidate);
  if (ref.empty()) return cand.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> available;
  for (const auto& s : cand) ++available[s];
  std::size_t matched = 0;
  for (const auto& s : ref) {
    auto it = available.find(s);
    if (it != available.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(ref.size());
}

struct CodeBleuWeights {
  double ngram = 1.0 / 3.0;
  double weighted_ngram = 1.0 / 3.0;
  double syntax = 1.0 / 3.0;
};

inline void validate(const CodeBleuWeights& w) {
  if (w.ngram < 0 || w.weighted_ngram < 0 || w.syntax < 0) throw Error("codebleu weights must be nonnegative");
  if (std::abs(w.ngram + w.weighted_ngram + w.syntax - 1.0) > 1e-9) throw Error("codebleu weights must sum to 1");
}

struct CodeBleuScore {
  double score = 0.0;
  double ngram = 0.0;
  double weighted_ngram = 0.0;
  double syntax = 0.0;
  bool parse_fallback = false;  // a side failed to parse; syntax component forced to 0
};

inline CodeBleuScore codebleu_detail(std::string_view candidate, std::string_view reference, const CodeBleuWeights& w = {},
                                     const BleuOptions& opt = {}) {
  validate(w);
  CodeBleuScore s;
  const auto ct = py::code_tokens(candidate);
  const auto rt = py::code_tokens(reference);
  if (ct.empty() && rt.empty()) {
    s.ngram = s.weighted_ngram = 1.0;
  } else {
    s.ngram = bleu(ct, rt, opt);
    s.weighted_ngram = weighted_bleu(ct, rt, opt);
  }
  const auto cp = py::parse(candidate);
  const auto rp = py::parse(reference);
  if (!cp.ok() || !rp.ok()) {
    s.parse_fallback = true;
    s.syntax = 0.0;
  } else {
    s.syntax = syntax_match(cp.root, rp.root);
  }
  s.score = std::clamp(w.ngram * s.ngram + w.weighted_ngram * s.weighted_ngram + w.syntax * s.syntax, 0.0, 1.0);
  return s;
}

inline double codebleu(std::string_view candidate, std::string_view reference, const CodeBleuWeights& w = {},
                       const BleuOptions& opt = {}) {
  return codebleu_detail(candidate, reference, w, opt).score;
}

enum class SimilarityMetric { bleu, codebleu };

// Mean similarity over ordered pairs (i != j), candidate i against reference j.
inline double mutual_similarity(const std::vector<std::string>& solutions, SimilarityMetric metric,
                                const CodeBleuWeights& w = {}, const BleuOptions& opt = {}) {
  if (solutions.size() < 2) throw TooFewSolutions("mutual similarity needs at least 2 solutions, got " + std::to_string(solutions.size()));
  std::vector<std::vector<std::string>> tokens;
  if (metric == SimilarityMetric::bleu)
    for (const auto& s : solutions) tokens.push_back(py::code_tokens(s));
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < solutions.size(); ++i)
    for (std::size_t j = 0; j < solutions.size(); ++j) {
      if (i == j) continue;
      total += metric == SimilarityMetric::bleu ? bleu(tokens[i], tokens[j], opt) : codebleu(solutions[i], solutions[j], w, opt);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

}  // namespace promptcause
