// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "promptcause/analysis.hpp"
#include "promptcause/codemetrics.hpp"
#include "promptcause/discovery.hpp"
#include "promptcause/graph.hpp"
#include "promptcause/inference.hpp"
#include "promptcause/io.hpp"
#include "promptcause/optimizer.hpp"

namespace pc = promptcause;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// 1. h(W) = 0 exactly on the 25 three-node DAGs, > 1e-6 on the 39 cyclic patterns; < 1 s.
Outcome acyclicity_oracle() {
  const auto t0 = Clock::now();
  const int slots[6] = {1, 2, 3, 5, 6, 7};
  int dags = 0, wrong = 0;
  double min_cyclic = 1e300;
  for (oracle::Pattern m = 0; m < 64; ++m) {
    oracle::Pattern p = 0;
    for (int k = 0; k < 6; ++k)
      if ((m >> k) & 1u) p |= oracle::Pattern{1} << slots[k];
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (oracle::has_edge(p, 3, i, j)) w(i, j) = 1.0;
    const double h = pc::acyclicity(w);
    if (oracle::is_dag(p, 3)) {
      ++dags;
      wrong += h != 0.0;
    } else {
      min_cyclic = std::min(min_cyclic, h);
      wrong += !(h > 1e-6);
    }
  }
  const double secs = seconds_since(t0);
  return {dags == 25 && wrong == 0 && secs < 1.0,
          std::to_string(dags) + " DAGs, " + std::to_string(wrong) + " mismatches, min cyclic h " + fmt(min_cyclic) + ", " + fmt(secs) + " s"};
}

// 2. Median SHD <= 1 over 10 seeds of the tiered chain, n = 5000; < 60 s total.
Outcome discovery_recovery() {
  const auto t0 = Clock::now();
  const auto scm = oracle::chain_scm();
  const auto truth = oracle::chain_truth();
  std::vector<std::size_t> shd;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = pc::standardize(scm.sample(5000, seed));
    shd.push_back(pc::structural_hamming_distance(pc::two_step_discover(m).graph, truth));
  }
  auto sorted = shd;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * static_cast<double>(sorted[4] + sorted[5]);
  const double secs = seconds_since(t0);
  std::string list;
  for (auto s : shd) list += std::to_string(s) + " ";
  return {median <= 1.0 && secs < 60.0, "SHD per seed [" + list + "], median " + fmt(median) + ", " + fmt(secs) + " s"};
}

// 3. ATE of X on Y within 10 +- 0.5; the Z-omitted estimate is > 3 stderr from 10; < 10 s.
Outcome dml_confounder() {
  const auto t0 = Clock::now();
  const auto scm = oracle::confounder_scm();
  const auto m = scm.sample(5000, 2024);
  const auto est = pc::estimate_ate(m, scm.graph(), "X", "Y", 1.0, 0.0);
  const auto naive = pc::estimate_ate_adjusted(m, "X", "Y", {}, 1.0, 0.0);
  const double z = std::abs(naive.point - 10.0) / naive.stderr_;
  const double secs = seconds_since(t0);
  return {std::abs(est.point - 10.0) <= 0.5 && z > 3.0 && secs < 10.0,
          "adjusted " + fmt(est.point) + " (Z = {" + (est.adjustment_set.empty() ? "" : est.adjustment_set[0]) + "}), Z-omitted " +
              fmt(naive.point) + " (" + fmt(z) + " stderr away), " + fmt(secs) + " s"};
}

// 4. x1 == x0 gives exactly 0 for any data and graph.
Outcome equal_interventions() {
  int checked = 0, nonzero = 0;
  pc::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    pc::SyntheticScm scm;
    scm.add_binary("M", pc::Tier::meta, 0.3 + 0.4 * rng.uniform());
    scm.add("L1", pc::Tier::linguistic, {{"M", rng.normal()}}, 1.0 + rng.uniform());
    scm.add("L2", pc::Tier::linguistic, {{"L1", rng.normal()}}, 0.5);
    scm.add("C", pc::Tier::metric, {{"L1", rng.normal()}, {"L2", rng.normal()}}, 1.0);
    const auto m = scm.sample(100 + rng.below(400), rng.next());
    const pc::CausalGraph graphs[] = {scm.graph(), pc::CausalGraph{}};
    for (const auto& g : graphs)
      for (const auto& [t, y] : std::vector<std::pair<std::string, std::string>>{{"M", "C"}, {"L1", "C"}, {"L2", "C"}, {"M", "L2"}}) {
        const double x = rng.normal(0, 10);
        const auto est = pc::estimate_ate(m, g, t, y, x, x);
        ++checked;
        nonzero += est.point != 0.0;
      }
  }
  return {nonzero == 0, std::to_string(checked) + " queries, " + std::to_string(nonzero) + " nonzero"};
}

// 5. Alg. 1 on M -> L1 -> C1 (slopes 1, 2): top metric C1, ATE 2 +- 0.2, top feature L1, deterministic.
Outcome alg1_oracle() {
  const auto scm = oracle::chain_scm();
  const auto m = scm.sample(5000, 55);
  const auto g = oracle::chain_truth();
  const auto a = pc::analyze(g, m, "M"), b = pc::analyze(g, m, "M");
  const bool same = a.to_json().dump() == b.to_json().dump() &&
                    pc::render_analysis_markdown({a}) == pc::render_analysis_markdown({b});
  if (a.top.empty() || a.explanations.empty() || a.explanations[0].features.empty()) return {false, "empty report"};
  const auto& top_feature = a.explanations[0].features[0];
  const double ate = a.ranked_metrics[0].point;
  return {a.top[0] == "C1" && std::abs(ate - 2.0) <= 0.2 && top_feature.feature == "L1" && top_feature.responsible && same,
          "top " + a.top[0] + " ATE " + fmt(ate) + ", top feature " + top_feature.feature + " (ATE " + fmt(top_feature.estimate.point) +
              "), reruns identical: " + (same ? "yes" : "no")};
}

// 6. Noiseless data: R^2 = 1 +- 1e-6, MSE <= 1e-10. Pure-noise metric: R^2 <= 0.05 at n = 2000.
Outcome verification_boundary() {
  pc::SyntheticScm exact;
  exact.add_binary("M", pc::Tier::meta, 0.5);
  exact.add("L1", pc::Tier::linguistic, {{"M", 1.0}}, 1.0);
  exact.add("L2", pc::Tier::linguistic, {}, 1.0);
  exact.add("C1", pc::Tier::metric, {{"M", 0.7}, {"L1", 2.0}}, 0.0);
  exact.add("C2", pc::Tier::metric, {{"L2", -1.5}, {"L1", 0.25}}, 0.0, 4.0);
  const auto perfect = pc::verify_graph(exact.graph(), exact.sample(2000, 6));
  bool ok = true;
  std::string detail;
  for (const auto& f : perfect.metrics) {
    ok = ok && std::abs(f.r2 - 1.0) <= 1e-6 && f.mse <= 1e-10;
    detail += f.metric + " R2 " + fmt(f.r2) + " MSE " + fmt(f.mse) + "; ";
  }
  pc::SyntheticScm noisy;
  noisy.add_binary("M", pc::Tier::meta, 0.5);
  noisy.add("L1", pc::Tier::linguistic, {{"M", 1.0}}, 1.0);
  noisy.add("C1", pc::Tier::metric, {}, 1.0);
  auto g = noisy.graph();
  g.add_edge("L1", "C1", 0.0);
  g.add_edge("M", "C1", 0.0);
  const auto null = pc::verify_graph(g, noisy.sample(2000, 7));
  ok = ok && null.metrics[0].r2 <= 0.05;
  detail += "noise metric R2 " + fmt(null.metrics[0].r2);
  return {ok, detail};
}

// 7. BLEU/CodeBLEU identities, the unigram example, and exact rate sums on 4 programs x 3 tests; < 30 s.
Outcome metric_identities() {
  const auto t0 = Clock::now();
  const std::string gold = "a, b = map(int, input().split())\nprint(a + b)\n";
  const auto toks = pc::py::code_tokens(gold);
  pc::BleuOptions uni;
  uni.max_n = 1;
  uni.smoothing_k = 0.0;
  const double b_id = pc::bleu(toks, toks), cb_id = pc::codebleu(gold, gold);
  const double b_ex = pc::bleu({"a", "b", "c", "d"}, {"a", "b", "c", "e"}, uni);

  const std::vector<pc::TestCase> tests{{"1 2\n", "3\n"}, {"10 20\n", "30\n"}, {"-4 4\n", "0\n"}};
  pc::PromptRecord rec{"fixture", "Add two integers.", "fixture", pc::IntentionVector(1),
                       {gold, "print(1 // 0)\n", "while True:\n    pass\n", "print(7)\n"}, tests, std::nullopt};
  pc::MetricsConfig cfg;
  cfg.limits.timeout_s = 1.0;
  const auto m = pc::compute_metrics(rec, gold, cfg);
  const double sum = m.pass_rate + m.run_err_rate + m.timeout_rate + m.wrong_output_rate;
  const bool counts = m.passed == 3 && m.runtime_errors == 3 && m.timeouts == 3 && m.wrong_outputs == 3 && m.cells == 12;
  const double secs = seconds_since(t0);
  return {b_id == 1.0 && cb_id == 1.0 && b_ex == 0.75 && sum == 1.0 && counts && secs < 30.0,
          "bleu(x,x) " + fmt(b_id) + ", codebleu(x,x) " + fmt(cb_id) + ", bleu unigram example " + fmt(b_ex) + ", rates " + fmt(m.pass_rate) +
              "/" + fmt(m.run_err_rate) + "/" + fmt(m.timeout_rate) + "/" + fmt(m.wrong_output_rate) + " sum " + fmt(sum) + ", " +
              fmt(secs) + " s"};
}

// 8. GA >= 95% of the exhaustive optimum on random 12-bit linear surrogates in >= 9/10 seeds,
//    and a rigged optimum reached within 30 generations; < 30 s.
Outcome ga_vs_exhaustive() {
  const auto t0 = Clock::now();
  int good = 0, rigged = 0;
  double worst_ratio = 1e300;
  pc::IntentionRegistry reg = pc::default_intention_registry();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    pc::Rng rng(seed * 7919 + 11);
    pc::SyntheticScm scm;
    for (const auto& i : reg) scm.add_binary(i.id, pc::Tier::meta, 0.5);
    std::vector<std::pair<std::string, double>> l1, l2;
    for (const auto& i : reg) {
      l1.push_back({i.id, rng.normal()});
      l2.push_back({i.id, rng.normal()});
    }
    scm.add("L1", pc::Tier::linguistic, l1, 1.0);
    scm.add("L2", pc::Tier::linguistic, l2, 1.0);
    scm.add("pass_rate", pc::Tier::metric, {{"L1", rng.normal()}, {"L2", rng.normal()}}, 1.0);
    const auto m = scm.sample(3000, rng.next());
    const auto g = scm.graph();
    const pc::CausalSurrogate sur(g, m);
    double best = -1e300, worst = 1e300;
    for (std::uint32_t mask = 0; mask < 4096; ++mask) {
      pc::IntentionVector v(12);
      for (std::size_t k = 0; k < 12; ++k) v.set(k, (mask >> k) & 1u);
      const double f = sur.expected(v, "pass_rate");
      best = std::max(best, f);
      worst = std::min(worst, f);
    }
    pc::GaConfig ga;
    ga.seed = seed;
    const auto res = pc::optimize(g, m, "pass_rate", ga, reg);
    // Share of the attainable range, which is stricter than best-ratio when values are positive.
    const double ratio = (res.best_fitness - worst) / (best - worst);
    worst_ratio = std::min(worst_ratio, ratio);
    good += ratio >= 0.95;

    const auto target = pc::IntentionVector::parse("101000000000");
    const auto r = pc::genetic_search(
        [&](const pc::IntentionVector& v) {
          double f = 0;
          for (std::size_t k = 0; k < 12; ++k) f += v[k] == target[k];
          return f;
        },
        12, ga);
    rigged += r.best == target && r.trace.generations.size() <= 30;
  }
  const double secs = seconds_since(t0);
  return {good >= 9 && rigged >= 9 && secs < 30.0, std::to_string(good) + "/10 seeds >= 95% of optimum (worst " + fmt(worst_ratio) +
                                                       "), rigged optimum hit in " + std::to_string(rigged) + "/10, " + fmt(secs) + " s"};
}

// 9. Two CLI pipeline runs on the bundled fixture give byte-identical graph, analysis and optimizer output; < 5 min.
Outcome end_to_end_determinism() {
  const auto t0 = Clock::now();
  const fs::path base = fs::temp_directory_path() / "promptcause_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path dataset = fs::path(PROMPTCAUSE_DATA_DIR) / "toy_problems.jsonl";
  std::string detail;
  for (const char* run : {"run1", "run2"}) {
    const std::string cmd = std::string("\"") + PROMPTCAUSE_CLI + "\" --dataset \"" + dataset.string() + "\" --out \"" +
                            (base / run).string() + "\" --seed 7 --mock-llm --timeout 1 --quiet pipeline > \"" +
                            (base / (std::string(run) + ".log")).string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, std::string(run) + " exited with status " + std::to_string(rc)};
  }
  const char* compared[] = {"graph.json", "analysis.json", "analysis.md", "optimize.json", "optimize_trace.csv", "manifest.json"};
  bool same = true;
  for (const char* f : compared) {
    const auto a = pc::io::read_file(base / "run1" / f), b = pc::io::read_file(base / "run2" / f);
    if (a != b || a.empty()) {
      same = false;
      detail += std::string(f) + " differs; ";
    }
  }
  const auto graph = nlohmann::json::parse(pc::io::read_file(base / "run1" / "graph.json"));
  const double secs = seconds_since(t0);
  detail += std::to_string(graph.at("nodes").size()) + " nodes, " + std::to_string(graph.at("edges").size()) + " edges, " + fmt(secs) + " s";
  if (same) fs::remove_all(base);
  return {same && secs < 300.0, detail};
}

// 10. d-separation equals path-blocking enumeration on every DAG with <= 5 nodes.
Outcome dsep_oracle() {
  const auto t0 = Clock::now();
  std::size_t queries = 0, mismatches = 0, dags = 0;
  // Up to 4 nodes: every assignment of nodes to X, Y, Z or none.
  for (int n = 2; n <= 4; ++n)
    for (auto p : oracle::all_dags(n)) {
      ++dags;
      const auto g = oracle::to_graph(p, n);
      std::uint32_t total = 1;
      for (int i = 0; i < n; ++i) total *= 4;
      for (std::uint32_t code = 0; code < total; ++code) {
        std::uint32_t xs = 0, ys = 0, zs = 0, c = code;
        for (int i = 0; i < n; ++i, c /= 4) {
          if (c % 4 == 1) xs |= 1u << i;
          if (c % 4 == 2) ys |= 1u << i;
          if (c % 4 == 3) zs |= 1u << i;
        }
        if (!xs || !ys) continue;
        ++queries;
        mismatches += pc::d_separated(g, oracle::names_of(xs, n), oracle::names_of(ys, n), oracle::names_of(zs, n)) !=
                      oracle::d_separated_by_paths(p, n, xs, ys, zs);
      }
    }
  // Five nodes: every pair of single nodes against every conditioning set.
  const int n = 5;
  for (auto p : oracle::all_dags(n)) {
    ++dags;
    const auto g = oracle::to_graph(p, n);
    for (int x = 0; x < n; ++x)
      for (int y = x + 1; y < n; ++y)
        for (std::uint32_t zs = 0; zs < 32; ++zs) {
          if ((zs >> x) & 1u || (zs >> y) & 1u) continue;
          ++queries;
          mismatches += pc::d_separated(g, {oracle::node_name(x)}, {oracle::node_name(y)}, oracle::names_of(zs, n)) !=
                        oracle::d_separated_by_paths(p, n, 1u << x, 1u << y, zs);
        }
  }
  auto graph = [](std::vector<std::pair<std::string, std::string>> edges) {
    pc::CausalGraph g;
    for (const auto& [a, b] : edges) {
      g.add_node(a, pc::Tier::linguistic);
      g.add_node(b, pc::Tier::linguistic);
    }
    for (const auto& [a, b] : edges) g.add_edge(a, b, 1.0);
    return g;
  };
  const bool textbook = pc::d_separated(graph({{"A", "B"}, {"B", "C"}}), {"A"}, {"C"}, {"B"}) &&
                        pc::d_separated(graph({{"A", "B"}, {"C", "B"}}), {"A"}, {"C"}, {}) &&
                        !pc::d_separated(graph({{"A", "B"}, {"C", "B"}}), {"A"}, {"C"}, {"B"}) &&
                        pc::d_separated(graph({{"Z", "X"}, {"Z", "Y"}}), {"X"}, {"Y"}, {"Z"});
  return {mismatches == 0 && textbook, std::to_string(dags) + " DAGs, " + std::to_string(queries) + " queries, " +
                                           std::to_string(mismatches) + " mismatches, textbook cases " + (textbook ? "ok" : "FAILED") +
                                           ", " + fmt(seconds_since(t0)) + " s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 acyclicity oracle", acyclicity_oracle},
      {"2 discovery recovery", discovery_recovery},
      {"3 DML confounder", dml_confounder},
      {"4 equal interventions", equal_interventions},
      {"5 Alg. 1 oracle", alg1_oracle},
      {"6 verification boundary", verification_boundary},
      {"7 metric identities", metric_identities},
      {"8 GA vs exhaustive", ga_vs_exhaustive},
      {"9 end-to-end determinism", end_to_end_determinism},
      {"10 d-separation oracle", dsep_oracle},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
