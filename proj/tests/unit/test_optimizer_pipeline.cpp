#include <gtest/gtest.h>

#include <filesystem>

#include "../support/oracles.hpp"
#include "promptcause/optimizer.hpp"
#include "promptcause/pipeline.hpp"

namespace pc = promptcause;
namespace fs = std::filesystem;

namespace {

pc::IntentionVector bits(const std::string& s) { return pc::IntentionVector::parse(s); }

pc::IntentionVector from_mask(std::uint32_t mask, std::size_t n) {
  pc::IntentionVector v(n);
  for (std::size_t k = 0; k < n; ++k) v.set(k, (mask >> k) & 1u);
  return v;
}

}  // namespace

// ---------------------------------------------------------------- surrogate

TEST(Surrogate, NoPathGivesObjectiveMean) {
  pc::SyntheticScm scm;
  scm.add_binary("M1", pc::Tier::meta, 0.5);
  scm.add_binary("M2", pc::Tier::meta, 0.5);
  scm.add("L1", pc::Tier::linguistic, {{"M1", 1.0}}, 1.0);
  scm.add("C", pc::Tier::metric, {}, 1.0, 4.0);
  const auto m = scm.sample(500, 1);
  const double mean = m.column("C").mean();
  for (const char* v : {"00", "01", "10", "11"}) EXPECT_NEAR(pc::surrogate_fitness(bits(v), scm.graph(), m, "C"), mean, 1e-12);
}

TEST(Surrogate, ChainDifferenceIsProductOfSlopes) {
  pc::SyntheticScm scm;
  scm.add_binary("M1", pc::Tier::meta, 0.5);
  scm.add_binary("M2", pc::Tier::meta, 0.5);
  scm.add("L1", pc::Tier::linguistic, {{"M1", 1.0}}, 0.0);
  scm.add("C", pc::Tier::metric, {{"L1", 2.0}}, 0.0);
  const auto m = scm.sample(200, 2);
  const auto g = scm.graph();
  EXPECT_NEAR(pc::surrogate_fitness(bits("10"), g, m, "C") - pc::surrogate_fitness(bits("00"), g, m, "C"), 2.0, 1e-9);
  EXPECT_NEAR(pc::surrogate_fitness(bits("00"), g, m, "C"), scm.interventional_mean("C", {{"M1", 0.0}, {"M2", 0.0}}), 1e-9);
}

TEST(Surrogate, MatchesTrueInterventionsOnNoisyScm) {
  pc::SyntheticScm scm;
  scm.add_binary("M1", pc::Tier::meta, 0.5);
  scm.add_binary("M2", pc::Tier::meta, 0.5);
  scm.add("L1", pc::Tier::linguistic, {{"M1", 1.0}, {"M2", -0.5}}, 0.3);
  scm.add("L2", pc::Tier::linguistic, {{"M2", 2.0}}, 0.3, 1.0);
  scm.add("C", pc::Tier::metric, {{"L1", 1.5}, {"L2", 0.8}}, 0.3);
  const auto m = scm.sample(5000, 3);
  const pc::CausalSurrogate sur(scm.graph(), m);
  const double base = scm.interventional_mean("C", {{"M1", 0.0}, {"M2", 0.0}});
  for (const char* v : {"01", "10", "11"}) {
    const auto iv = bits(v);
    const double truth = scm.interventional_mean("C", {{"M1", iv[0] ? 1.0 : 0.0}, {"M2", iv[1] ? 1.0 : 0.0}}) - base;
    const double got = sur.expected(iv, "C") - sur.expected(bits("00"), "C");
    EXPECT_NEAR(got, truth, 0.05 * std::abs(truth)) << v;
  }
}

TEST(Surrogate, UnknownMetric) {
  const auto scm = oracle::chain_scm();
  const auto m = scm.sample(100, 1);
  EXPECT_THROW(pc::surrogate_fitness(bits("1"), scm.graph(), m, "nope"), pc::UnknownMetric);
  EXPECT_THROW(pc::surrogate_fitness(bits("1"), scm.graph(), m, "L1"), pc::UnknownMetric);
}

// ---------------------------------------------------------------- operators

TEST(Crossover, HandTrace) {
  const auto [x, y] = pc::crossover_at(bits("110000"), bits("001100"), 1, 3);
  EXPECT_EQ(x.str(), "101100");
  EXPECT_EQ(y.str(), "010000");
}

TEST(Crossover, PropertiesOverRandomCuts) {
  pc::Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const auto a = from_mask(static_cast<std::uint32_t>(rng.below(4096)), 12);
    const auto b = from_mask(static_cast<std::uint32_t>(rng.below(4096)), 12);
    const auto [x, y] = pc::crossover(a, b, rng);
    ASSERT_EQ(x.size(), 12u);
    ASSERT_EQ(y.size(), 12u);
    for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(a[k] + b[k], x[k] + y[k]);
    const auto [p, q] = pc::crossover(a, a, rng);
    EXPECT_EQ(p, a);
    EXPECT_EQ(q, a);
  }
  pc::Rng r2(1);
  EXPECT_THROW(pc::crossover(bits("101"), bits("10"), r2), pc::LengthMismatch);
  EXPECT_THROW(pc::crossover(bits("10"), bits("01"), r2), pc::LengthMismatch);
}

TEST(Mutate, Examples) {
  pc::Rng rng(9);
  const auto v = bits("101000000001");
  EXPECT_EQ(pc::mutate(v, 0.0, rng), v);
  EXPECT_EQ(pc::mutate(v, 1.0, rng).str(), "010111111110");
  double flips = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto w = pc::mutate(v, 0.5, rng);
    for (std::size_t k = 0; k < v.size(); ++k) flips += w[k] != v[k];
  }
  EXPECT_NEAR(flips / trials, 6.0, 0.15);
}

// ---------------------------------------------------------------- search

TEST(Ga, RiggedOptimumFound) {
  const auto target = bits("101000000000");
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    pc::GaConfig cfg;
    cfg.seed = seed;
    const auto res = pc::genetic_search(
        [&](const pc::IntentionVector& v) {
          double f = 0;
          for (std::size_t k = 0; k < v.size(); ++k) f += v[k] == target[k];
          return f;
        },
        12, cfg);
    hits += res.best == target;
  }
  EXPECT_GE(hits, 9);
}

TEST(Ga, ElitismAndDeterminism) {
  pc::Rng coef_rng(4);
  std::vector<double> c(12);
  for (auto& x : c) x = coef_rng.normal();
  auto fit = [&](const pc::IntentionVector& v) {
    double f = 0;
    for (std::size_t k = 0; k < v.size(); ++k) f += c[k] * v[k];
    return f;
  };
  pc::GaConfig cfg;
  cfg.seed = 17;
  const auto a = pc::genetic_search(fit, 12, cfg), b = pc::genetic_search(fit, 12, cfg);
  EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv());
  for (std::size_t g = 1; g < a.trace.generations.size(); ++g)
    EXPECT_GE(a.trace.generations[g].best_fitness, a.trace.generations[g - 1].best_fitness);
  EXPECT_EQ(a.trace.generations.size(), cfg.generations);
}

TEST(Ga, PopulationEqualsSurvivorsStalls) {
  pc::GaConfig cfg;
  cfg.population = 5;
  cfg.survivors = 5;
  cfg.seed = 3;
  const auto res = pc::genetic_search([](const pc::IntentionVector& v) { return static_cast<double>(v.count()); }, 12, cfg);
  for (const auto& g : res.trace.generations) EXPECT_EQ(g.best_fitness, res.trace.generations[0].best_fitness);
}

TEST(Ga, ConfigChecks) {
  pc::GaConfig cfg;
  cfg.survivors = 30;
  EXPECT_THROW(cfg.check(), pc::Error);
  cfg = {};
  cfg.mutation_rate = 1.5;
  EXPECT_THROW(cfg.check(), pc::Error);
}

TEST(Optimize, SurrogateSearchPrefersHelpfulIntentions) {
  pc::SyntheticScm scm;
  const std::vector<std::string> names{"a", "b", "c"};
  for (const auto& n : names) scm.add_binary(n, pc::Tier::meta, 0.5);
  scm.add("L1", pc::Tier::linguistic, {{"a", 1.0}, {"b", -1.0}}, 0.5);
  scm.add("pass_rate", pc::Tier::metric, {{"L1", 1.0}, {"c", 0.5}}, 0.5);
  const auto m = scm.sample(2000, 1);
  pc::IntentionRegistry reg{{"a", pc::IntentionGroup::instruction, "make it a"},
                            {"b", pc::IntentionGroup::instruction, "make it b"},
                            {"c", pc::IntentionGroup::role, "as c"}};
  pc::GaConfig cfg;
  cfg.seed = 2;
  const auto res = pc::optimize(scm.graph(), m, "pass_rate", cfg, reg);
  EXPECT_EQ(res.best.str(), "101");
  EXPECT_EQ(pc::decode_intentions(res.best, reg), (std::vector<std::string>{"a", "c"}));
  EXPECT_THROW(pc::optimize(scm.graph(), m, "pass_rate", cfg, {reg[0], reg[1]}), pc::LengthMismatch);
}

TEST(Optimize, MinimizedMetricsAreNegated) {
  EXPECT_EQ(pc::metric_direction("pass_rate"), 1.0);
  EXPECT_EQ(pc::metric_direction("syn_err"), -1.0);
  EXPECT_EQ(pc::metric_direction("run_err_rate"), -1.0);
}

// ---------------------------------------------------------------- pipeline

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::vector<pc::PromptRecord> mini_dataset() {
  auto all = pc::load_dataset(fs::path(PROMPTCAUSE_DATA_DIR) / "toy_problems.jsonl");
  all.resize(4);
  return all;
}

}  // namespace

TEST(Pipeline, StageNames) {
  for (auto s : pc::all_stages()) EXPECT_EQ(pc::parse_stage(pc::to_string(s)), s);
  EXPECT_THROW(pc::parse_stage("bogus"), pc::Error);
}

TEST(Pipeline, DiscoverWithoutFeaturesIsMissingInput) {
  pc::PipelineConfig cfg;
  cfg.out_dir = fresh_dir("pc_pipeline_missing");
  cfg.dataset = fs::path(PROMPTCAUSE_DATA_DIR) / "toy_problems.jsonl";
  cfg.quiet = true;
  pc::Pipeline p(cfg);
  EXPECT_THROW(p.run({pc::Stage::discover}), pc::StageInputMissing);
  fs::remove_all(cfg.out_dir);
}

TEST(Pipeline, SeedReachesEveryStage) {
  pc::PipelineConfig a, b;
  a.seed = 1;
  b.seed = 2;
  a.propagate_seed();
  b.propagate_seed();
  EXPECT_NE(a.sampling.seed, b.sampling.seed);
  EXPECT_NE(a.discovery.seed, b.discovery.seed);
  EXPECT_NE(a.analysis.dml.seed, b.analysis.dml.seed);
  EXPECT_NE(a.verify.seed, b.verify.seed);
  EXPECT_NE(a.ga.seed, b.ga.seed);
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Pipeline, FrontStagesDeterministicAndCached) {
  const auto data_dir = fresh_dir("pc_pipeline_data");
  fs::create_directories(data_dir);
  pc::save_dataset(data_dir / "mini.jsonl", mini_dataset());

  auto make_cfg = [&](const fs::path& out) {
    pc::PipelineConfig cfg;
    cfg.dataset = data_dir / "mini.jsonl";
    cfg.out_dir = out;
    cfg.mock_llm = true;
    cfg.quiet = true;
    cfg.seed = 5;
    cfg.sampling.random_combos = 1;
    cfg.metrics.limits.timeout_s = 1.0;
    cfg.propagate_seed();
    return cfg;
  };
  const std::set<pc::Stage> front{pc::Stage::rephrase, pc::Stage::generate, pc::Stage::features, pc::Stage::metrics};
  const auto out1 = fresh_dir("pc_pipeline_run1"), out2 = fresh_dir("pc_pipeline_run2");
  pc::Pipeline(make_cfg(out1)).run(front);
  pc::Pipeline(make_cfg(out2)).run(front);
  for (const char* f : {pc::artifact::rephrased, pc::artifact::generated, pc::artifact::features, pc::artifact::metrics})
    EXPECT_EQ(pc::io::read_file(out1 / f), pc::io::read_file(out2 / f)) << f;

  const auto again = pc::Pipeline(make_cfg(out1)).run(front);
  for (const auto& r : again) EXPECT_TRUE(r.skipped) << pc::to_string(r.stage);
  const auto manifest = nlohmann::json::parse(pc::io::read_file(out1 / pc::artifact::manifest));
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 5u);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>(), make_cfg(out1).hash());

  for (const auto& d : {data_dir, out1, out2}) fs::remove_all(d);
}
