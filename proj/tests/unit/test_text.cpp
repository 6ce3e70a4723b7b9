#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>

#include "promptcause/codemetrics.hpp"
#include "promptcause/dataset.hpp"
#include "promptcause/linguistics.hpp"
#include "promptcause/rng.hpp"

namespace pc = promptcause;

namespace {

double feature(std::string_view text, const std::string& name) {
  const auto reg = pc::default_feature_registry();
  const auto fv = pc::extract_features(text, pc::select_features(reg, {name}));
  return fv.values.at(0);
}

std::vector<pc::Pos> tags(std::string_view text) {
  std::vector<pc::Pos> out;
  for (const auto& t : pc::tokenize(text).tokens) out.push_back(t.pos);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- linguistics

TEST(Linguistics, EmptyText) {
  const auto seq = pc::tokenize("");
  EXPECT_TRUE(seq.tokens.empty());
  EXPECT_TRUE(seq.sentences.empty());
}

TEST(Linguistics, HandTaggedSentence) {
  const auto seq = pc::tokenize("The cat sat.");
  EXPECT_EQ(tags("The cat sat."), (std::vector<pc::Pos>{pc::Pos::det, pc::Pos::noun, pc::Pos::verb, pc::Pos::punct}));
  EXPECT_EQ(seq.sentences.size(), 1u);
}

TEST(Linguistics, MidSentenceCapitalIsEntity) {
  const auto seq = pc::tokenize("Ask Alice about the list.");
  ASSERT_GE(seq.tokens.size(), 2u);
  EXPECT_EQ(seq.tokens[1].surface, "Alice");
  EXPECT_EQ(seq.tokens[1].pos, pc::Pos::ent);
}

TEST(Linguistics, SentencesPartitionTokens) {
  const auto seq = pc::tokenize("Read n. Print the sum of a and b! Is it odd? yes");
  std::size_t expect = 0;
  for (const auto& s : seq.sentences) {
    EXPECT_EQ(s.begin, expect);
    EXPECT_LT(s.begin, s.end);
    expect = s.end;
  }
  EXPECT_EQ(expect, seq.tokens.size());
  EXPECT_EQ(seq.sentences.size(), 4u);
}

TEST(Linguistics, FeatureExamples) {
  EXPECT_DOUBLE_EQ(feature("a b c", "token_count"), 3.0);
  EXPECT_DOUBLE_EQ(feature("the cat and the dog", "simp_ttr"), 0.8);
  EXPECT_NEAR(feature("the cat saw a dog near the house", "root_det_var"), 2.0 / std::sqrt(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(feature("cats sleep", "root_det_var"), 0.0);
}

TEST(Linguistics, RegistryContract) {
  const auto reg = pc::default_feature_registry();
  EXPECT_GE(reg.size(), 40u);
  std::set<std::string> names;
  for (const auto& info : pc::list_features(reg)) {
    EXPECT_FALSE(info.description.empty()) << info.name;
    EXPECT_TRUE(names.insert(info.name).second) << "duplicate " << info.name;
  }
  for (const char* n : {"simp_ttr", "root_det_var", "named_entity_count"}) EXPECT_TRUE(names.count(n)) << n;
}

TEST(Linguistics, UnknownFeatureRejected) {
  EXPECT_THROW(pc::select_features(pc::default_feature_registry(), {"no_such_feature"}), pc::Error);
}

TEST(Linguistics, TotalAndDeterministic) {
  const auto reg = pc::default_feature_registry();
  const auto empty = pc::extract_features("", reg);
  ASSERT_EQ(empty.values.size(), reg.size());
  for (double v : empty.values) EXPECT_TRUE(std::isfinite(v));
  const std::string t = "Given an array of N integers, print the maximum. Bob wants it fast!";
  EXPECT_EQ(pc::extract_features(t, reg), pc::extract_features(t, reg));
}

TEST(Linguistics, CountsGrowAndRatiosStayInRange) {
  const auto reg = pc::default_feature_registry();
  const std::vector<std::string> texts{
      "Given an array of N integers, print the maximum element.",
      "Alice and Bob play a game on a grid. Each turn, a player removes one stone. Who wins?",
      "Read two numbers a and b from standard input and output their sum modulo 1000000007.",
      "x"};
  for (const auto& t : texts) {
    const auto once = pc::extract_features(t, reg);
    const auto twice = pc::extract_features(t + " " + t, reg);
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const auto& name = reg[i].name;
      const bool is_count = name.size() > 6 && name.substr(name.size() - 6) == "_count";
      if (is_count) {
        EXPECT_GE(twice.values[i], once.values[i]) << name << " on '" << t << "'";
      }
      const bool unit_range = reg[i].description.find("in [0,1]") != std::string::npos;
      if (unit_range) {
        EXPECT_GE(once.values[i], 0.0) << name;
        EXPECT_LE(once.values[i], 1.0) << name;
      }
    }
  }
}

// ---------------------------------------------------------------- codemetrics

namespace {

const std::vector<pc::TestCase> kAddTests{{"1 2\n", "3\n"}, {"5 7\n", "12\n"}, {"-1 1\n", "0\n"}};
const std::string kAdd = "a, b = map(int, input().split())\nprint(a + b)\n";

pc::SandboxLimits quick_limits() {
  pc::SandboxLimits lim;
  lim.timeout_s = 1.0;
  return lim;
}

}  // namespace

TEST(Sandbox, PassingProgram) {
  const auto o = pc::run_tests(kAdd, kAddTests, quick_limits());
  ASSERT_EQ(o.cells.size(), 3u);
  EXPECT_EQ(o.count(pc::TestStatus::pass), 3u);
}

TEST(Sandbox, TrailingWhitespaceIgnored) {
  const auto o = pc::run_tests("a, b = map(int, input().split())\nprint(a + b, '  ')\nprint()\n", kAddTests, quick_limits());
  EXPECT_EQ(o.count(pc::TestStatus::pass), 3u);
}

TEST(Sandbox, RuntimeErrorOnEveryTest) {
  const auto o = pc::run_tests("raise ValueError('boom')\n", kAddTests, quick_limits());
  EXPECT_EQ(o.count(pc::TestStatus::runtime_error), 3u);
}

TEST(Sandbox, WrongOutput) {
  const auto o = pc::run_tests("print(42)\n", kAddTests, quick_limits());
  EXPECT_EQ(o.count(pc::TestStatus::wrong_output), 3u);
}

TEST(Sandbox, TimeoutWithinGrace) {
  const auto o = pc::run_tests("while True:\n    pass\n", {kAddTests[0]}, quick_limits());
  ASSERT_EQ(o.cells.size(), 1u);
  EXPECT_EQ(o.cells[0].status, pc::TestStatus::timeout);
  EXPECT_GE(o.cells[0].wall_time, 1.0);
  EXPECT_LE(o.cells[0].wall_time, 1.0 + pc::kTimeoutGrace);
}

TEST(Sandbox, MissingInterpreter) {
  auto lim = quick_limits();
  lim.interpreter = "definitely-not-a-python-interpreter";
  EXPECT_THROW(pc::run_tests(kAdd, kAddTests, lim), pc::SandboxError);
}

TEST(Sandbox, Hermetic) {
  const auto a = pc::run_tests(kAdd, kAddTests, quick_limits());
  const auto b = pc::run_tests(kAdd, kAddTests, quick_limits());
  for (std::size_t i = 0; i < a.cells.size(); ++i) EXPECT_EQ(a.cells[i].status, b.cells[i].status);
}

TEST(SyntaxErrors, Examples) {
  EXPECT_EQ(pc::count_syntax_errors("x = 1"), 0);
  EXPECT_GE(pc::count_syntax_errors("def f(:"), 1);
  EXPECT_EQ(pc::count_syntax_errors(kAdd), 0);
  const std::string bad = "a=1\nif x\n    y = (1,\n";
  EXPECT_EQ(pc::count_syntax_errors(bad), pc::count_syntax_errors(bad));
  EXPECT_GE(pc::count_syntax_errors(bad), 1);
}

TEST(Bleu, Examples) {
  const auto ref = split("a b c d e f");
  EXPECT_DOUBLE_EQ(pc::bleu(ref, ref), 1.0);
  EXPECT_DOUBLE_EQ(pc::bleu({}, ref), 0.0);
  pc::BleuOptions uni;
  uni.max_n = 1;
  uni.smoothing_k = 0.0;
  EXPECT_DOUBLE_EQ(pc::bleu(split("a b c d"), split("a b c e"), uni), 0.75);
  pc::BleuOptions zero;
  zero.max_n = 0;
  EXPECT_THROW(pc::bleu(ref, ref, zero), pc::Error);
}

TEST(Bleu, FuzzRange) {
  pc::Rng rng(7);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "(", ")", "=", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> c, r;
    for (auto n = rng.below(12); n-- > 0;) c.push_back(vocab[rng.below(vocab.size())]);
    for (auto n = 1 + rng.below(12); n-- > 0;) r.push_back(vocab[rng.below(vocab.size())]);
    const double s = pc::bleu(c, r);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(CodeBleu, IdentityAndDegenerateWeights) {
  EXPECT_DOUBLE_EQ(pc::codebleu(kAdd, kAdd), 1.0);
  EXPECT_DOUBLE_EQ(pc::codebleu(kAdd, kAdd, {0.5, 0.25, 0.25}), 1.0);
  const std::string other = "n = int(input())\nfor i in range(n):\n    print(i * 2)\n";
  EXPECT_NEAR(pc::codebleu(other, kAdd, {1.0, 0.0, 0.0}), pc::bleu(pc::py::code_tokens(other), pc::py::code_tokens(kAdd)), 1e-12);
  EXPECT_THROW(pc::codebleu(kAdd, kAdd, {0.5, 0.5, 0.5}), pc::Error);
  EXPECT_THROW(pc::codebleu(kAdd, kAdd, {1.5, -0.5, 0.0}), pc::Error);
}

TEST(CodeBleu, RenameKeepsAstOnly) {
  const std::string a = "def total(values):\n    s = 0\n    for v in values:\n        s += v\n    return s\n";
  const std::string b = "def acc(items):\n    t = 0\n    for w in items:\n        t += w\n    return t\n";
  const auto d = pc::codebleu_detail(b, a);
  EXPECT_FALSE(d.parse_fallback);
  EXPECT_DOUBLE_EQ(d.syntax, 1.0);
  EXPECT_LT(d.ngram, 1.0);
  EXPECT_LT(d.weighted_ngram, 1.0);
}

TEST(CodeBleu, ParseFallback) {
  const auto d = pc::codebleu_detail("def f(:\n", kAdd);
  EXPECT_TRUE(d.parse_fallback);
  EXPECT_DOUBLE_EQ(d.syntax, 0.0);
  EXPECT_GE(d.score, 0.0);
  EXPECT_LE(d.score, 1.0);
}

TEST(MutualSimilarity, Examples) {
  EXPECT_DOUBLE_EQ(pc::mutual_similarity({kAdd, kAdd, kAdd}, pc::SimilarityMetric::codebleu), 1.0);
  EXPECT_THROW(pc::mutual_similarity({kAdd}, pc::SimilarityMetric::bleu), pc::TooFewSolutions);
  pc::BleuOptions uni;
  uni.max_n = 1;
  uni.smoothing_k = 0.0;
  EXPECT_DOUBLE_EQ(pc::mutual_similarity({"a b c d", "a b c e"}, pc::SimilarityMetric::bleu, {}, uni), 0.75);
}

TEST(MutualSimilarity, PermutationInvariant) {
  const std::vector<std::string> s{kAdd, "print(sum(map(int, input().split())))\n", "x = input()\nprint(x)\n"};
  const double base = pc::mutual_similarity(s, pc::SimilarityMetric::codebleu);
  const std::vector<std::string> perm{s[2], s[0], s[1]};
  EXPECT_NEAR(pc::mutual_similarity(perm, pc::SimilarityMetric::codebleu), base, 1e-12);
}

TEST(Style, Examples) {
  EXPECT_EQ(pc::style_violations("x = 1\n"), 0u);
  EXPECT_EQ(pc::style_violations("def f(a, b):\n    return a + b\n\n\nprint(f(1, 2))\n"), 0u);
  EXPECT_EQ(pc::style_violations("x=1\n"), 1u);
  const auto v = pc::style_violations_detail("y = '" + std::string(100, 'a') + "'\n");
  ASSERT_GE(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "line-length");
}

TEST(ComputeMetrics, PerfectSolution) {
  pc::PromptRecord r{"r", "q", "r", pc::IntentionVector(2), {kAdd}, kAddTests, std::nullopt};
  pc::MetricsConfig cfg;
  cfg.limits = quick_limits();
  const auto m = pc::compute_metrics(r, kAdd, cfg);
  EXPECT_DOUBLE_EQ(m.pass_rate, 1.0);
  EXPECT_DOUBLE_EQ(m.gold_sim_B, 1.0);
  EXPECT_DOUBLE_EQ(m.gold_sim_CB, 1.0);
  EXPECT_TRUE(std::isnan(m.mut_sim_CB));
  EXPECT_DOUBLE_EQ(m.syn_err, 0.0);
}

TEST(ComputeMetrics, IdenticalSolutions) {
  pc::PromptRecord r{"r", "q", "r", pc::IntentionVector(2), {kAdd, kAdd, kAdd}, kAddTests, std::nullopt};
  pc::MetricsConfig cfg;
  cfg.limits = quick_limits();
  const auto m = pc::compute_metrics(r, kAdd, cfg);
  EXPECT_DOUBLE_EQ(m.mut_sim_CB, 1.0);
  EXPECT_DOUBLE_EQ(m.mut_sim_B, 1.0);
}

TEST(ComputeMetrics, PassAndTimeoutSplit) {
  pc::PromptRecord r{"r", "q", "r", pc::IntentionVector(2), {kAdd, "while True:\n    pass\n"}, {kAddTests[0], kAddTests[1]},
                     std::nullopt};
  pc::MetricsConfig cfg;
  cfg.limits = quick_limits();
  const auto m = pc::compute_metrics(r, kAdd, cfg);
  EXPECT_DOUBLE_EQ(m.pass_rate, 0.5);
  EXPECT_DOUBLE_EQ(m.timeout_rate, 0.5);
  EXPECT_DOUBLE_EQ(m.pass_rate + m.run_err_rate + m.timeout_rate + m.wrong_output_rate, 1.0);
}

TEST(ComputeMetrics, NoSolutionsRejected) {
  pc::PromptRecord r{"r", "q", "r", pc::IntentionVector(2), {}, kAddTests, std::nullopt};
  EXPECT_THROW(pc::compute_metrics(r, kAdd), pc::Error);
}

// ---------------------------------------------------------------- dataset

namespace {

std::vector<pc::PromptRecord> three_records() {
  return {
      {"p1", "Add two numbers.", "p1", pc::IntentionVector::parse("00"), {kAdd}, {{"1 2\n", "3\n"}}, std::string("easy")},
      {"p1~10", "Sum \"two\"\nnumbers.", "p1", pc::IntentionVector::parse("10"), {}, {{"1 2\n", "3\n"}}, std::nullopt},
      {"p2", "Print 0.", "p2", pc::IntentionVector::parse("00"), {"print(0)\n", "print(0 )\n"}, {{"", "0\n"}}, std::nullopt},
  };
}

pc::ObservationMatrix tiny_matrix(std::size_t n, std::uint64_t seed) {
  pc::Rng rng(seed);
  pc::ObservationMatrix m;
  m.schema = pc::VariableSchema({"M"}, {"L1", "L2"}, {"C"});
  m.rows.resize(static_cast<Eigen::Index>(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m.rows(r, 0) = rng.bernoulli(0.5);
    m.rows(r, 1) = m.rows(r, 0) + rng.normal();
    m.rows(r, 2) = rng.normal();
    m.rows(r, 3) = 2 * m.rows(r, 1) + rng.normal();
    m.row_ids.push_back("r" + std::to_string(i));
  }
  m.constant.assign(4, false);
  return m;
}

}  // namespace

TEST(Dataset, RoundTrip) {
  const auto recs = three_records();
  const auto path = std::filesystem::temp_directory_path() / "pc_roundtrip.jsonl";
  pc::save_dataset(path, recs);
  EXPECT_EQ(pc::load_dataset(path), recs);
  std::filesystem::remove(path);
  EXPECT_EQ(pc::parse_dataset(pc::serialize_dataset(recs)).size(), 3u);
}

TEST(Dataset, MissingFieldNamesIt) {
  auto text = pc::serialize_dataset(three_records());
  const auto j = nlohmann::json::parse(pc::io::split_lines(text)[1]);
  auto broken = j;
  broken.erase("question_text");
  const auto lines = pc::io::split_lines(text);
  const std::string doc = lines[0] + "\n" + broken.dump() + "\n" + lines[2] + "\n";
  try {
    pc::parse_dataset(doc);
    FAIL() << "expected SchemaError";
  } catch (const pc::SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("question_text"), std::string::npos);
  }
}

TEST(Dataset, MissingFileIsIoError) { EXPECT_THROW(pc::load_dataset("/nonexistent/dir/x.jsonl"), pc::IoError); }

TEST(Dataset, AssembleShapeAndOrder) {
  const auto recs = three_records();
  const pc::VariableSchema schema({"short", "fluent"}, {"la", "lb"}, {"pass_rate"});
  std::vector<pc::KeyedRow> feats, mets;
  for (std::size_t i = 0; i < 2; ++i) {
    feats.push_back({recs[i].id, {"lb", "la"}, {10.0 + i, 20.0 + i}});
    mets.push_back({recs[i].id, {"pass_rate"}, {0.5}});
  }
  const std::vector<pc::PromptRecord> two(recs.begin(), recs.begin() + 2);
  const auto m = pc::assemble_matrix(two, feats, mets, schema);
  ASSERT_EQ(m.rows.rows(), 2);
  ASSERT_EQ(m.rows.cols(), 5);
  EXPECT_EQ(m.schema.names(), (std::vector<std::string>{"short", "fluent", "la", "lb", "pass_rate"}));
  EXPECT_DOUBLE_EQ(m.rows(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.rows(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.rows(1, 2), 21.0);
  EXPECT_DOUBLE_EQ(m.rows(1, 3), 11.0);

  auto nan_mets = mets;
  nan_mets[0].values[0] = std::numeric_limits<double>::quiet_NaN();
  const auto dropped = pc::assemble_matrix(two, feats, nan_mets, schema);
  EXPECT_EQ(dropped.rows.rows(), 1);
  EXPECT_EQ(dropped.dropped_rows, 1u);

  auto missing = feats;
  missing.pop_back();
  EXPECT_THROW(pc::assemble_matrix(two, missing, mets, schema), pc::AlignmentError);
  nan_mets[1].values[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(pc::assemble_matrix(two, feats, nan_mets, schema), pc::EmptyMatrixError);
}

TEST(Dataset, AssemblePermutationEquivariant) {
  const auto recs = three_records();
  const pc::VariableSchema schema({"short", "fluent"}, {"la"}, {"pass_rate"});
  std::vector<pc::KeyedRow> feats, mets;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    feats.push_back({recs[i].id, {"la"}, {static_cast<double>(i)}});
    mets.push_back({recs[i].id, {"pass_rate"}, {0.1 * static_cast<double>(i)}});
  }
  const auto a = pc::assemble_matrix(recs, feats, mets, schema);
  const std::vector<pc::PromptRecord> perm{recs[2], recs[0], recs[1]};
  const auto b = pc::assemble_matrix(perm, feats, mets, schema);
  const std::vector<Eigen::Index> order{2, 0, 1};
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_EQ(b.rows.row(r), a.rows.row(order[static_cast<std::size_t>(r)]));
}

TEST(Dataset, StandardizeAndInvert) {
  pc::ObservationMatrix m;
  m.schema = pc::VariableSchema({"M"}, {"L", "K"}, {"C"});
  m.rows.resize(3, 4);
  m.rows << 0, 1, 5, 0.25, 1, 2, 5, 0.5, 0, 3, 5, 1.75;
  const auto s = pc::standardize(m);
  EXPECT_NEAR(s.rows.col(1).mean(), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(s.rows.col(1).array().square().mean()), 1.0, 1e-12);
  EXPECT_EQ(s.rows.col(0), m.rows.col(0));
  ASSERT_EQ(s.constant.size(), 4u);
  EXPECT_TRUE(s.constant[2]);
  const auto back = pc::unstandardize(s);
  EXPECT_LE((back.rows - m.rows).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dataset, DropUncorrelatedRemovesNoise) {
  int removed = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = pc::drop_uncorrelated(tiny_matrix(1000, seed), 0.05);
    EXPECT_TRUE(m.schema.contains("M"));
    EXPECT_TRUE(m.schema.contains("C"));
    EXPECT_TRUE(m.schema.contains("L1"));
    removed += !m.schema.contains("L2");
  }
  EXPECT_GE(removed, 19);
}

TEST(Dataset, DropUncorrelatedBoundaries) {
  auto m = tiny_matrix(200, 3);
  m.rows.col(2) = m.rows.col(3);
  EXPECT_TRUE(pc::drop_uncorrelated(m, 0.05).schema.contains("L2"));
  const auto all = pc::drop_uncorrelated(tiny_matrix(200, 4), 1.0);
  EXPECT_EQ(all.schema.size(), 4u);
}

TEST(Dataset, DropRedundantKeepsFirstOfPair) {
  auto m = tiny_matrix(300, 5);
  m.rows.col(2) = 3.0 * m.rows.col(1).array() + 1.0;
  const auto out = pc::drop_redundant(m, 0.95);
  EXPECT_TRUE(out.schema.contains("L1"));
  EXPECT_FALSE(out.schema.contains("L2"));
  EXPECT_EQ(pc::drop_redundant(m, 1.5).schema.size(), 4u);
}

TEST(Dataset, MatrixCsvRoundTrip) {
  const auto m = tiny_matrix(20, 9);
  const auto back = pc::parse_matrix_csv(pc::serialize_matrix_csv(m));
  EXPECT_EQ(back.schema, m.schema);
  EXPECT_LE((back.rows - m.rows).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(back.row_ids.size(), m.row_ids.size());
}
