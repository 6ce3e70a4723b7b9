#include <gtest/gtest.h>

#include <set>

#include "promptcause/llm.hpp"
#include "promptcause/mock_llm.hpp"
#include "promptcause/rephrase.hpp"

namespace pc = promptcause;

namespace {

pc::IntentionVector bits(const std::string& s) { return pc::IntentionVector::parse(s); }

pc::RetryPolicy no_sleep(int retries, std::vector<double>* delays = nullptr) {
  pc::RetryPolicy p;
  p.retries = retries;
  p.sleep = [delays](double s) {
    if (delays) delays->push_back(s);
  };
  return p;
}

}  // namespace

TEST(Registry, DefaultHasTwelveGroupedIntentions) {
  const auto reg = pc::default_intention_registry();
  ASSERT_EQ(reg.size(), 12u);
  int counts[3] = {0, 0, 0};
  for (const auto& i : reg) ++counts[static_cast<int>(i.group)];
  EXPECT_EQ(counts[0], 6);
  EXPECT_EQ(counts[1], 3);
  EXPECT_EQ(counts[2], 3);
  EXPECT_EQ(reg[0].surface_text, "make it short");
  EXPECT_NO_THROW(pc::validate_registry(reg));
  auto dup = reg;
  dup[1].id = dup[0].id;
  EXPECT_THROW(pc::validate_registry(dup), pc::Error);
}

TEST(MetaPrompt, ZeroSelectionIsBareTemplate) {
  const auto reg = pc::default_intention_registry();
  const auto p = pc::build_meta_prompt("Add two numbers.", pc::IntentionVector(reg.size()), reg);
  EXPECT_NE(p.find("Add two numbers."), std::string::npos);
  for (const auto& i : reg) EXPECT_EQ(p.find(i.surface_text), std::string::npos) << i.surface_text;
  EXPECT_EQ(p.find("Instructions:"), std::string::npos);
}

TEST(MetaPrompt, ShortBitSelectsShortClause) {
  const auto reg = pc::default_intention_registry();
  const auto p = pc::build_meta_prompt("Q", bits("100000000000"), reg);
  EXPECT_NE(p.find("make it short"), std::string::npos);
}

TEST(MetaPrompt, InstructionBeforeRole) {
  const auto reg = pc::default_intention_registry();
  // Role bit 6 and instruction bit 1.
  const auto p = pc::build_meta_prompt("Q", bits("010000100000"), reg);
  const auto ins = p.find(reg[1].surface_text), role = p.find(reg[6].surface_text);
  ASSERT_NE(ins, std::string::npos);
  ASSERT_NE(role, std::string::npos);
  EXPECT_LT(ins, role);
}

TEST(MetaPrompt, LengthMismatch) {
  const auto reg = pc::default_intention_registry();
  EXPECT_THROW(pc::build_meta_prompt("Q", bits("101"), reg), pc::LengthMismatch);
}

TEST(MetaPrompt, InjectiveOverAllSelections) {
  const auto reg = pc::default_intention_registry();
  std::set<std::string> seen;
  for (std::uint32_t mask = 0; mask < (1u << reg.size()); ++mask) {
    pc::IntentionVector v(reg.size());
    for (std::size_t k = 0; k < reg.size(); ++k) v.set(k, (mask >> k) & 1u);
    seen.insert(pc::build_meta_prompt("Print the sum.", v, reg));
  }
  EXPECT_EQ(seen.size(), std::size_t{1} << reg.size());
}

TEST(Rephrase, EchoMockReturnsQuestion) {
  const auto reg = pc::default_intention_registry();
  auto client = pc::MockClient::echo();
  const std::string q = "Read n and print n squared.";
  EXPECT_EQ(pc::rephrase_question(q, bits("100000000000"), reg, *client), q);
}

TEST(Rephrase, FixtureLookupAndAudit) {
  const auto reg = pc::default_intention_registry();
  const auto sel = bits("000100000000");
  const std::string q = "Compute the factorial.";
  auto client = pc::MockClient::fixtures({{pc::build_meta_prompt(q, sel, reg), "Compute n factorial, fluently."}});
  pc::AuditLog audit;
  EXPECT_EQ(pc::rephrase_question(q, sel, reg, *client, pc::default_rephrase_params(), "rec-7", &audit), "Compute n factorial, fluently.");
  ASSERT_EQ(audit.entries().size(), 1u);
  EXPECT_NE(audit.entries()[0].find("rec-7"), std::string::npos);
}

TEST(Retry, AttemptsAreRetriesPlusOne) {
  const auto reg = pc::default_intention_registry();
  auto client = pc::MockClient::echo();
  client->fail_next(100);
  std::vector<double> delays;
  auto params = pc::default_rephrase_params();
  params.retry = no_sleep(3, &delays);
  params.retry.base_delay_s = 0.5;
  EXPECT_THROW(pc::rephrase_question("Q", bits("100000000000"), reg, *client, params), pc::TransportError);
  EXPECT_EQ(client->calls(), 4);
  EXPECT_EQ(delays, (std::vector<double>{0.5, 1.0, 2.0}));
}

TEST(Retry, RecoversAfterTransientFailures) {
  auto client = pc::MockClient::echo();
  client->fail_next(2);
  pc::ChatRequest req{"r", {{"user", "hello"}}, std::nullopt, 10};
  EXPECT_EQ(pc::complete_with_retry(*client, req, no_sleep(2)).text, "hello");
  EXPECT_EQ(client->calls(), 3);
}

TEST(Retry, EmptyResponseNotRetried) {
  auto client = pc::MockClient::responder([](const pc::ChatRequest&) { return pc::ChatResponse{"", "length", 0, 0}; });
  pc::ChatRequest req{"r", {{"user", "hello"}}, std::nullopt, 10};
  EXPECT_THROW(pc::complete_with_retry(*client, req, no_sleep(3)), pc::EmptyResponse);
  EXPECT_EQ(client->calls(), 1);
}

TEST(Generate, FixedProgramCopies) {
  auto client = pc::MockClient::responder([](const pc::ChatRequest&) { return pc::ChatResponse{"print(1)", "stop", 0, 0}; });
  const auto g = pc::generate_code("Q", *client);
  EXPECT_EQ(g.solutions, (std::vector<std::string>{"print(1)", "print(1)", "print(1)"}));
  EXPECT_EQ(g.empty_slots, 0u);
}

TEST(Generate, DefaultCountAndTokenCap) {
  int seen_tokens = 0, calls = 0;
  auto client = pc::MockClient::responder([&](const pc::ChatRequest& r) {
    seen_tokens = r.max_tokens;
    ++calls;
    return pc::ChatResponse{"x", "stop", 0, 0};
  });
  pc::generate_code("Q", *client);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(seen_tokens, 2000);
  EXPECT_THROW(pc::generate_code("Q", *client, 0), pc::Error);
}

TEST(Generate, FencesStripped) {
  auto client = pc::MockClient::responder(
      [](const pc::ChatRequest&) { return pc::ChatResponse{"Here you go:\n```python\nprint(2)\nx = 3\n```\nDone.", "stop", 0, 0}; });
  const auto g = pc::generate_code("Q", *client, 1);
  ASSERT_EQ(g.solutions.size(), 1u);
  EXPECT_EQ(g.solutions[0], "print(2)\nx = 3");
  EXPECT_EQ(pc::strip_code_fences("plain"), "plain");
}

TEST(Generate, EmptySlotRecordedNotFatal) {
  auto client = pc::MockClient::responder([](const pc::ChatRequest& r) {
    return r.id.back() == '1' ? pc::ChatResponse{"", "stop", 0, 0} : pc::ChatResponse{"ok", "stop", 0, 0};
  });
  const auto g = pc::generate_code("Q", *client, 3, 100, "rec");
  EXPECT_EQ(g.solutions.size(), 2u);
  EXPECT_EQ(g.empty_slots, 1u);
}

TEST(Sampling, PlanShapeAndDeterminism) {
  pc::SamplingPlan plan;
  plan.seed = 42;
  const auto a = pc::plan_selections("p1", 12, plan);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(a[i].count(), 1u);
  std::set<std::string> distinct;
  for (const auto& v : a) distinct.insert(v.str());
  EXPECT_EQ(distinct.size(), a.size());
  for (std::size_t i = 12; i < a.size(); ++i) EXPECT_GE(a[i].count(), 2u);
  EXPECT_EQ(pc::plan_selections("p1", 12, plan), a);
  EXPECT_EQ(pc::origin_of_id(pc::rephrased_id("p1", a[3]) + "#2"), "p1");
}

TEST(Sampling, RephraseDatasetKeepsOriginals) {
  const auto reg = pc::default_intention_registry();
  std::vector<pc::PromptRecord> ds{{"p", "Add two numbers.", "p", pc::IntentionVector(12), {"print(1)"}, {{"", "1\n"}}, std::nullopt}};
  auto client = pc::MockClient::echo();
  pc::SamplingPlan plan;
  plan.random_combos = 2;
  const auto out = pc::rephrase_dataset(ds, reg, *client, plan);
  ASSERT_EQ(out.records.size(), 15u);
  EXPECT_TRUE(out.records[0].is_original());
  EXPECT_TRUE(out.records[0].solutions.empty());
  for (std::size_t i = 1; i < out.records.size(); ++i) {
    EXPECT_EQ(out.records[i].origin_id, "p");
    EXPECT_EQ(out.records[i].test_cases, ds[0].test_cases);
  }
}

TEST(StudyMock, DeterministicAndRouted) {
  const auto reg = pc::default_intention_registry();
  pc::StudyMockClient a({{"p", "print(1)\n"}}, 9), b({{"p", "print(1)\n"}}, 9);
  const std::string q = "Given a list of integers, compute the total. Then print it.";
  const auto sel = bits("100000000000");
  const auto ra = pc::rephrase_question(q, sel, reg, a, {}, "p~" + sel.str());
  EXPECT_EQ(ra, pc::rephrase_question(q, sel, reg, b, {}, "p~" + sel.str()));
  EXPECT_LT(ra.size(), q.size());
  const auto ga = pc::generate_code(ra, a, 3, 2000, "p~" + sel.str());
  const auto gb = pc::generate_code(ra, b, 3, 2000, "p~" + sel.str());
  EXPECT_EQ(ga.solutions, gb.solutions);
  for (const auto& s : ga.solutions) EXPECT_FALSE(s.empty());
}

TEST(StudyMock, LongRephrasingGrowsQuestion) {
  const auto reg = pc::default_intention_registry();
  pc::StudyMockClient c({}, 1);
  const std::string q = "Print the sum.";
  EXPECT_GT(pc::rephrase_question(q, bits("001000000000"), reg, c).size(), q.size() + 100);
}
