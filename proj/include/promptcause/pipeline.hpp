#pragma once

// Stage orchestration: rephrase, generate, features, metrics, discover,
// analyze, verify, optimize. Each stage reads artifacts from the output
// directory, writes its own atomically, and records an entry in
// manifest.json. A stage whose inputs and settings hash to the recorded value
// and whose outputs are intact is skipped.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/analysis.hpp"
#include "promptcause/codemetrics.hpp"
#include "promptcause/dataset.hpp"
#include "promptcause/discovery.hpp"
#include "promptcause/error.hpp"
#include "promptcause/graph.hpp"
#include "promptcause/intention.hpp"
#include "promptcause/io.hpp"
#include "promptcause/linguistics.hpp"
#include "promptcause/llm.hpp"
#include "promptcause/mock_llm.hpp"
#include "promptcause/optimizer.hpp"
#include "promptcause/rephrase.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

namespace fs = std::filesystem;

enum class Stage { rephrase, generate, features, metrics, discover, analyze, verify, optimize };

inline const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s{Stage::rephrase, Stage::generate, Stage::features, Stage::metrics,
                                    Stage::discover, Stage::analyze,  Stage::verify,   Stage::optimize};
  return s;
}

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::rephrase: return "rephrase";
    case Stage::generate: return "generate";
    case Stage::features: return "features";
    case Stage::metrics: return "metrics";
    case Stage::discover: return "discover";
    case Stage::analyze: return "analyze";
    case Stage::verify: return "verify";
    case Stage::optimize: return "optimize";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : all_stages())
    if (to_string(st) == s) return st;
  throw Error("unknown stage '" + std::string(s) + "'");
}

// Bumped when a stage's output format or semantics change.
inline int stage_version(Stage s) {
  switch (s) {
    case Stage::metrics: return kStyleRulesVersion;
    default: return 1;
  }
}

// Raised from inside a stage; carries the artifact the stage was producing.
class StageFailure : public Error {
 public:
  StageFailure(const std::string& stage, const std::string& artifact, const std::string& what)
      : Error("stage '" + stage + "' failed (" + artifact + "): " + what), stage_(stage), artifact_(artifact) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& artifact() const noexcept { return artifact_; }

 private:
  std::string stage_;
  std::string artifact_;
};

struct PipelineConfig {
  fs::path dataset;  // PromptRecord JSONL with gold solutions
  fs::path out_dir = "out";
  std::uint64_t seed = 0;
  IntentionRegistry registry = default_intention_registry();
  std::vector<std::string> features;  // empty: full registry
  SamplingPlan sampling;
  LlmParams rephrase_llm = default_rephrase_params();
  LlmParams generate_llm;
  int solutions = 3;
  bool mock_llm = false;
  HttpClientConfig http;
  MetricsConfig metrics;
  bool screen = true;
  double screen_alpha = 0.05;
  double redundancy = 0.95;  // |r| at which a linguistic column counts as a duplicate
  DiscoveryConfig discovery;
  AnalysisConfig analysis;
  VerifyConfig verify;
  GaConfig ga;
  std::string objective = "pass_rate";
  bool quiet = false;

  // Every stochastic stage draws from a stream derived from `seed`.
  void propagate_seed() {
    sampling.seed = derive_seed(seed, 1);
    discovery.seed = derive_seed(seed, 2);
    analysis.dml.seed = derive_seed(seed, 3);
    verify.seed = derive_seed(seed, 4);
    ga.seed = derive_seed(seed, 5);
  }

  nlohmann::json stage_settings(Stage s) const {
    switch (s) {
      case Stage::rephrase: {
        nlohmann::json reg = nlohmann::json::array();
        for (const auto& i : registry) reg.push_back({i.id, std::string(to_string(i.group)), i.surface_text});
        return {{"registry", reg},
                {"one_hots", sampling.one_hots},
                {"random_combos", sampling.random_combos},
                {"sampling_seed", sampling.seed},
                {"temperature", rephrase_llm.temperature ? nlohmann::json(*rephrase_llm.temperature) : nlohmann::json(nullptr)},
                {"max_tokens", rephrase_llm.max_tokens},
                {"llm", llm_identity()}};
      }
      case Stage::generate:
        return {{"solutions", solutions}, {"max_tokens", generate_llm.max_tokens}, {"llm", llm_identity()}};
      case Stage::features: return {{"features", features}};
      case Stage::metrics: {
        const auto& l = metrics.limits;
        const auto& w = metrics.codebleu_weights;
        return {{"timeout_s", l.timeout_s},   {"memory_mb", l.memory_mb},     {"interpreter", l.interpreter},
                {"codebleu", {w.ngram, w.weighted_ngram, w.syntax}}, {"bleu_n", metrics.bleu.max_n},
                {"bleu_k", metrics.bleu.smoothing_k}};
      }
      case Stage::discover: {
        const auto& d = discovery;
        return {{"screen", screen},           {"alpha", screen_alpha},   {"redundancy", redundancy},   {"lambda_l1", d.lambda_l1},   {"threshold", d.edge_threshold},
                {"max_outer", d.max_outer_iters}, {"tolerance", d.tolerance}, {"rho_max", d.rho_max},   {"max_inner", d.max_inner_iters},
                {"inner_tol", d.inner_tol},  {"seed", d.seed}};
      }
      case Stage::analyze: {
        const auto& a = analysis;
        return {{"folds", a.dml.folds},       {"repetitions", a.dml.repetitions}, {"min_n", a.dml.min_n},
                {"model", static_cast<int>(a.dml.model)}, {"seed", a.dml.seed},  {"top_metrics", a.top_metrics},
                {"top_features", a.top_features},         {"negligible", a.negligible}};
      }
      case Stage::verify:
        return {{"test_fraction", verify.test_fraction}, {"seed", verify.seed}, {"min_n", verify.min_n}, {"model", static_cast<int>(verify.model)}};
      case Stage::optimize: {
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& i : registry) ids.push_back(i.id);
        return {{"objective", objective},       {"population", ga.population}, {"generations", ga.generations},
                {"survivors", ga.survivors},    {"mutation_rate", ga.mutation_rate}, {"seed", ga.seed},
                {"registry", ids}};
      }
    }
    return {};
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"seed", seed}, {"dataset", dataset.generic_string()}};
    for (auto s : all_stages()) j["stages"][to_string(s)] = stage_settings(s);
    return j;
  }

  std::string hash() const;

 private:
  nlohmann::json llm_identity() const {
    if (mock_llm) return "mock";
    return {{"endpoint", http.endpoint}, {"model", http.model}};
  }
};

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string PipelineConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

// Artifact names inside the output directory.
namespace artifact {
inline constexpr const char* rephrased = "rephrased.jsonl";
inline constexpr const char* generated = "generated.jsonl";
inline constexpr const char* features = "features.csv";
inline constexpr const char* metrics = "metrics.csv";
inline constexpr const char* matrix = "matrix.csv";
inline constexpr const char* graph = "graph.json";
inline constexpr const char* graph_dot = "graph.dot";
inline constexpr const char* discovery = "discovery.json";
inline constexpr const char* analysis_json = "analysis.json";
inline constexpr const char* analysis_md = "analysis.md";
inline constexpr const char* verify_csv = "verify.csv";
inline constexpr const char* verify_json = "verify.json";
inline constexpr const char* optimize_json = "optimize.json";
inline constexpr const char* optimize_trace = "optimize_trace.csv";
inline constexpr const char* evaluation = "evaluation_template.md";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* llm_log = "llm_audit.jsonl";
}  // namespace artifact

struct StageSpec {
  std::vector<std::string> inputs;   // inside out_dir; the dataset path is added separately
  std::vector<std::string> outputs;  // inside out_dir
  bool uses_dataset = false;
};

inline StageSpec stage_spec(Stage s) {
  namespace a = artifact;
  switch (s) {
    case Stage::rephrase: return {{}, {a::rephrased}, true};
    case Stage::generate: return {{a::rephrased}, {a::generated}, true};
    case Stage::features: return {{a::rephrased}, {a::features}, false};
    case Stage::metrics: return {{a::generated}, {a::metrics}, true};
    case Stage::discover: return {{a::generated, a::features, a::metrics}, {a::matrix, a::graph, a::graph_dot, a::discovery}, false};
    case Stage::analyze: return {{a::graph, a::matrix}, {a::analysis_json, a::analysis_md}, false};
    case Stage::verify: return {{a::graph, a::matrix}, {a::verify_csv, a::verify_json}, false};
    case Stage::optimize: return {{a::graph, a::matrix}, {a::optimize_json, a::optimize_trace, a::evaluation}, false};
  }
  return {};
}

// Gold reference per original record: its first solution.
inline std::map<std::string, std::string> gold_programs(const std::vector<PromptRecord>& dataset) {
  std::map<std::string, std::string> gold;
  for (const auto& r : dataset)
    if (r.is_original() && !r.solutions.empty()) gold.emplace(r.id, r.solutions.front());
  return gold;
}

inline VariableSchema pipeline_schema(const IntentionRegistry& registry, const std::vector<std::string>& feature_names) {
  std::vector<std::string> meta;
  for (const auto& i : registry) meta.push_back(i.id);
  return VariableSchema(meta, feature_names, CodeMetricVector::names());
}

struct StageReport {
  Stage stage;
  bool skipped = false;  // cache hit
  std::string note;
};

using Logger = std::function<void(const std::string&)>;

class Pipeline {
 public:
  // `client` serves the LLM stages when the config does not ask for the mock.
  Pipeline(PipelineConfig cfg, ChatClient* client = nullptr, Logger log = {})
      : cfg_(std::move(cfg)), client_(client), log_(std::move(log)) {}

  const PipelineConfig& config() const { return cfg_; }

  // Runs the requested stages in dependency order. Inputs of a stage must
  // exist, either from an earlier stage in this call or from a previous run.
  std::vector<StageReport> run(const std::set<Stage>& requested) {
    fs::create_directories(cfg_.out_dir);
    load_manifest();
    std::vector<StageReport> reports;
    for (auto s : all_stages()) {
      if (!requested.count(s)) continue;
      check_inputs(s);
      const auto key = input_key(s);
      if (up_to_date(s, key)) {
        say("[" + to_string(s) + "] up to date");
        reports.push_back({s, true, "cached"});
        continue;
      }
      say("[" + to_string(s) + "] running");
      std::string note;
      try {
        note = run_stage(s);
      } catch (const StageInputMissing&) {
        throw;
      } catch (const StageFailure&) {
        throw;
      } catch (const std::exception& e) {
        throw StageFailure(to_string(s), (cfg_.out_dir / stage_spec(s).outputs.front()).string(), e.what());
      }
      record(s, key);
      save_manifest();
      if (!note.empty()) say("[" + to_string(s) + "] " + note);
      reports.push_back({s, false, note});
    }
    save_manifest();
    return reports;
  }

  fs::path path(const std::string& name) const { return cfg_.out_dir / name; }

 private:
  void say(const std::string& msg) const {
    if (log_ && !cfg_.quiet) log_(msg);
  }

  void check_inputs(Stage s) const {
    const auto spec = stage_spec(s);
    if (spec.uses_dataset && (cfg_.dataset.empty() || !fs::exists(cfg_.dataset)))
      throw StageInputMissing(to_string(s), cfg_.dataset.empty() ? "<dataset>" : cfg_.dataset.string());
    for (const auto& in : spec.inputs)
      if (!fs::exists(path(in))) throw StageInputMissing(to_string(s), path(in).string());
  }

  std::string input_key(Stage s) const {
    const auto spec = stage_spec(s);
    nlohmann::json j{{"stage", to_string(s)}, {"version", stage_version(s)}, {"settings", cfg_.stage_settings(s)}};
    if (spec.uses_dataset) j["dataset"] = hex64(fnv1a(io::read_file(cfg_.dataset)));
    for (const auto& in : spec.inputs) j["inputs"][in] = hex64(fnv1a(io::read_file(path(in))));
    return hex64(fnv1a(j.dump()));
  }

  bool up_to_date(Stage s, const std::string& key) const {
    const auto name = to_string(s);
    if (!manifest_.contains("stages") || !manifest_["stages"].contains(name)) return false;
    const auto& e = manifest_["stages"][name];
    if (e.value("input_hash", "") != key) return false;
    for (const auto& out : stage_spec(s).outputs) {
      if (!fs::exists(path(out))) return false;
      if (!e.contains("outputs") || e["outputs"].value(out, "") != hex64(fnv1a(io::read_file(path(out))))) return false;
    }
    return true;
  }

  void record(Stage s, const std::string& key) {
    nlohmann::json e{{"version", stage_version(s)}, {"input_hash", key}};
    for (const auto& out : stage_spec(s).outputs) e["outputs"][out] = hex64(fnv1a(io::read_file(path(out))));
    manifest_["stages"][to_string(s)] = e;
  }

  void load_manifest() {
    manifest_ = nlohmann::json::object();
    if (fs::exists(path(artifact::manifest))) {
      try {
        manifest_ = nlohmann::json::parse(io::read_file(path(artifact::manifest)));
      } catch (const nlohmann::json::exception&) {
        manifest_ = nlohmann::json::object();  // unreadable manifest: treat as a fresh run
      }
    }
  }

  void save_manifest() {
    manifest_["seed"] = cfg_.seed;
    manifest_["config_hash"] = cfg_.hash();
    io::write_file_atomic(path(artifact::manifest), manifest_.dump(2) + "\n");
  }

  ChatClient& client() {
    if (cfg_.mock_llm) {
      if (!mock_) mock_ = std::make_unique<StudyMockClient>(gold_programs(load_dataset(cfg_.dataset)), derive_seed(cfg_.seed, 6));
      return *mock_;
    }
    if (!client_) throw Error("no LLM client configured (use the mock client or supply an endpoint)");
    return *client_;
  }

  AuditLog& audit() {
    if (!audit_) audit_ = std::make_unique<AuditLog>(path(artifact::llm_log).string());
    return *audit_;
  }

  FeatureRegistry feature_registry() const {
    auto reg = default_feature_registry();
    return cfg_.features.empty() ? reg : select_features(reg, cfg_.features);
  }

  std::string run_stage(Stage s) {
    switch (s) {
      case Stage::rephrase: return stage_rephrase();
      case Stage::generate: return stage_generate();
      case Stage::features: return stage_features();
      case Stage::metrics: return stage_metrics();
      case Stage::discover: return stage_discover();
      case Stage::analyze: return stage_analyze();
      case Stage::verify: return stage_verify();
      case Stage::optimize: return stage_optimize();
    }
    return {};
  }

  std::string stage_rephrase() {
    const auto data = load_dataset(cfg_.dataset);
    auto out = rephrase_dataset(data, cfg_.registry, client(), cfg_.sampling, cfg_.rephrase_llm, &audit());
    for (const auto& f : out.failures) say("  rephrase failure: " + f);
    save_dataset(path(artifact::rephrased), out.records);
    return std::to_string(out.records.size()) + " records, " + std::to_string(out.failures.size()) + " failures";
  }

  std::string stage_generate() {
    const auto recs = load_dataset(path(artifact::rephrased));
    auto out = generate_dataset(recs, client(), cfg_.solutions, cfg_.generate_llm, &audit());
    for (const auto& f : out.failures) say("  generate failure: " + f);
    save_dataset(path(artifact::generated), out.records);
    return std::to_string(out.records.size()) + " records, " + std::to_string(out.empty_slots) + " empty slots";
  }

  std::string stage_features() {
    const auto recs = load_dataset(path(artifact::rephrased));
    const auto reg = feature_registry();
    std::vector<KeyedRow> rows;
    for (const auto& r : recs) {
      auto fv = extract_features(r.question_text, reg);
      rows.push_back({r.id, std::move(fv.names), std::move(fv.values)});
    }
    io::write_file_atomic(path(artifact::features), serialize_keyed_csv(rows));
    return std::to_string(rows.size()) + " rows x " + std::to_string(reg.size()) + " features";
  }

  std::string stage_metrics() {
    const auto gold = gold_programs(load_dataset(cfg_.dataset));
    const auto recs = load_dataset(path(artifact::generated));
    ExecutionCache cache;
    std::vector<KeyedRow> rows;
    std::size_t unusable = 0;
    for (const auto& r : recs) {
      if (r.solutions.empty()) {
        ++unusable;
        rows.push_back({r.id, CodeMetricVector::names(), std::vector<double>(CodeMetricVector::names().size(), std::nan(""))});
        continue;
      }
      auto g = gold.find(r.origin_id);
      rows.push_back(compute_metrics(r, g == gold.end() ? std::string() : g->second, cfg_.metrics, &cache).to_row(r.id));
    }
    io::write_file_atomic(path(artifact::metrics), serialize_keyed_csv(rows));
    return std::to_string(rows.size()) + " rows, " + std::to_string(cache.size()) + " distinct executions, " + std::to_string(unusable) +
           " without solutions";
  }

  std::string stage_discover() {
    const auto recs = load_dataset(path(artifact::generated));
    const auto feats = parse_keyed_csv(io::read_file(path(artifact::features)));
    const auto mets = parse_keyed_csv(io::read_file(path(artifact::metrics)));
    if (feats.empty()) throw EmptyMatrixError();
    const auto schema = pipeline_schema(cfg_.registry, feats.front().names);
    ObservationMatrix m = assemble_matrix(recs, feats, mets, schema);
    const std::size_t before = m.schema.ling_names().size();
    if (cfg_.screen) m = drop_uncorrelated(m, cfg_.screen_alpha);
    m = drop_redundant(m, cfg_.redundancy);
    io::write_file_atomic(path(artifact::matrix), serialize_matrix_csv(m));

    const auto res = two_step_discover(standardize(m), cfg_.discovery);
    io::write_file_atomic(path(artifact::graph), res.graph.to_json().dump(2) + "\n");
    io::write_file_atomic(path(artifact::graph_dot), res.graph.to_dot());
    nlohmann::json diag{{"rows", m.n()},
                        {"dropped_rows", m.dropped_rows},
                        {"linguistic_before_screen", before},
                        {"linguistic_after_screen", m.schema.ling_names().size()},
                        {"nodes", res.graph.node_count()},
                        {"edges", res.graph.edge_count()},
                        {"converged", res.converged()}};
    for (const auto& st : res.steps)
      diag["steps"].push_back({{"name", st.name},
                               {"variables", st.variables},
                               {"converged", st.converged},
                               {"outer_iterations", st.outer_iterations},
                               {"final_h", st.final_h},
                               {"cycle_edges_removed", st.cycle_edges_removed}});
    io::write_file_atomic(path(artifact::discovery), diag.dump(2) + "\n");
    return std::to_string(m.n()) + " rows (" + std::to_string(m.dropped_rows) + " dropped), " + std::to_string(res.graph.node_count()) +
           " nodes, " + std::to_string(res.graph.edge_count()) + " edges";
  }

  std::pair<CausalGraph, ObservationMatrix> graph_and_matrix() const {
    return {CausalGraph::from_json(nlohmann::json::parse(io::read_file(path(artifact::graph)))), load_matrix_csv(path(artifact::matrix))};
  }

  std::string stage_analyze() {
    const auto [g, m] = graph_and_matrix();
    std::vector<AnalysisReport> reports;
    nlohmann::json j{{"reports", nlohmann::json::array()}, {"skipped", nlohmann::json::array()}};
    for (const auto& meta : m.schema.meta_names()) {
      if (!g.contains(meta)) continue;
      try {
        reports.push_back(analyze(g, m, meta, cfg_.analysis));
        j["reports"].push_back(reports.back().to_json());
      } catch (const Error& e) {
        j["skipped"].push_back({{"meta_var", meta}, {"reason", e.what()}});
      }
    }
    io::write_file_atomic(path(artifact::analysis_json), j.dump(2) + "\n");
    io::write_file_atomic(path(artifact::analysis_md), render_analysis_markdown(reports));
    return std::to_string(reports.size()) + " meta variables analyzed";
  }

  std::string stage_verify() {
    const auto [g, m] = graph_and_matrix();
    const auto rep = verify_graph(g, m, cfg_.verify);
    io::write_file_atomic(path(artifact::verify_csv), rep.to_csv());
    io::write_file_atomic(path(artifact::verify_json), rep.to_json().dump(2) + "\n");
    return std::to_string(rep.metrics.size()) + " metrics verified";
  }

  std::string stage_optimize() {
    const auto [g, m] = graph_and_matrix();
    const auto res = optimize(g, m, cfg_.objective, cfg_.ga, cfg_.registry);
    nlohmann::json j{{"objective", cfg_.objective},
                     {"direction", metric_direction(cfg_.objective)},
                     {"best", res.best.str()},
                     {"intentions", decode_intentions(res.best, cfg_.registry)},
                     {"fitness", res.best_fitness},
                     {"expected_objective", metric_direction(cfg_.objective) * res.best_fitness}};
    nlohmann::json texts = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg_.registry.size(); ++i)
      if (res.best[i]) texts.push_back(cfg_.registry[i].surface_text);
    j["surface_texts"] = texts;
    io::write_file_atomic(path(artifact::optimize_json), j.dump(2) + "\n");
    io::write_file_atomic(path(artifact::optimize_trace), res.trace.to_csv());
    io::write_file_atomic(path(artifact::evaluation), evaluation_template(cfg_.objective, res.best, cfg_.registry));
    return "best " + res.best.str() + " fitness " + io::format_double(res.best_fitness);
  }

  PipelineConfig cfg_;
  ChatClient* client_;
  Logger log_;
  nlohmann::json manifest_;
  std::unique_ptr<StudyMockClient> mock_;
  std::unique_ptr<AuditLog> audit_;
};

}  // namespace promptcause
