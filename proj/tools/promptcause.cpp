// promptcause command-line driver. Exit codes: 0 success, 1 usage,
// 2 data error, 3 stage failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that clashes
// with Eigen parameter names.
#include "promptcause/pipeline.hpp"
#include "promptcause/http_client.hpp"

namespace pc = promptcause;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kUsage = 1, kDataError = 2, kStageFailure = 3;

pc::IntentionRegistry load_registry(const std::string& path) {
  const auto j = json::parse(pc::io::read_file(path));
  pc::IntentionRegistry reg;
  for (const auto& e : j.at("intentions"))
    reg.push_back({e.at("id").get<std::string>(), pc::parse_intention_group(e.at("group").get<std::string>()),
                   e.at("text").get<std::string>()});
  pc::validate_registry(reg);
  return reg;
}

// Accepts records in the native format, or problems with `question`,
// `solutions` and either `tests` [{input, output}] or an `input_output`
// object holding parallel `inputs`/`outputs` lists.
std::vector<pc::PromptRecord> ingest(const std::string& path, std::size_t bits) {
  std::vector<pc::PromptRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : pc::io::split_lines(pc::io::read_file(path))) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw pc::SchemaError(line_no, "<json>", e.what());
    }
    if (j.contains("question_text")) {
      out.push_back(pc::record_from_json(j, line_no));
      continue;
    }
    try {
      pc::PromptRecord r;
      r.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : "p" + std::to_string(line_no);
      r.origin_id = r.id;
      r.question_text = j.at("question").get<std::string>();
      r.intention_vector = pc::IntentionVector(bits);
      if (j.contains("solutions")) r.solutions = j["solutions"].get<std::vector<std::string>>();
      if (j.contains("tests")) {
        for (const auto& t : j["tests"]) r.test_cases.push_back({t.at("input").get<std::string>(), t.at("output").get<std::string>()});
      } else {
        const auto& io = j.at("input_output");
        const auto ins = io.at("inputs").get<std::vector<std::string>>();
        const auto outs = io.at("outputs").get<std::vector<std::string>>();
        if (ins.size() != outs.size()) throw pc::SchemaError(line_no, "input_output", "inputs and outputs differ in length");
        for (std::size_t i = 0; i < ins.size(); ++i) r.test_cases.push_back({ins[i], outs[i]});
      }
      if (j.contains("difficulty") && j["difficulty"].is_string()) r.difficulty = j["difficulty"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw pc::SchemaError(line_no, "<problem>", e.what());
    }
  }
  // Round-trip through the validating parser.
  return pc::parse_dataset(pc::serialize_dataset(out));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal analysis of prompt rephrasings and generated-code quality"};
  app.set_config("--config", "", "key = value configuration file; flags override it");
  app.fallthrough();
  app.require_subcommand(1);

  pc::PipelineConfig cfg;
  std::string dataset, out_dir = "out", intentions_file, model_name = "ridge";
  std::vector<std::string> features;
  double timeout_s = cfg.metrics.limits.timeout_s;
  bool no_screen = false;
  int retries = 3;
  std::size_t max_inflight = 4;
  double rephrase_temperature = 0.7;

  app.add_option("--dataset", dataset, "PromptRecord JSONL with gold solutions");
  app.add_option("--out", out_dir, "output directory for artifacts")->capture_default_str();
  app.add_option("--seed", cfg.seed, "seed for every stochastic stage")->capture_default_str();
  app.add_flag("--mock-llm", cfg.mock_llm, "use the deterministic offline client");
  app.add_flag("--quiet", cfg.quiet, "suppress progress messages");
  app.add_option("--intentions", intentions_file, "JSON file {\"intentions\": [{id, group, text}]} replacing the default registry");
  app.add_option("--features", features, "linguistic features to extract (default: all)")->delimiter(',');
  app.add_option("--endpoint", cfg.http.endpoint, "chat-completions URL")->capture_default_str();
  app.add_option("--model", cfg.http.model, "model name sent to the endpoint")->capture_default_str();
  app.add_option("--api-key-env", cfg.http.api_key_env, "environment variable holding the API key")->capture_default_str();
  app.add_option("--max-inflight", max_inflight, "concurrent LLM requests")->capture_default_str();
  app.add_option("--retries", retries, "retries per LLM request")->capture_default_str();
  app.add_option("--rephrase-temperature", rephrase_temperature, "sampling temperature for rephrasing")->capture_default_str();
  app.add_option("--solutions", cfg.solutions, "programs generated per question")->capture_default_str();
  app.add_option("--max-tokens", cfg.generate_llm.max_tokens, "token cap per generated program")->capture_default_str();
  app.add_option("--random-combos", cfg.sampling.random_combos, "multi-intention rephrasings per question")->capture_default_str();
  app.add_option("--timeout", timeout_s, "per-test execution limit in seconds")->capture_default_str();
  app.add_option("--memory-mb", cfg.metrics.limits.memory_mb, "per-test address-space limit")->capture_default_str();
  app.add_option("--interpreter", cfg.metrics.limits.interpreter, "python command")->capture_default_str();
  std::vector<double> codebleu_weights;
  app.add_option("--codebleu-weights", codebleu_weights, "CodeBLEU weights: ngram,weighted_ngram,syntax")->delimiter(',')->expected(3);
  app.add_option("--workers", cfg.metrics.limits.workers, "parallel executions (0: one per core)")->capture_default_str();
  app.add_flag("--no-screen", no_screen, "keep linguistic columns that correlate with nothing");
  app.add_option("--alpha", cfg.screen_alpha, "significance level of the correlation screen")->capture_default_str();
  app.add_option("--redundancy", cfg.redundancy, "drop linguistic columns this correlated with an earlier one (>1 disables)")
      ->capture_default_str();
  app.add_option("--lambda", cfg.discovery.lambda_l1, "L1 penalty of the structure learner")->capture_default_str();
  app.add_option("--threshold", cfg.discovery.edge_threshold, "edge pruning threshold")->capture_default_str();
  app.add_option("--nuisance", model_name, "nuisance regressor: ridge or boosted_stumps")->capture_default_str();
  app.add_option("--folds", cfg.analysis.dml.folds, "cross-fitting folds")->capture_default_str();
  app.add_option("--top-metrics", cfg.analysis.top_metrics, "metrics explained per meta variable")->capture_default_str();
  app.add_option("--top-features", cfg.analysis.top_features, "responsible features per metric")->capture_default_str();
  app.add_option("--objective", cfg.objective, "metric the optimizer targets")->capture_default_str();
  app.add_option("--population", cfg.ga.population, "GA population size")->capture_default_str();
  app.add_option("--generations", cfg.ga.generations, "GA generations")->capture_default_str();
  app.add_option("--survivors", cfg.ga.survivors, "GA survivors per generation")->capture_default_str();
  app.add_option("--mutation-rate", cfg.ga.mutation_rate, "GA per-bit mutation probability")->capture_default_str();

  auto* ingest_cmd = app.add_subcommand("ingest", "validate problems and write a PromptRecord dataset");
  std::string ingest_in, ingest_out;
  ingest_cmd->add_option("input", ingest_in, "problem JSONL")->required();
  ingest_cmd->add_option("output", ingest_out, "dataset JSONL to write")->required();

  const std::map<std::string, std::string> help{
      {"rephrase", "rephrase every question under the sampling plan"},
      {"generate", "generate programs for every rephrased question"},
      {"features", "extract linguistic features of every question"},
      {"metrics", "execute and score generated programs"},
      {"discover", "assemble the observation matrix and learn the causal graph"},
      {"analyze", "explain the effect of each meta-prompt variable"},
      {"verify", "held-out predictive check of the graph"},
      {"optimize", "search for the intention combination maximizing the objective"}};
  for (auto s : pc::all_stages()) app.add_subcommand(pc::to_string(s), help.at(pc::to_string(s)));
  bool list_features = false;
  app.get_subcommand("features")->add_flag("--list", list_features, "print the feature registry and exit");

  auto* ate_cmd = app.add_subcommand("ate", "estimate one average treatment effect on the learned graph");
  std::string treatment, outcome, meta_for_ate;
  std::optional<double> x1, x0;
  ate_cmd->add_option("--treatment", treatment)->required();
  ate_cmd->add_option("--outcome", outcome)->required();
  ate_cmd->add_option("--x1", x1, "treated value");
  ate_cmd->add_option("--x0", x0, "control value");
  ate_cmd->add_option("--meta", meta_for_ate, "meta variable whose strata give the values of a linguistic treatment");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "run stages in dependency order");
  std::vector<std::string> stage_names;
  pipeline_cmd->add_option("--stages", stage_names, "subset of stages (default: all)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    cfg.dataset = dataset;
    cfg.out_dir = out_dir;
    cfg.features = features;
    cfg.screen = !no_screen;
    cfg.metrics.limits.timeout_s = timeout_s;
    if (!codebleu_weights.empty()) {
      cfg.metrics.codebleu_weights = {codebleu_weights[0], codebleu_weights[1], codebleu_weights[2]};
      pc::validate(cfg.metrics.codebleu_weights);
    }
    cfg.analysis.dml.model = pc::parse_nuisance_model(model_name);
    cfg.verify.model = cfg.analysis.dml.model;
    cfg.rephrase_llm.temperature = rephrase_temperature;
    for (auto* p : {&cfg.rephrase_llm, &cfg.generate_llm}) {
      p->retry.retries = retries;
      p->max_inflight = max_inflight;
    }
    cfg.rephrase_llm.max_tokens = cfg.generate_llm.max_tokens;
    if (!intentions_file.empty()) cfg.registry = load_registry(intentions_file);
    cfg.propagate_seed();
    cfg.ga.check();
    cfg.discovery.check();
  } catch (const pc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (ingest_cmd->parsed()) {
      const auto recs = ingest(ingest_in, cfg.registry.size());
      pc::save_dataset(ingest_out, recs);
      std::cout << "wrote " << recs.size() << " records to " << ingest_out << '\n';
      return kOk;
    }
    if (list_features) {
      for (const auto& f : pc::list_features(pc::default_feature_registry()))
        std::cout << f.name << '\t' << pc::to_string(f.family) << '\t' << f.description << '\n';
      return kOk;
    }
    if (ate_cmd->parsed()) {
      const auto g = pc::CausalGraph::from_json(json::parse(pc::io::read_file(cfg.out_dir / pc::artifact::graph)));
      const auto m = pc::load_matrix_csv(cfg.out_dir / pc::artifact::matrix);
      double hi = 1.0, lo = 0.0;
      if (!meta_for_ate.empty()) {
        hi = pc::conditional_mean(m, treatment, meta_for_ate, 1.0);
        lo = pc::conditional_mean(m, treatment, meta_for_ate, 0.0);
      }
      if (x1) hi = *x1;
      if (x0) lo = *x0;
      std::cout << pc::estimate_ate(m, g, treatment, outcome, hi, lo, cfg.analysis.dml).to_json().dump(2) << '\n';
      return kOk;
    }

    std::set<pc::Stage> stages;
    if (pipeline_cmd->parsed()) {
      if (stage_names.empty())
        stages.insert(pc::all_stages().begin(), pc::all_stages().end());
      else
        for (const auto& n : stage_names) stages.insert(pc::parse_stage(n));
    } else {
      for (auto s : pc::all_stages())
        if (app.get_subcommand(pc::to_string(s))->parsed()) stages.insert(s);
    }

    std::unique_ptr<pc::ChatClient> live;
    const bool needs_llm = stages.count(pc::Stage::rephrase) || stages.count(pc::Stage::generate);
    if (needs_llm && !cfg.mock_llm) live = std::make_unique<pc::HttpChatClient>(cfg.http);
    pc::Pipeline pipe(cfg, live.get(), [](const std::string& msg) { std::cerr << msg << '\n'; });
    pipe.run(stages);
    if (!cfg.quiet) std::cerr << "artifacts in " << cfg.out_dir.string() << '\n';
    return kOk;
  } catch (const pc::StageInputMissing& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const pc::StageFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  } catch (const pc::SchemaError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const pc::IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const pc::AlignmentError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const pc::EmptyMatrixError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const pc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  }
}
