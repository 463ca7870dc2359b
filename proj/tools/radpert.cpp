#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "radpert/eval.hpp"
#include "radpert/kg_model.hpp"
#include "radpert/labeler.hpp"
#include "radpert/radprompt.hpp"
#include "radpert/rule_dsl.hpp"
#include "radpert/util.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using namespace radpert;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

struct LoadedRules {
  rules::RuleSet set;
  std::string text;
  std::string source;  // "bundled" or the file path
};

LoadedRules load_rules(const std::string& path) {
  LoadedRules out;
  if (path.empty()) {
    out.text = rules::default_rules_text();
    out.set = rules::default_rules();
    out.source = "bundled";
  } else {
    out.text = read_file(path);
    out.set = rules::parse_rule_file(out.text);
    out.source = path;
  }
  return out;
}

void write_metadata(const std::string& path, const std::string& command,
                    const ordered_json& options, const std::string& rules_text) {
  if (path.empty()) return;
  ordered_json meta;
  meta["artifact_version"] = kArtifactVersion;
  meta["command"] = command;
  meta["rules_hash"] = fnv1a64_hex(rules_text);
  meta["options"] = options;
  write_file(path, meta.dump(2) + "\n");
}

int run_label(const std::string& input, const std::string& rules_path,
              const std::string& output, const std::string& evidence_path,
              const std::string& metadata_path, bool induced, int jobs) {
  const auto docs = kg::parse_corpus_lenient(read_file(input));
  const LoadedRules rules = load_rules(rules_path);

  label::LabelOptions options;
  options.induced = induced;
  const auto result = label::label_corpus(docs, rules.set, options, jobs);

  write_file(output, label::labels_to_csv(result.records));
  if (!evidence_path.empty()) {
    write_file(evidence_path, label::evidence_to_tsv(result.records));
  }

  ordered_json echo;
  echo["input"] = input;
  echo["rules"] = rules.source;
  echo["output"] = output;
  echo["induced"] = induced;
  echo["jobs"] = jobs;
  write_metadata(metadata_path, "label", echo, rules.text);

  for (Pathology p : all_pathologies()) {
    long counts[4] = {0, 0, 0, 0};
    for (const auto& r : result.records) {
      ++counts[static_cast<int>(r.labels[pathology_index(p)])];
    }
    std::cout << pathology_name(p) << ": " << counts[3] << " positive, "
              << counts[1] << " negative, " << counts[2] << " uncertain, "
              << counts[0] << " null\n";
  }
  std::cout << result.records.size() << " reports labeled";
  if (!result.failures.empty()) {
    std::cout << ", " << result.failures.size() << " failed";
  }
  std::cout << "\n";

  for (const auto& f : result.failures) {
    std::cerr << "error: report '" << f.report_id << "': " << f.error << "\n";
  }
  return result.failures.empty() ? 0 : 2;
}

int run_eval(const std::string& pred_path, const std::string& gold_path,
             const std::string& baseline_path, long replicates,
             std::uint64_t seed, double alpha, bool exhaustive, int jobs,
             const std::string& out_json, const std::string& out_table,
             const std::string& out_confusion, const std::string& metadata_path) {
  const auto pred = label::labels_from_csv(read_file(pred_path));
  const auto gold = label::labels_from_csv(read_file(gold_path));

  eval::EvalOptions options;
  options.bootstrap.replicates = replicates;
  options.bootstrap.seed = seed;
  options.bootstrap.alpha = alpha;
  options.bootstrap.exhaustive = exhaustive;
  options.bootstrap.jobs = jobs;
  if (!baseline_path.empty()) {
    options.baseline = label::labels_from_csv(read_file(baseline_path));
  }

  const auto report = eval::evaluate(pred, gold, options);

  const std::string table = eval::render_table(report);
  if (!out_json.empty()) write_file(out_json, eval::render_json(report));
  if (!out_table.empty()) write_file(out_table, table);
  if (!out_confusion.empty()) {
    write_file(out_confusion, eval::render_confusion_csv(report));
  }
  if (out_json.empty() && out_table.empty() && out_confusion.empty()) {
    std::cout << table;
  }

  ordered_json echo;
  echo["pred"] = pred_path;
  echo["gold"] = gold_path;
  echo["baseline"] = baseline_path;
  echo["replicates"] = report.replicates;
  echo["seed"] = seed;
  echo["alpha"] = alpha;
  echo["exhaustive"] = exhaustive;
  echo["jobs"] = jobs;
  write_metadata(metadata_path, "eval", echo, "");
  return 0;
}

int run_radprompt(const std::string& input, const std::string& rules_path,
                  const std::string& backend_kind, const std::string& fixtures,
                  const std::string& base_url, const std::string& model,
                  const std::string& api_key_env, double temperature,
                  int max_tokens, int timeout_seconds, int retries,
                  int transport_retries, int rpm, int concurrency, bool induced,
                  const std::string& transcripts_path,
                  const std::string& first_labels_path,
                  const std::string& final_labels_path,
                  const std::string& metadata_path) {
  std::unique_ptr<prompt::LlmBackend> backend;
  if (backend_kind == "mock") {
    if (fixtures.empty()) {
      std::cerr << "error: --backend mock requires --fixtures\n";
      return 1;
    }
    backend = std::make_unique<prompt::MockBackend>(
        prompt::MockBackend::from_file(fixtures));
  } else if (backend_kind == "http") {
    if (base_url.empty()) {
      std::cerr << "error: --backend http requires --base-url\n";
      return 1;
    }
    prompt::HttpBackendConfig config;
    config.base_url = base_url;
    config.transport_retries = transport_retries;
    config.requests_per_minute = rpm;
    if (!api_key_env.empty()) {
      const char* key = std::getenv(api_key_env.c_str());
      if (!key || !*key) {
        std::cerr << "error: environment variable " << api_key_env
                  << " is not set\n";
        return 1;
      }
      config.api_key = key;
    }
    backend = std::make_unique<prompt::HttpBackend>(std::move(config));
  } else {
    std::cerr << "error: unknown backend '" << backend_kind << "'\n";
    return 1;
  }

  const auto docs = kg::parse_corpus_lenient(read_file(input));
  const LoadedRules rules = load_rules(rules_path);

  prompt::RunParams params;
  params.backend.model = model;
  params.backend.temperature = temperature;
  params.backend.max_tokens = max_tokens;
  params.backend.timeout_seconds = timeout_seconds;
  params.max_total_retries = retries;
  label::LabelOptions label_options;
  label_options.induced = induced;

  struct Slot {
    std::optional<prompt::Transcript> transcript;
    std::string error;
    bool backend_failure = false;
    bool parse_failure = false;
  };
  std::vector<Slot> slots(docs.size());

  parallel_for_indexed(docs.size(), concurrency, [&](std::size_t i) {
    auto& slot = slots[i];
    if (!docs[i].graph) {
      slot.error = docs[i].error.empty() ? "unparseable document" : docs[i].error;
      return;
    }
    try {
      slot.transcript = prompt::run_radprompt(*docs[i].graph, rules.set,
                                              *backend, params, label_options);
    } catch (const prompt::PromptError& e) {
      slot.error = e.what();
      if (e.code() == prompt::PromptError::Code::UnparseableAfterRetries) {
        slot.parse_failure = true;
      } else {
        slot.backend_failure = true;
      }
    } catch (const std::exception& e) {
      slot.error = e.what();
      slot.backend_failure = true;
    }
  });

  std::string transcripts;
  std::vector<label::LabelRecord> first_records;
  std::vector<label::LabelRecord> final_records;
  bool any_backend = false;
  bool any_parse = false;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& slot = slots[i];
    if (!slot.transcript) {
      std::cerr << "error: report '" << docs[i].report_id << "': " << slot.error
                << "\n";
      any_backend = any_backend || slot.backend_failure;
      any_parse = any_parse || slot.parse_failure;
      continue;
    }
    transcripts += prompt::transcript_to_json_line(*slot.transcript);
    label::LabelRecord first;
    first.report_id = slot.transcript->report_id;
    first.labels = slot.transcript->first_labels;
    first_records.push_back(std::move(first));
    label::LabelRecord final_record;
    final_record.report_id = slot.transcript->report_id;
    final_record.labels = slot.transcript->final_labels;
    final_records.push_back(std::move(final_record));
  }

  if (!transcripts_path.empty()) write_file(transcripts_path, transcripts);
  if (!first_labels_path.empty()) {
    write_file(first_labels_path, label::labels_to_csv(first_records));
  }
  if (!final_labels_path.empty()) {
    write_file(final_labels_path, label::labels_to_csv(final_records));
  }

  ordered_json echo;
  echo["input"] = input;
  echo["rules"] = rules.source;
  echo["backend"] = backend_kind;
  echo["model"] = model;
  echo["temperature"] = temperature;
  echo["retries"] = retries;
  echo["concurrency"] = concurrency;
  echo["induced"] = induced;
  write_metadata(metadata_path, "radprompt", echo, rules.text);

  std::cout << final_records.size() << " of " << docs.size()
            << " reports completed\n";
  if (any_backend) return 3;
  if (any_parse) return 4;
  const bool any_other_failure = final_records.size() != docs.size();
  return any_other_failure ? 2 : 0;
}

int run_rules_validate(const std::string& path) {
  try {
    const auto set = rules::parse_rule_file(read_file(path));
    const auto diagnostics = rules::validate_rules(set);
    for (const auto& d : diagnostics) {
      std::cout << rules::rule_issue_string(d.issue) << " [" << d.rule_id
                << "]: " << d.message << "\n";
    }
    std::cout << diagnostics.size() << " errors (" << set.size() << " rules)\n";
    return diagnostics.empty() ? 0 : 1;
  } catch (const rules::RuleParseError& e) {
    std::cout << rules::rule_issue_string(e.issue()) << ": " << e.what() << "\n";
    std::cout << "1 errors\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-based chest X-ray report labeler with evaluation and "
               "two-turn LLM prompting"};
  app.require_subcommand(1);

  // label
  auto* label_cmd = app.add_subcommand("label", "Label a knowledge-graph corpus");
  std::string label_input, label_rules, label_output, label_evidence,
      label_metadata;
  bool label_induced = false;
  int label_jobs = 1;
  label_cmd->add_option("--input", label_input, "Corpus JSON")
      ->required()
      ->check(CLI::ExistingFile);
  label_cmd->add_option("--rules", label_rules, "Rule file (default: bundled)")
      ->check(CLI::ExistingFile);
  label_cmd->add_option("--output", label_output, "Labels CSV")->required();
  label_cmd->add_option("--evidence", label_evidence, "Evidence TSV sidecar");
  label_cmd->add_option("--metadata", label_metadata, "Run metadata JSON");
  label_cmd->add_flag("--induced", label_induced,
                      "Induced matching (reject unlicensed relations)");
  label_cmd->add_option("--jobs", label_jobs, "Worker threads")
      ->check(CLI::PositiveNumber);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold");
  std::string eval_pred, eval_gold, eval_baseline, eval_json, eval_table,
      eval_confusion, eval_metadata;
  long eval_replicates = 1000;
  std::uint64_t eval_seed = 42;
  double eval_alpha = 0.05;
  bool eval_exhaustive = false;
  int eval_jobs = 1;
  eval_cmd->add_option("--pred", eval_pred, "Predicted labels CSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold", eval_gold, "Gold labels CSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", eval_baseline,
                       "Baseline labels CSV (adds improvement columns)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--replicates", eval_replicates, "Bootstrap replicates")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_seed, "Bootstrap seed");
  eval_cmd->add_option("--alpha", eval_alpha, "CI significance level");
  eval_cmd->add_flag("--exhaustive", eval_exhaustive,
                     "Enumerate all n^n resamples (n <= 5)");
  eval_cmd->add_option("--jobs", eval_jobs, "Worker threads")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out-json", eval_json, "Machine-readable results");
  eval_cmd->add_option("--out-table", eval_table, "Human-readable table");
  eval_cmd->add_option("--out-confusion", eval_confusion, "Confusion CSV");
  eval_cmd->add_option("--metadata", eval_metadata, "Run metadata JSON");

  // radprompt
  auto* rp_cmd = app.add_subcommand("radprompt", "Two-turn LLM labeling");
  std::string rp_input, rp_rules, rp_backend = "mock", rp_fixtures, rp_base_url,
              rp_model = "offline", rp_api_key_env, rp_transcripts, rp_first,
              rp_final, rp_metadata;
  double rp_temperature = 0.0;
  int rp_max_tokens = 1024, rp_timeout = 60, rp_retries = 2,
      rp_transport_retries = 2, rp_rpm = 0, rp_concurrency = 1;
  bool rp_induced = false;
  rp_cmd->add_option("--input", rp_input, "Corpus JSON")
      ->required()
      ->check(CLI::ExistingFile);
  rp_cmd->add_option("--rules", rp_rules, "Rule file (default: bundled)")
      ->check(CLI::ExistingFile);
  rp_cmd->add_option("--backend", rp_backend, "mock | http");
  rp_cmd->add_option("--fixtures", rp_fixtures, "Mock fixture JSON")
      ->check(CLI::ExistingFile);
  rp_cmd->add_option("--base-url", rp_base_url, "Chat endpoint base URL");
  rp_cmd->add_option("--model", rp_model, "Model name");
  rp_cmd->add_option("--api-key-env", rp_api_key_env,
                     "Env var holding the API key");
  rp_cmd->add_option("--temperature", rp_temperature, "Sampling temperature");
  rp_cmd->add_option("--max-tokens", rp_max_tokens, "Completion token cap");
  rp_cmd->add_option("--timeout", rp_timeout, "Request timeout (s)");
  rp_cmd->add_option("--retries", rp_retries, "Max corrective re-asks");
  rp_cmd->add_option("--transport-retries", rp_transport_retries,
                     "HTTP transport retries");
  rp_cmd->add_option("--rpm", rp_rpm, "Requests per minute (0 = unthrottled)");
  rp_cmd->add_option("--concurrency", rp_concurrency, "Concurrent reports")
      ->check(CLI::PositiveNumber);
  rp_cmd->add_flag("--induced", rp_induced, "Induced matching");
  rp_cmd->add_option("--transcripts", rp_transcripts, "Transcript JSONL output");
  rp_cmd->add_option("--first-labels", rp_first, "First-turn labels CSV");
  rp_cmd->add_option("--final-labels", rp_final, "Final labels CSV");
  rp_cmd->add_option("--metadata", rp_metadata, "Run metadata JSON");

  // rules
  auto* rules_cmd = app.add_subcommand("rules", "Inspect rule files");
  auto* validate_cmd = rules_cmd->add_subcommand("validate", "Check a rule file");
  std::string validate_path;
  validate_cmd->add_option("file", validate_path, "Rule file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* export_cmd =
      rules_cmd->add_subcommand("export", "Dump the bundled starter rules");
  std::string export_path;
  export_cmd->add_option("--output", export_path, "Write to file (default: stdout)");
  rules_cmd->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (label_cmd->parsed()) {
      return run_label(label_input, label_rules, label_output, label_evidence,
                       label_metadata, label_induced, label_jobs);
    }
    if (eval_cmd->parsed()) {
      return run_eval(eval_pred, eval_gold, eval_baseline, eval_replicates,
                      eval_seed, eval_alpha, eval_exhaustive, eval_jobs,
                      eval_json, eval_table, eval_confusion, eval_metadata);
    }
    if (rp_cmd->parsed()) {
      return run_radprompt(rp_input, rp_rules, rp_backend, rp_fixtures,
                           rp_base_url, rp_model, rp_api_key_env, rp_temperature,
                           rp_max_tokens, rp_timeout, rp_retries,
                           rp_transport_retries, rp_rpm, rp_concurrency,
                           rp_induced, rp_transcripts, rp_first, rp_final,
                           rp_metadata);
    }
    if (validate_cmd->parsed()) return run_rules_validate(validate_path);
    if (export_cmd->parsed()) {
      if (export_path.empty()) {
        std::cout << rules::default_rules_text();
      } else {
        write_file(export_path, rules::default_rules_text());
      }
      return 0;
    }
  } catch (const kg::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
