#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radpert/kg_model.hpp"
#include "radpert/labeler.hpp"
#include "radpert/labels.hpp"
#include "radpert/rule_dsl.hpp"

namespace radpert::prompt {

enum class Role { User, Assistant };

struct ChatMessage {
  Role role = Role::User;
  std::string text;
};

struct BackendParams {
  std::string model = "offline";
  double temperature = 0.0;
  int max_tokens = 1024;
  int timeout_seconds = 60;
  // Routing metadata stamped by the orchestrator; the HTTP backend ignores
  // it, the mock backend keys fixtures on it.
  std::string report_id;
  int turn = 1;
  int attempt = 0;
};

class PromptError : public std::runtime_error {
 public:
  enum class Code {
    NoTemplateFound,
    UnknownAnswerWord,
    MissingEvidence,
    BackendError,
    UnparseableAfterRetries,
    BadFixture,
  };

  PromptError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  // Full history every call; must tolerate concurrent calls.
  virtual std::string send(const std::vector<ChatMessage>& messages,
                           const BackendParams& params) = 0;
};

// Replays canned answers keyed by (report_id, turn, attempt). Fixture JSON:
//   { "<report_id>": { "1": ["answer", ...], "2": [...] } }
// An attempt index past the end of the list replays the last entry.
class MockBackend final : public LlmBackend {
 public:
  static MockBackend from_json(const std::string& json_text);
  static MockBackend from_file(const std::string& path);

  std::string send(const std::vector<ChatMessage>& messages,
                   const BackendParams& params) override;

 private:
  std::map<std::string, std::array<std::vector<std::string>, 2>> answers_;
};

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key;   // sent as a bearer token when non-empty
  int transport_retries = 2;
  int requests_per_minute = 0;  // 0 = unthrottled
};

// Chat-completions-style POST; plain HTTP transport.
class HttpBackend final : public LlmBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string send(const std::vector<ChatMessage>& messages,
                   const BackendParams& params) override;

 private:
  void throttle();

  HttpBackendConfig config_;
  std::mutex mu_;
  double next_slot_ = 0.0;  // monotonic seconds
};

struct Hint {
  enum class Kind { Agree, NoMentionGroup, UndefinedSuggestion, DisagreeWithEvidence };

  Kind kind = Kind::Agree;
  std::vector<Pathology> pathologies;
  std::optional<std::string> answer_word;
  std::optional<std::string> sentence;      // DisagreeWithEvidence only
  std::optional<std::string> llm_previous;  // DisagreeWithEvidence only
};

std::string_view hint_kind_string(Hint::Kind kind);

struct ParsedAnswer {
  ClassVector labels = all_null();
  std::vector<std::string> warnings;  // pathologies missing from the answer
};

struct Transcript {
  std::string report_id;
  std::vector<ChatMessage> messages;  // 4 + 2 per retry
  ClassVector first_labels = all_null();
  std::vector<Hint> hints;
  ClassVector final_labels = all_null();
  int retries_used = 0;
  std::vector<std::string> warnings;
};

std::string build_first_turn_prompt(const std::string& report_text);
std::string build_second_turn_prompt(const std::vector<Hint>& hints);

// Fills the answer template with the class words; inverse of parse_answer.
std::string render_answer(const ClassVector& labels);

// Reads the first fenced block (or, absent fences, the first brace-balanced
// block). Pathologies missing from the block degrade to Null with a warning.
ParsedAnswer parse_answer(const std::string& text);

// One hint per pathology across the list: agreements, a single no-mention
// group, Undefined suggestions, then disagreements with evidence.
std::vector<Hint> diff_hints(const ClassVector& llm, const label::LabelRecord& rad);

std::string render_hint(const Hint& hint);

struct RunParams {
  BackendParams backend;
  int max_total_retries = 2;  // at most one corrective re-ask per turn
};

Transcript run_radprompt(const kg::ReportGraph& graph,
                         const rules::RuleSet& rules, LlmBackend& backend,
                         const RunParams& params = {},
                         const label::LabelOptions& label_options = {});

// One JSON object per line; stable key order for golden comparisons.
std::string transcript_to_json_line(const Transcript& transcript);

}  // namespace radpert::prompt
