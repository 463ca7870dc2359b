#include "radpert/radprompt.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "radpert/util.hpp"
#include <json.hpp>

namespace radpert::prompt {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string template_pathology_list() {
  std::vector<std::string> names;
  for (Pathology p : template_order()) names.emplace_back(pathology_name(p));
  return join(names, ", ");
}

std::string template_skeleton() {
  std::string out = "```\n{";
  const auto order = template_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += "\n";
    out += '"';
    out += pathology_name(order[i]);
    out += "\": [ANSWER]";
    out += i + 1 < order.size() ? "," : "}";
  }
  out += "\n```";
  return out;
}

}  // namespace

std::string build_first_turn_prompt(const std::string& report_text) {
  std::string out;
  out += "Please accurately classify radiology reports for the presence or "
         "absence of findings. For each report, you will classify for the "
         "presence or absence of the following findings: ";
  out += template_pathology_list();
  out += ".\n\n";
  out += "Structure your answer like the template I provided to you delimited "
         "by triple backticks and return this template and nothing else.\n\n";
  out += "ALWAYS RETURN THE FULL TEMPLATE:\n\n";
  out += template_skeleton();
  out += "\n\n";
  out += "If the existence of a finding is mentioned, answer \"Yes\".\n";
  out += "If a finding is mentioned as not existing, answer \"No\".\n";
  out += "If it cannot be determined if the patient has the findings, answer "
         "\"Maybe\".\n";
  out += "If a finding is not mentioned in the report, answer \"Undefined\".\n\n";
  out += "Important steps to consider:\n";
  out += "1. Read the radiology report and identify any mentions of ";
  out += template_pathology_list();
  out += ".\n";
  out += "2. For every mention, determine if it is a positive, a negative, or "
         "an uncertain one.\n";
  out += "3. If a finding is not mentioned in the report, answer \"Undefined\".\n";
  out += "4. For every finding, answer \"Yes\" if it is mentioned as existing "
         "(positive), \"Maybe\" if it is mentioned as uncertain, and \"No\" if "
         "it is mentioned as not existing (negative).\n\n";
  out += "Classify the following radiology report according to the template. "
         "Always output the full template, even if a finding is not "
         "mentioned.\n\n";
  out += "<START OF REPORT>\n";
  out += report_text;
  out += "\n<END OF REPORT>\n\n";
  out += "<ANSWER:>";
  return out;
}

std::string_view hint_kind_string(Hint::Kind kind) {
  switch (kind) {
    case Hint::Kind::Agree: return "agree";
    case Hint::Kind::NoMentionGroup: return "no_mention_group";
    case Hint::Kind::UndefinedSuggestion: return "undefined_suggestion";
    case Hint::Kind::DisagreeWithEvidence: return "disagree_with_evidence";
  }
  return "agree";
}

std::string render_hint(const Hint& hint) {
  switch (hint.kind) {
    case Hint::Kind::Agree: {
      return "The tool agrees that the overall report should be classified as "
             "\"" + *hint.answer_word + "\" for " +
             std::string(pathology_name(hint.pathologies.at(0))) + ".";
    }
    case Hint::Kind::NoMentionGroup: {
      std::vector<std::string> names;
      for (Pathology p : hint.pathologies) names.emplace_back(pathology_name(p));
      return "In agreement with your previous answer, the tool detected no "
             "mentions of " + join(names, ", ") + ".";
    }
    case Hint::Kind::UndefinedSuggestion: {
      const std::string name(pathology_name(hint.pathologies.at(0)));
      return "The tool did not detect any explicit mentions for " + name +
             " and, thus, its suggested output is \"Undefined\" for " + name + ".";
    }
    case Hint::Kind::DisagreeWithEvidence: {
      const std::string name(pathology_name(hint.pathologies.at(0)));
      return "The tool considers " + name + " as \"" + *hint.answer_word +
             "\" because of the sentence \"" + *hint.sentence +
             "\". However, you previously classified the overall report as \"" +
             *hint.llm_previous + "\" for " + name + ".";
    }
  }
  return "";
}

std::string build_second_turn_prompt(const std::vector<Hint>& hints) {
  std::string out;
  out += "I am using a rule-based expert model to verify your answer. Here are "
         "some insights. However, those suggestions may be wrong. Please give "
         "me your new answer after either accepting or rejecting some or all "
         "of these suggestions:\n\n";
  for (std::size_t i = 0; i < hints.size(); ++i) {
    out += std::to_string(i + 1) + ". " + render_hint(hints[i]) + "\n";
  }
  out += "\nPlease use the same template for your revised answer:\n\n";
  out += template_skeleton();
  return out;
}

std::string render_answer(const ClassVector& labels) {
  std::string out = "```\n{";
  const auto order = template_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += "\n";
    out += '"';
    out += pathology_name(order[i]);
    out += "\": \"";
    out += class_answer_word(labels[pathology_index(order[i])]);
    out += '"';
    out += i + 1 < order.size() ? "," : "}";
  }
  out += "\n```";
  return out;
}

namespace {

std::optional<std::string> fenced_block(const std::string& text) {
  const std::size_t open = text.find("```");
  if (open == std::string::npos) return std::nullopt;
  const std::size_t start = open + 3;
  const std::size_t close = text.find("```", start);
  if (close == std::string::npos) return std::nullopt;
  return text.substr(start, close - start);
}

std::optional<std::string> brace_block(const std::string& text) {
  const std::size_t open = text.find('{');
  if (open == std::string::npos) return std::nullopt;
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) {
      return text.substr(open, i - open + 1);
    }
  }
  return std::nullopt;
}

}  // namespace

ParsedAnswer parse_answer(const std::string& text) {
  auto block = fenced_block(text);
  if (!block) block = brace_block(text);
  if (!block) {
    throw PromptError(PromptError::Code::NoTemplateFound,
                      "no fenced or brace-balanced answer block found");
  }
  const std::string lowered = to_lower(*block);

  ParsedAnswer out;
  for (Pathology p : template_order()) {
    const std::string needle = to_lower(std::string(pathology_name(p)));
    const std::size_t at = lowered.find(needle);
    if (at == std::string::npos) {
      out.warnings.push_back("answer omits " + std::string(pathology_name(p)) +
                             "; defaulting to Null");
      continue;
    }
    std::size_t i = at + needle.size();
    while (i < block->size() &&
           ((*block)[i] == '"' || (*block)[i] == '\'' ||
            std::isspace(static_cast<unsigned char>((*block)[i])))) {
      ++i;
    }
    if (i < block->size() && (*block)[i] == ':') ++i;
    while (i < block->size() &&
           !std::isalpha(static_cast<unsigned char>((*block)[i]))) {
      if ((*block)[i] == ',' || (*block)[i] == '}') break;
      ++i;
    }
    std::string word;
    while (i < block->size() &&
           std::isalpha(static_cast<unsigned char>((*block)[i]))) {
      word += (*block)[i++];
    }
    const auto cls = class_from_answer_word(word);
    if (!cls) {
      throw PromptError(PromptError::Code::UnknownAnswerWord,
                        "unrecognized answer word '" + word + "' for " +
                            std::string(pathology_name(p)));
    }
    out.labels[pathology_index(p)] = *cls;
  }
  return out;
}

std::vector<Hint> diff_hints(const ClassVector& llm,
                             const label::LabelRecord& rad) {
  std::vector<Hint> agrees;
  std::vector<Pathology> null_agreements;
  std::vector<Hint> undefined_suggestions;
  std::vector<Hint> disagreements;

  for (Pathology p : template_order()) {
    const std::size_t i = pathology_index(p);
    const UncertaintyClass l = llm[i];
    const UncertaintyClass r = rad.labels[i];

    if (l == r) {
      if (r == UncertaintyClass::Null) {
        null_agreements.push_back(p);
      } else {
        Hint h;
        h.kind = Hint::Kind::Agree;
        h.pathologies = {p};
        h.answer_word = std::string(class_answer_word(r));
        agrees.push_back(std::move(h));
      }
      continue;
    }
    if (r == UncertaintyClass::Null) {
      Hint h;
      h.kind = Hint::Kind::UndefinedSuggestion;
      h.pathologies = {p};
      undefined_suggestions.push_back(std::move(h));
      continue;
    }
    const auto& evidence = rad.evidence[i];
    if (!evidence) {
      throw PromptError(PromptError::Code::MissingEvidence,
                        "non-Null label for " + std::string(pathology_name(p)) +
                            " lacks evidence");
    }
    Hint h;
    h.kind = Hint::Kind::DisagreeWithEvidence;
    h.pathologies = {p};
    h.answer_word = std::string(class_answer_word(r));
    h.sentence = evidence->sentence_text;
    h.llm_previous = std::string(class_answer_word(l));
    disagreements.push_back(std::move(h));
  }

  std::vector<Hint> out = std::move(agrees);
  if (!null_agreements.empty()) {
    Hint h;
    h.kind = Hint::Kind::NoMentionGroup;
    h.pathologies = std::move(null_agreements);
    out.push_back(std::move(h));
  }
  for (auto& h : undefined_suggestions) out.push_back(std::move(h));
  for (auto& h : disagreements) out.push_back(std::move(h));
  return out;
}

MockBackend MockBackend::from_json(const std::string& json_text) {
  MockBackend backend;
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw PromptError(PromptError::Code::BadFixture,
                      std::string("fixture is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw PromptError(PromptError::Code::BadFixture,
                      "fixture top level must map report ids to turns");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto& slot = backend.answers_[it.key()];
    for (const auto& turn : {"1", "2"}) {
      if (!it.value().contains(turn)) continue;
      const auto& arr = it.value()[turn];
      if (!arr.is_array()) {
        throw PromptError(PromptError::Code::BadFixture,
                          "fixture turn entries must be arrays of answers");
      }
      for (const auto& answer : arr) {
        slot[turn[0] - '1'].push_back(answer.get<std::string>());
      }
    }
  }
  return backend;
}

MockBackend MockBackend::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PromptError(PromptError::Code::BadFixture,
                      "cannot open fixture file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string MockBackend::send(const std::vector<ChatMessage>&,
                              const BackendParams& params) {
  auto it = answers_.find(params.report_id);
  if (it == answers_.end()) {
    throw PromptError(PromptError::Code::BackendError,
                      "mock has no fixture for report '" + params.report_id + "'");
  }
  if (params.turn < 1 || params.turn > 2) {
    throw PromptError(PromptError::Code::BackendError,
                      "mock supports turns 1 and 2 only");
  }
  const auto& attempts = it->second[static_cast<std::size_t>(params.turn - 1)];
  if (attempts.empty()) {
    throw PromptError(PromptError::Code::BackendError,
                      "mock fixture for report '" + params.report_id +
                          "' has no turn-" + std::to_string(params.turn) +
                          " answers");
  }
  const std::size_t i =
      std::min(static_cast<std::size_t>(params.attempt), attempts.size() - 1);
  return attempts[i];
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

void HttpBackend::throttle() {
  if (config_.requests_per_minute <= 0) return;
  const double interval = 60.0 / config_.requests_per_minute;
  double wait = 0.0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    const double now =
        std::chrono::duration<double>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count();
    next_slot_ = std::max(next_slot_, now);
    wait = next_slot_ - now;
    next_slot_ += interval;
  }
  if (wait > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
}

}  // namespace radpert::prompt

// httplib pulled in here only; it is heavy and nothing else needs it.
#include <httplib.h>

namespace radpert::prompt {

std::string HttpBackend::send(const std::vector<ChatMessage>& messages,
                              const BackendParams& params) {
  ordered_json body;
  body["model"] = params.model;
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", m.role == Role::User ? "user" : "assistant"},
                    {"content", m.text}});
  }
  body["messages"] = std::move(msgs);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(500L << (attempt - 1)));
    }
    throttle();

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(params.timeout_seconds);
    client.set_read_timeout(params.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      if (res->status >= 500 || res->status == 429) continue;
      break;
    }
    try {
      const auto j = ordered_json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string("unexpected response shape: ") + e.what();
      break;
    }
  }
  throw PromptError(PromptError::Code::BackendError, last_error);
}

namespace {

constexpr char kCorrectiveMessage[] =
    "Your previous answer did not follow the template. Please answer again "
    "using exactly the template delimited by triple backticks and nothing "
    "else.";

}  // namespace

Transcript run_radprompt(const kg::ReportGraph& graph,
                         const rules::RuleSet& rules, LlmBackend& backend,
                         const RunParams& params,
                         const label::LabelOptions& label_options) {
  Transcript t;
  t.report_id = graph.report_id();

  BackendParams bp = params.backend;
  bp.report_id = t.report_id;

  auto ask = [&](int turn) -> ParsedAnswer {
    for (int attempt = 0;; ++attempt) {
      bp.turn = turn;
      bp.attempt = attempt;
      const std::string reply = backend.send(t.messages, bp);
      t.messages.push_back({Role::Assistant, reply});
      try {
        return parse_answer(reply);
      } catch (const PromptError& e) {
        if (e.code() != PromptError::Code::NoTemplateFound &&
            e.code() != PromptError::Code::UnknownAnswerWord) {
          throw;
        }
        if (attempt >= 1 || t.retries_used >= params.max_total_retries) {
          throw PromptError(PromptError::Code::UnparseableAfterRetries,
                            "turn " + std::to_string(turn) + " for report '" +
                                t.report_id + "' unparseable after retry: " +
                                e.what());
        }
        ++t.retries_used;
        t.messages.push_back({Role::User, kCorrectiveMessage});
      }
    }
  };

  t.messages.push_back({Role::User, build_first_turn_prompt(graph.raw_text())});
  ParsedAnswer first = ask(1);
  t.first_labels = first.labels;
  for (auto& w : first.warnings) t.warnings.push_back("turn 1: " + w);

  const label::LabelRecord rad = label_report(graph, rules, label_options);
  t.hints = diff_hints(t.first_labels, rad);

  t.messages.push_back({Role::User, build_second_turn_prompt(t.hints)});
  ParsedAnswer revised = ask(2);
  t.final_labels = revised.labels;
  for (auto& w : revised.warnings) t.warnings.push_back("turn 2: " + w);

  return t;
}

std::string transcript_to_json_line(const Transcript& transcript) {
  ordered_json j;
  j["report_id"] = transcript.report_id;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : transcript.messages) {
    msgs.push_back({{"role", m.role == Role::User ? "user" : "assistant"},
                    {"text", m.text}});
  }
  j["messages"] = std::move(msgs);

  auto labels_json = [](const ClassVector& labels) {
    ordered_json out = ordered_json::object();
    for (Pathology p : all_pathologies()) {
      out[std::string(pathology_name(p))] =
          std::string(class_name(labels[pathology_index(p)]));
    }
    return out;
  };
  j["first_labels"] = labels_json(transcript.first_labels);

  ordered_json hints = ordered_json::array();
  for (const auto& h : transcript.hints) {
    ordered_json hj;
    hj["kind"] = std::string(hint_kind_string(h.kind));
    ordered_json names = ordered_json::array();
    for (Pathology p : h.pathologies) {
      names.push_back(std::string(pathology_name(p)));
    }
    hj["pathologies"] = std::move(names);
    if (h.answer_word) hj["answer_word"] = *h.answer_word;
    if (h.sentence) hj["sentence"] = *h.sentence;
    if (h.llm_previous) hj["llm_previous"] = *h.llm_previous;
    hj["text"] = render_hint(h);
    hints.push_back(std::move(hj));
  }
  j["hints"] = std::move(hints);
  j["final_labels"] = labels_json(transcript.final_labels);
  j["retries_used"] = transcript.retries_used;
  j["warnings"] = transcript.warnings;
  return j.dump() + "\n";
}

}  // namespace radpert::prompt
