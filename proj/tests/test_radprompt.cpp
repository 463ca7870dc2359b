#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "radpert/kg_model.hpp"
#include "radpert/labeler.hpp"
#include "radpert/radprompt.hpp"
#include "radpert/rng.hpp"
#include "radpert/rule_dsl.hpp"

using namespace radpert;
using prompt::Hint;
using prompt::MockBackend;
using prompt::PromptError;

namespace {

std::string answer_block(const ClassVector& labels) {
  return prompt::render_answer(labels);
}

ClassVector with(Pathology p, UncertaintyClass c, ClassVector base = all_null()) {
  base[pathology_index(p)] = c;
  return base;
}

const std::string kCardiomegalyDoc = R"({
  "text": "There is cardiomegaly .",
  "entities": {
    "1": {"tokens": "cardiomegaly", "label": "OBS-DP", "start_ix": 2,
          "end_ix": 2, "relations": []}
  }
})";

}  // namespace

TEST_SUITE("radprompt") {

TEST_CASE("first turn prompt carries the fixed scaffold verbatim") {
  const auto p = prompt::build_first_turn_prompt("Report body here .");
  CHECK(p.find("Please accurately classify radiology reports for the presence "
               "or absence of findings.") == 0);
  CHECK(p.find("Enlarged Cardiomediastinum, Cardiomegaly, Lung Opacity, "
               "Lung Lesion, Edema, Consolidation, Pneumonia, Atelectasis, "
               "Pneumothorax, Pleural Effusion, Pleural Other, Fracture, "
               "Support Devices.") != std::string::npos);
  CHECK(p.find("Structure your answer like the template I provided to you "
               "delimited by triple backticks and return this template and "
               "nothing else.") != std::string::npos);
  CHECK(p.find("ALWAYS RETURN THE FULL TEMPLATE:") != std::string::npos);
  CHECK(p.find("{\"Enlarged Cardiomediastinum\": [ANSWER],") != std::string::npos);
  CHECK(p.find("\"Support Devices\": [ANSWER]}") != std::string::npos);
  CHECK(p.find("If the existence of a finding is mentioned, answer \"Yes\".")
        != std::string::npos);
  CHECK(p.find("If a finding is mentioned as not existing, answer \"No\".")
        != std::string::npos);
  CHECK(p.find("If it cannot be determined if the patient has the findings, "
               "answer \"Maybe\".") != std::string::npos);
  CHECK(p.find("If a finding is not mentioned in the report, answer "
               "\"Undefined\".") != std::string::npos);
  CHECK(p.find("Important steps to consider:") != std::string::npos);
  CHECK(p.find("<START OF REPORT>\nReport body here .\n<END OF REPORT>")
        != std::string::npos);
  const std::string tail = "<ANSWER:>";
  CHECK(p.substr(p.size() - tail.size()) == tail);
}

TEST_CASE("answers round-trip through render and parse") {
  SplitMix64 rng(123);
  const UncertaintyClass classes[] = {
      UncertaintyClass::Null, UncertaintyClass::Negative,
      UncertaintyClass::Uncertain, UncertaintyClass::Positive};
  for (int trial = 0; trial < 1000; ++trial) {
    ClassVector labels;
    for (auto& c : labels) c = classes[rng.next_below(4)];
    const auto parsed = prompt::parse_answer(answer_block(labels));
    CHECK(parsed.labels == labels);
    CHECK(parsed.warnings.empty());
  }
}

TEST_CASE("parse tolerates layout noise but not missing structure") {
  const auto base = with(Pathology::Edema, UncertaintyClass::Positive);
  auto block = answer_block(base);

  // values on their own lines
  std::string multiline = block;
  const auto pos = multiline.find(": \"Yes\"");
  REQUIRE(pos != std::string::npos);
  multiline.replace(pos, 2, ":\n    ");
  CHECK(prompt::parse_answer(multiline).labels == base);

  // bare braces without code fences
  std::string unfenced = block;
  unfenced.erase(std::remove(unfenced.begin(), unfenced.end(), '`'),
                 unfenced.end());
  CHECK(prompt::parse_answer("Sure! Here you go:\n" + unfenced).labels == base);

  // a missing pathology row degrades to Null with a warning
  std::string incomplete = block;
  const auto row = incomplete.find("\"Fracture\"");
  const auto row_end = incomplete.find('\n', row);
  incomplete.erase(row, row_end - row + 1);
  const auto parsed = prompt::parse_answer(incomplete);
  CHECK(parsed.labels[pathology_index(Pathology::Fracture)] ==
        UncertaintyClass::Null);
  REQUIRE(parsed.warnings.size() == 1);
  CHECK(parsed.warnings[0].find("Fracture") != std::string::npos);

  CHECK_THROWS_AS((void)prompt::parse_answer("no template at all"), PromptError);
  try {
    (void)prompt::parse_answer("no template at all");
  } catch (const PromptError& e) {
    CHECK(e.code() == PromptError::Code::NoTemplateFound);
  }

  std::string bad_word = block;
  const auto yes = bad_word.find("\"Yes\"");
  bad_word.replace(yes, 5, "\"Perhaps\"");
  try {
    (void)prompt::parse_answer(bad_word);
    FAIL("expected PromptError");
  } catch (const PromptError& e) {
    CHECK(e.code() == PromptError::Code::UnknownAnswerWord);
  }
}

TEST_CASE("hints partition the pathology list") {
  SplitMix64 rng(77);
  const UncertaintyClass classes[] = {
      UncertaintyClass::Null, UncertaintyClass::Negative,
      UncertaintyClass::Uncertain, UncertaintyClass::Positive};
  for (int trial = 0; trial < 300; ++trial) {
    ClassVector llm, rad;
    for (std::size_t i = 0; i < kPathologyCount; ++i) {
      llm[i] = classes[rng.next_below(4)];
      rad[i] = classes[rng.next_below(4)];
    }
    label::LabelRecord rec;
    rec.labels = rad;
    for (std::size_t i = 0; i < kPathologyCount; ++i) {
      if (rad[i] != UncertaintyClass::Null) {
        rec.evidence[i] = label::Evidence{0, "Some sentence ."};
      }
    }
    const auto hints = prompt::diff_hints(llm, rec);
    std::array<int, kPathologyCount> seen{};
    for (const auto& h : hints) {
      CHECK_FALSE(h.pathologies.empty());
      for (Pathology p : h.pathologies) ++seen[pathology_index(p)];
    }
    for (std::size_t i = 0; i < kPathologyCount; ++i) CHECK(seen[i] == 1);
  }
}

TEST_CASE("hint kinds cover the four published templates") {
  // llm: Cardiomegaly Yes, Edema Yes, rest Undefined
  auto llm = with(Pathology::Cardiomegaly, UncertaintyClass::Positive);
  llm = with(Pathology::Edema, UncertaintyClass::Positive, llm);
  // rules: Cardiomegaly Yes, Fracture No, rest Null
  label::LabelRecord rec;
  rec.labels = with(Pathology::Cardiomegaly, UncertaintyClass::Positive);
  rec.labels = with(Pathology::Fracture, UncertaintyClass::Negative, rec.labels);
  rec.evidence[pathology_index(Pathology::Cardiomegaly)] =
      label::Evidence{0, "There is cardiomegaly ."};
  rec.evidence[pathology_index(Pathology::Fracture)] =
      label::Evidence{1, "No fracture ."};

  const auto hints = prompt::diff_hints(llm, rec);
  REQUIRE(hints.size() == 4);
  CHECK(hints[0].kind == Hint::Kind::Agree);
  CHECK(hints[0].pathologies ==
        std::vector<Pathology>{Pathology::Cardiomegaly});
  CHECK(prompt::render_hint(hints[0]) ==
        "The tool agrees that the overall report should be classified as "
        "\"Yes\" for Cardiomegaly.");

  CHECK(hints[1].kind == Hint::Kind::NoMentionGroup);
  CHECK(hints[1].pathologies.size() == 10);
  const auto grouped = prompt::render_hint(hints[1]);
  CHECK(grouped.find("In agreement with your previous answer, the tool "
                     "detected no mentions of ") == 0);
  CHECK(grouped.find("Enlarged Cardiomediastinum, Lung Opacity") !=
        std::string::npos);

  CHECK(hints[2].kind == Hint::Kind::UndefinedSuggestion);
  CHECK(prompt::render_hint(hints[2]) ==
        "The tool did not detect any explicit mentions for Edema and, thus, "
        "its suggested output is \"Undefined\" for Edema.");

  CHECK(hints[3].kind == Hint::Kind::DisagreeWithEvidence);
  CHECK(prompt::render_hint(hints[3]) ==
        "The tool considers Fracture as \"No\" because of the sentence "
        "\"No fracture .\". However, you previously classified the overall "
        "report as \"Undefined\" for Fracture.");
}

TEST_CASE("disagreement without stored evidence is an error") {
  label::LabelRecord rec;
  rec.labels = with(Pathology::Fracture, UncertaintyClass::Negative);
  CHECK_THROWS_AS((void)prompt::diff_hints(all_null(), rec), PromptError);
}

TEST_CASE("second turn prompt numbers the hints") {
  Hint agree;
  agree.kind = Hint::Kind::Agree;
  agree.pathologies = {Pathology::Cardiomegaly};
  agree.answer_word = "Yes";
  const auto p = prompt::build_second_turn_prompt({agree});
  CHECK(p.find("I am using a rule-based expert model to verify your answer. "
               "Here are some insights. However, those suggestions may be "
               "wrong. Please give me your new answer after either accepting "
               "or rejecting some or all of these suggestions:") == 0);
  CHECK(p.find("1. The tool agrees") != std::string::npos);
  CHECK(p.find("Please use the same template for your revised answer:") !=
        std::string::npos);
  CHECK(p.find("[ANSWER]") != std::string::npos);
}

TEST_CASE("mock backend replays fixtures by report, turn, and attempt") {
  const std::string fixture = R"({
    "r": {"1": ["first-a", "first-b"], "2": ["second"]}
  })";
  auto mock = MockBackend::from_json(fixture);
  prompt::BackendParams params;
  params.report_id = "r";
  params.turn = 1;
  params.attempt = 0;
  CHECK(mock.send({}, params) == "first-a");
  params.attempt = 1;
  CHECK(mock.send({}, params) == "first-b");
  params.attempt = 5;  // past the end replays the last entry
  CHECK(mock.send({}, params) == "first-b");
  params.turn = 2;
  params.attempt = 0;
  CHECK(mock.send({}, params) == "second");

  params.report_id = "missing";
  try {
    (void)mock.send({}, params);
    FAIL("expected PromptError");
  } catch (const PromptError& e) {
    CHECK(e.code() == PromptError::Code::BackendError);
  }

  CHECK_THROWS_AS((void)MockBackend::from_json("[1, 2]"), PromptError);
}

TEST_CASE("two turn run produces a four message transcript") {
  const auto g = kg::parse_document(kCardiomegalyDoc);
  const auto yes = answer_block(
      with(Pathology::Cardiomegaly, UncertaintyClass::Positive));
  auto mock = MockBackend::from_json(
      R"({"doc-0": {"1": [)" + nlohmann::json(yes).dump() +
      R"(], "2": [)" + nlohmann::json(yes).dump() + "]}}");
  const auto t = prompt::run_radprompt(g, rules::default_rules(), mock);
  CHECK(t.report_id == "doc-0");
  REQUIRE(t.messages.size() == 4);
  CHECK(t.messages[0].role == prompt::Role::User);
  CHECK(t.messages[1].role == prompt::Role::Assistant);
  CHECK(t.retries_used == 0);
  CHECK(t.first_labels[pathology_index(Pathology::Cardiomegaly)] ==
        UncertaintyClass::Positive);
  CHECK(t.final_labels[pathology_index(Pathology::Cardiomegaly)] ==
        UncertaintyClass::Positive);
  REQUIRE_FALSE(t.hints.empty());
  CHECK(t.hints[0].kind == Hint::Kind::Agree);
}

TEST_CASE("a malformed first answer consumes exactly one retry") {
  const auto g = kg::parse_document(kCardiomegalyDoc);
  const auto yes = answer_block(
      with(Pathology::Cardiomegaly, UncertaintyClass::Positive));
  auto mock = MockBackend::from_json(
      R"({"doc-0": {"1": ["garbage", )" + nlohmann::json(yes).dump() +
      R"(], "2": [)" + nlohmann::json(yes).dump() + "]}}");
  const auto t = prompt::run_radprompt(g, rules::default_rules(), mock);
  CHECK(t.retries_used == 1);
  REQUIRE(t.messages.size() == 6);
  CHECK(t.messages[2].text.find("did not follow the template") !=
        std::string::npos);
  CHECK(t.final_labels[pathology_index(Pathology::Cardiomegaly)] ==
        UncertaintyClass::Positive);
}

TEST_CASE("persistently malformed answers exhaust the retry budget") {
  const auto g = kg::parse_document(kCardiomegalyDoc);
  auto mock = MockBackend::from_json(
      R"({"doc-0": {"1": ["garbage"], "2": ["garbage"]}})");
  try {
    (void)prompt::run_radprompt(g, rules::default_rules(), mock);
    FAIL("expected PromptError");
  } catch (const PromptError& e) {
    CHECK(e.code() == PromptError::Code::UnparseableAfterRetries);
  }
}

TEST_CASE("transcript json line is single line with stable keys") {
  const auto g = kg::parse_document(kCardiomegalyDoc);
  const auto yes = answer_block(
      with(Pathology::Cardiomegaly, UncertaintyClass::Positive));
  auto mock = MockBackend::from_json(
      R"({"doc-0": {"1": [)" + nlohmann::json(yes).dump() +
      R"(], "2": [)" + nlohmann::json(yes).dump() + "]}}");
  const auto t = prompt::run_radprompt(g, rules::default_rules(), mock);
  const auto line = prompt::transcript_to_json_line(t);
  CHECK(line.rfind("{\"report_id\":", 0) == 0);
  CHECK(line.back() == '\n');
  CHECK(std::count(line.begin(), line.end(), '\n') == 1);
  const auto parsed = nlohmann::json::parse(line);
  CHECK(parsed["final_labels"]["Cardiomegaly"] == "Positive");
  CHECK(parsed["messages"].size() == 4);
}

}  // TEST_SUITE
