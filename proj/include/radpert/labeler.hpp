#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radpert/kg_model.hpp"
#include "radpert/labels.hpp"
#include "radpert/matcher.hpp"
#include "radpert/rule_dsl.hpp"

namespace radpert::label {

struct Mention {
  Pathology pathology = Pathology::Atelectasis;
  std::string rule_id;  // mention rule that produced it
  match::Match match;
  std::string anchor_entity;
  UncertaintyClass initial_class = UncertaintyClass::Positive;
  std::vector<std::string> applied_rules;  // modifier rules that fired
  UncertaintyClass final_class = UncertaintyClass::Positive;
  int sentence_index = 0;
};

struct Evidence {
  int sentence_index = 0;
  std::string sentence_text;
};

struct LabelRecord {
  std::string report_id;
  ClassVector labels = all_null();
  std::array<std::optional<Evidence>, kPathologyCount> evidence;
};

struct LabelOptions {
  bool induced = false;
};

class LabelError : public std::runtime_error {
 public:
  enum class Code { ContainsNull, BadCsv };

  LabelError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

UncertaintyClass flip(UncertaintyClass c);

// Stage 1 + 2: mention extraction with per-anchor dedup (earliest-declared
// rule wins) and initial classification. final_class is a placeholder equal
// to initial_class until apply_modifiers runs.
std::vector<Mention> extract_mentions(const kg::ReportGraph& graph,
                                      const rules::RuleSet& rules,
                                      Pathology pathology,
                                      const LabelOptions& options = {});

UncertaintyClass initial_class_of(const rules::RuleGraph& rule,
                                  const match::Match& m,
                                  const kg::ReportGraph& graph);

// Stage 3: uncertainty rules first (and exclusively); otherwise one flip if
// any negation rule fires.
Mention apply_modifiers(Mention mention, const kg::ReportGraph& graph,
                        const rules::RuleSet& rules,
                        const LabelOptions& options = {});

// Stage 4: empty -> Null; otherwise max under Positive > Uncertain > Negative.
UncertaintyClass aggregate(const std::vector<UncertaintyClass>& classes);

LabelRecord label_report(const kg::ReportGraph& graph,
                         const rules::RuleSet& rules,
                         const LabelOptions& options = {});

struct CorpusResult {
  struct Failure {
    std::string report_id;
    std::string error;
  };
  std::vector<LabelRecord> records;  // successes, input order
  std::vector<Failure> failures;     // input order
};

CorpusResult label_corpus(const std::vector<kg::DocResult>& docs,
                          const rules::RuleSet& rules,
                          const LabelOptions& options = {}, int jobs = 1);

// CSV convention: header `report_id,<13 pathology names in CSV order>`;
// blank = Null, 1.0 = Positive, 0.0 = Negative, -1.0 = Uncertain.
std::string labels_to_csv(const std::vector<LabelRecord>& records);
std::vector<LabelRecord> labels_from_csv(const std::string& text);

// Sidecar: report_id <TAB> pathology <TAB> sentence_index <TAB> sentence.
std::string evidence_to_tsv(const std::vector<LabelRecord>& records);

}  // namespace radpert::label
