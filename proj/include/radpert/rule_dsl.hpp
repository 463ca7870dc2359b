#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radpert/labels.hpp"

namespace radpert::rules {

// Token pattern with optional leading/trailing ".*" wildcards; the only
// metacharacters the rule format supports.
struct TextPattern {
  std::string literal;  // stored lowercase
  bool allow_prefix = false;
  bool allow_suffix = false;
  bool match_any = false;

  static TextPattern parse(std::string_view spec);
  std::string spec() const;
  bool matches_token(std::string_view token) const;

  bool operator==(const TextPattern&) const = default;
};

enum class EntityClass { Anat, Obs, Any };
enum class ObsAttribute { DP, DA, U };

std::string_view entity_class_string(EntityClass c);
std::string_view attribute_string(ObsAttribute a);

struct NodeConstraint {
  std::string name;
  EntityClass entity_class = EntityClass::Any;
  std::optional<ObsAttribute> attribute;  // OBS nodes only
  TextPattern pattern;
  bool is_anchor = false;

  bool operator==(const NodeConstraint&) const = default;
};

enum class EdgeKind { SuggestiveOf, LocatedAt, Modify, Any };

std::string_view edge_kind_string(EdgeKind k);

struct RuleEdge {
  std::string from;
  std::string to;
  EdgeKind kind = EdgeKind::Any;

  bool operator==(const RuleEdge&) const = default;
};

enum class RuleKind { Mention, Negation, Uncertainty };

std::string_view rule_kind_string(RuleKind k);

inline constexpr int kMaxRuleNodes = 4;

struct RuleGraph {
  std::string rule_id;
  Pathology pathology = Pathology::Atelectasis;
  RuleKind kind = RuleKind::Mention;
  std::vector<NodeConstraint> nodes;
  std::vector<RuleEdge> edges;

  // First node flagged as anchor; nullptr if none (invalid rule).
  const NodeConstraint* anchor() const;
  int node_index(std::string_view name) const;  // -1 if absent

  bool operator==(const RuleGraph&) const = default;
};

struct RuleSet {
  struct Bucket {
    std::vector<RuleGraph> mention;
    std::vector<RuleGraph> negation;
    std::vector<RuleGraph> uncertainty;

    bool operator==(const Bucket&) const = default;
  };

  std::array<Bucket, kPathologyCount> buckets;

  const Bucket& bucket(Pathology p) const {
    return buckets[pathology_index(p)];
  }
  Bucket& bucket(Pathology p) { return buckets[pathology_index(p)]; }
  std::size_t size() const;

  bool operator==(const RuleSet&) const = default;
};

enum class RuleIssue {
  SyntaxError,
  UnknownPathology,
  UnknownRelationKind,
  DisconnectedRule,
  MissingAnchor,
  MultipleAnchors,
  DuplicateRuleId,
  AttributeOnAnatomy,
  TooManyNodes,
};

std::string_view rule_issue_string(RuleIssue issue);

class RuleParseError : public std::runtime_error {
 public:
  RuleParseError(RuleIssue issue, int line, int column, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ":" +
                           std::to_string(column) + ": " + msg),
        issue_(issue),
        line_(line),
        column_(column) {}

  RuleIssue issue() const { return issue_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  RuleIssue issue_;
  int line_;
  int column_;
};

struct Diagnostic {
  RuleIssue issue;
  std::string rule_id;
  std::string message;
};

// Strict parse: throws RuleParseError; every returned rule satisfies the
// RuleGraph invariants by construction.
RuleSet parse_rule_file(const std::string& text);

std::string serialize_rules(const RuleSet& rules);

// Structural validation for programmatically built rule sets.
std::vector<Diagnostic> validate_rules(const RuleSet& rules);

const RuleSet& default_rules();
const std::string& default_rules_text();

}  // namespace radpert::rules
