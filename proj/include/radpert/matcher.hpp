#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "radpert/kg_model.hpp"
#include "radpert/rule_dsl.hpp"

namespace radpert::match {

// Rule-node name -> entity id. std::map keeps the assignment ordered by node
// name, which makes lexicographic comparison well defined.
struct Match {
  std::map<std::string, std::string> assignment;

  bool operator==(const Match&) const = default;
  bool operator<(const Match& other) const { return assignment < other.assignment; }
};

struct MatchOptions {
  // Monomorphism by default: relations between matched entities beyond the
  // rule's edges are permitted. Induced mode rejects any such relation unless
  // a rule edge licenses it (an ANY edge licenses all three kinds).
  bool induced = false;
};

class MatchError : public std::runtime_error {
 public:
  enum class Code { RuleTooLarge };

  MatchError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

bool match_text(const rules::TextPattern& pattern, const kg::Entity& entity);
bool node_satisfied(const rules::NodeConstraint& node, const kg::Entity& entity);

// Backtracking search, most-constrained node first. Deterministic output:
// sorted by the anchor entity's start token, then by assignment.
std::vector<Match> find_matches(const rules::RuleGraph& rule,
                                const kg::ReportGraph& graph,
                                const MatchOptions& options = {});

// Exhaustive enumeration of injective assignments; the testing oracle.
// Shares only the output ordering with find_matches.
std::vector<Match> brute_force_matches(const rules::RuleGraph& rule,
                                       const kg::ReportGraph& graph,
                                       const MatchOptions& options = {});

// Independent post-hoc check of the Match invariants.
bool verify_match(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                  const Match& m, const MatchOptions& options = {});

}  // namespace radpert::match
