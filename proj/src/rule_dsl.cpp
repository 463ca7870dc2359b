#include "radpert/rule_dsl.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "radpert/util.hpp"

namespace radpert::rules {

TextPattern TextPattern::parse(std::string_view spec) {
  TextPattern p;
  std::string body(spec);
  if (body.size() >= 2 && body.substr(0, 2) == ".*") {
    p.allow_prefix = true;
    body.erase(0, 2);
  }
  if (body.size() >= 2 && body.substr(body.size() - 2) == ".*") {
    p.allow_suffix = true;
    body.erase(body.size() - 2);
  }
  p.literal = to_lower(body);
  if (p.literal.empty()) {
    p.match_any = true;
    p.allow_prefix = false;
    p.allow_suffix = false;
  }
  return p;
}

std::string TextPattern::spec() const {
  if (match_any) return ".*";
  std::string out;
  if (allow_prefix) out += ".*";
  out += literal;
  if (allow_suffix) out += ".*";
  return out;
}

bool TextPattern::matches_token(std::string_view token) const {
  if (match_any) return true;
  const std::string t = to_lower(token);
  if (allow_prefix && allow_suffix) return t.find(literal) != std::string::npos;
  if (allow_prefix) {
    return t.size() >= literal.size() &&
           t.compare(t.size() - literal.size(), literal.size(), literal) == 0;
  }
  if (allow_suffix) {
    return t.size() >= literal.size() &&
           t.compare(0, literal.size(), literal) == 0;
  }
  return t == literal;
}

std::string_view entity_class_string(EntityClass c) {
  switch (c) {
    case EntityClass::Anat: return "ANAT";
    case EntityClass::Obs: return "OBS";
    case EntityClass::Any: return "ANY";
  }
  return "ANY";
}

std::string_view attribute_string(ObsAttribute a) {
  switch (a) {
    case ObsAttribute::DP: return "DP";
    case ObsAttribute::DA: return "DA";
    case ObsAttribute::U: return "U";
  }
  return "DP";
}

std::string_view edge_kind_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::SuggestiveOf: return "suggestive_of";
    case EdgeKind::LocatedAt: return "located_at";
    case EdgeKind::Modify: return "modify";
    case EdgeKind::Any: return "any";
  }
  return "any";
}

std::string_view rule_kind_string(RuleKind k) {
  switch (k) {
    case RuleKind::Mention: return "mention";
    case RuleKind::Negation: return "negation";
    case RuleKind::Uncertainty: return "uncertainty";
  }
  return "mention";
}

std::string_view rule_issue_string(RuleIssue issue) {
  switch (issue) {
    case RuleIssue::SyntaxError: return "SyntaxError";
    case RuleIssue::UnknownPathology: return "UnknownPathology";
    case RuleIssue::UnknownRelationKind: return "UnknownRelationKind";
    case RuleIssue::DisconnectedRule: return "DisconnectedRule";
    case RuleIssue::MissingAnchor: return "MissingAnchor";
    case RuleIssue::MultipleAnchors: return "MultipleAnchors";
    case RuleIssue::DuplicateRuleId: return "DuplicateRuleId";
    case RuleIssue::AttributeOnAnatomy: return "AttributeOnAnatomy";
    case RuleIssue::TooManyNodes: return "TooManyNodes";
  }
  return "SyntaxError";
}

const NodeConstraint* RuleGraph::anchor() const {
  for (const auto& n : nodes) {
    if (n.is_anchor) return &n;
  }
  return nullptr;
}

int RuleGraph::node_index(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t RuleSet::size() const {
  std::size_t n = 0;
  for (const auto& b : buckets) {
    n += b.mention.size() + b.negation.size() + b.uncertainty.size();
  }
  return n;
}

namespace {

struct Line {
  int number = 0;
  std::vector<std::string> tokens;
  std::vector<int> columns;  // 1-based start column per token
};

// Splits a line on whitespace, keeping double-quoted runs as one token
// (quotes stripped, marked by a sentinel prefix '\x01').
Line lex_line(const std::string& raw, int number) {
  Line line;
  line.number = number;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= raw.size() || raw[i] == '#') break;
    const std::size_t start = i;
    std::string tok;
    if (raw[i] == '"') {
      ++i;
      while (i < raw.size() && raw[i] != '"') tok += raw[i++];
      if (i >= raw.size()) {
        throw RuleParseError(RuleIssue::SyntaxError, number,
                             static_cast<int>(start) + 1,
                             "unterminated quoted string");
      }
      ++i;
      tok.insert(tok.begin(), '\x01');
    } else {
      while (i < raw.size() && !std::isspace(static_cast<unsigned char>(raw[i])) &&
             raw[i] != '#') {
        tok += raw[i++];
      }
    }
    line.tokens.push_back(std::move(tok));
    line.columns.push_back(static_cast<int>(start) + 1);
  }
  return line;
}

bool was_quoted(const std::string& tok) { return !tok.empty() && tok[0] == '\x01'; }
std::string unquote(const std::string& tok) {
  return was_quoted(tok) ? tok.substr(1) : tok;
}

[[noreturn]] void fail(RuleIssue issue, const Line& line, std::size_t tok_index,
                       const std::string& msg) {
  const int col = tok_index < line.columns.size() ? line.columns[tok_index] : 1;
  throw RuleParseError(issue, line.number, col, msg);
}

NodeConstraint parse_node_line(const Line& line) {
  if (line.tokens.size() < 4 || line.tokens.size() > 5) {
    fail(RuleIssue::SyntaxError, line, 0,
         "expected: node <name> <ANAT|OBS|ANY>[:<DP|DA|U>] \"<pattern>\" [anchor]");
  }
  NodeConstraint node;
  node.name = unquote(line.tokens[1]);

  std::string cls = unquote(line.tokens[2]);
  std::optional<std::string> attr;
  if (auto colon = cls.find(':'); colon != std::string::npos) {
    attr = cls.substr(colon + 1);
    cls = cls.substr(0, colon);
  }
  if (cls == "ANAT") {
    node.entity_class = EntityClass::Anat;
  } else if (cls == "OBS") {
    node.entity_class = EntityClass::Obs;
  } else if (cls == "ANY") {
    node.entity_class = EntityClass::Any;
  } else {
    fail(RuleIssue::SyntaxError, line, 2, "unknown entity class '" + cls + "'");
  }
  if (attr) {
    if (node.entity_class != EntityClass::Obs) {
      fail(RuleIssue::AttributeOnAnatomy, line, 2,
           "attribute constraints apply to OBS nodes only");
    }
    if (*attr == "DP") {
      node.attribute = ObsAttribute::DP;
    } else if (*attr == "DA") {
      node.attribute = ObsAttribute::DA;
    } else if (*attr == "U") {
      node.attribute = ObsAttribute::U;
    } else {
      fail(RuleIssue::SyntaxError, line, 2, "unknown attribute '" + *attr + "'");
    }
  }
  if (!was_quoted(line.tokens[3])) {
    fail(RuleIssue::SyntaxError, line, 3, "pattern must be double-quoted");
  }
  node.pattern = TextPattern::parse(unquote(line.tokens[3]));
  if (line.tokens.size() == 5) {
    if (unquote(line.tokens[4]) != "anchor") {
      fail(RuleIssue::SyntaxError, line, 4, "expected 'anchor'");
    }
    node.is_anchor = true;
  }
  return node;
}

RuleEdge parse_edge_line(const Line& line, const RuleGraph& rule) {
  if (line.tokens.size() != 4) {
    fail(RuleIssue::SyntaxError, line, 0,
         "expected: edge <from> -<kind>-> <to>");
  }
  RuleEdge edge;
  edge.from = unquote(line.tokens[1]);
  edge.to = unquote(line.tokens[3]);
  const std::string arrow = unquote(line.tokens[2]);
  if (arrow.size() < 3 || arrow.front() != '-' ||
      arrow.compare(arrow.size() - 2, 2, "->") != 0) {
    fail(RuleIssue::SyntaxError, line, 2, "expected -<kind>-> arrow");
  }
  const std::string kind = arrow.substr(1, arrow.size() - 3);
  if (kind == "suggestive_of") {
    edge.kind = EdgeKind::SuggestiveOf;
  } else if (kind == "located_at") {
    edge.kind = EdgeKind::LocatedAt;
  } else if (kind == "modify") {
    edge.kind = EdgeKind::Modify;
  } else if (kind == "any") {
    edge.kind = EdgeKind::Any;
  } else {
    fail(RuleIssue::UnknownRelationKind, line, 2,
         "unknown relation kind '" + kind + "'");
  }
  if (rule.node_index(edge.from) < 0) {
    fail(RuleIssue::SyntaxError, line, 1,
         "edge references undeclared node '" + edge.from + "'");
  }
  if (rule.node_index(edge.to) < 0) {
    fail(RuleIssue::SyntaxError, line, 3,
         "edge references undeclared node '" + edge.to + "'");
  }
  if (edge.from == edge.to) {
    fail(RuleIssue::SyntaxError, line, 1, "edge endpoints must differ");
  }
  return edge;
}

bool weakly_connected(const RuleGraph& rule) {
  if (rule.nodes.size() <= 1) return true;
  std::vector<int> comp(rule.nodes.size());
  for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = static_cast<int>(i);
  auto root = [&](int x) {
    while (comp[x] != x) x = comp[x] = comp[comp[x]];
    return x;
  };
  for (const auto& e : rule.edges) {
    const int a = root(rule.node_index(e.from));
    const int b = root(rule.node_index(e.to));
    comp[a] = b;
  }
  const int r0 = root(0);
  for (std::size_t i = 1; i < comp.size(); ++i) {
    if (root(static_cast<int>(i)) != r0) return false;
  }
  return true;
}

void finalize_rule(const RuleGraph& rule, int header_line) {
  if (rule.nodes.empty()) {
    throw RuleParseError(RuleIssue::SyntaxError, header_line, 1,
                         "rule '" + rule.rule_id + "' declares no nodes");
  }
  if (static_cast<int>(rule.nodes.size()) > kMaxRuleNodes) {
    throw RuleParseError(RuleIssue::TooManyNodes, header_line, 1,
                         "rule '" + rule.rule_id + "' has " +
                             std::to_string(rule.nodes.size()) +
                             " nodes (max " + std::to_string(kMaxRuleNodes) + ")");
  }
  int anchors = 0;
  for (const auto& n : rule.nodes) anchors += n.is_anchor ? 1 : 0;
  if (anchors == 0) {
    throw RuleParseError(RuleIssue::MissingAnchor, header_line, 1,
                         "rule '" + rule.rule_id + "' has no anchor node");
  }
  if (anchors > 1) {
    throw RuleParseError(RuleIssue::MultipleAnchors, header_line, 1,
                         "rule '" + rule.rule_id + "' has multiple anchor nodes");
  }
  std::set<std::string> names;
  for (const auto& n : rule.nodes) {
    if (!names.insert(n.name).second) {
      throw RuleParseError(RuleIssue::SyntaxError, header_line, 1,
                           "rule '" + rule.rule_id + "' redeclares node '" +
                               n.name + "'");
    }
  }
  if (!weakly_connected(rule)) {
    throw RuleParseError(RuleIssue::DisconnectedRule, header_line, 1,
                         "rule '" + rule.rule_id + "' is not weakly connected");
  }
}

}  // namespace

RuleSet parse_rule_file(const std::string& text) {
  RuleSet set;
  std::set<std::string> ids;

  std::optional<RuleGraph> current;
  int header_line = 0;

  auto flush = [&] {
    if (!current) return;
    finalize_rule(*current, header_line);
    auto& bucket = set.bucket(current->pathology);
    switch (current->kind) {
      case RuleKind::Mention: bucket.mention.push_back(std::move(*current)); break;
      case RuleKind::Negation: bucket.negation.push_back(std::move(*current)); break;
      case RuleKind::Uncertainty:
        bucket.uncertainty.push_back(std::move(*current));
        break;
    }
    current.reset();
  };

  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    Line line = lex_line(raw, number);
    if (line.tokens.empty()) continue;
    const std::string keyword = unquote(line.tokens[0]);

    if (keyword == "rule") {
      flush();
      if (line.tokens.size() != 4) {
        fail(RuleIssue::SyntaxError, line, 0,
             "expected: rule <id> <pathology> <mention|negation|uncertainty>");
      }
      RuleGraph rule;
      rule.rule_id = unquote(line.tokens[1]);
      if (!ids.insert(rule.rule_id).second) {
        fail(RuleIssue::DuplicateRuleId, line, 1,
             "duplicate rule id '" + rule.rule_id + "'");
      }
      const std::string pname = unquote(line.tokens[2]);
      const auto pathology = pathology_from_name(pname);
      if (!pathology) {
        fail(RuleIssue::UnknownPathology, line, 2,
             "unknown pathology '" + pname + "'");
      }
      rule.pathology = *pathology;
      const std::string kind = to_lower(unquote(line.tokens[3]));
      if (kind == "mention") {
        rule.kind = RuleKind::Mention;
      } else if (kind == "negation") {
        rule.kind = RuleKind::Negation;
      } else if (kind == "uncertainty") {
        rule.kind = RuleKind::Uncertainty;
      } else {
        fail(RuleIssue::SyntaxError, line, 3, "unknown rule kind '" + kind + "'");
      }
      current = std::move(rule);
      header_line = number;
    } else if (keyword == "node") {
      if (!current) {
        fail(RuleIssue::SyntaxError, line, 0, "node outside a rule block");
      }
      current->nodes.push_back(parse_node_line(line));
    } else if (keyword == "edge") {
      if (!current) {
        fail(RuleIssue::SyntaxError, line, 0, "edge outside a rule block");
      }
      current->edges.push_back(parse_edge_line(line, *current));
    } else {
      fail(RuleIssue::SyntaxError, line, 0, "unknown directive '" + keyword + "'");
    }
  }
  flush();
  return set;
}

namespace {

std::string pathology_token(Pathology p) {
  std::string name(pathology_name(p));
  std::replace(name.begin(), name.end(), ' ', '_');
  return name;
}

void serialize_rule(std::ostringstream& out, const RuleGraph& rule) {
  out << "rule " << rule.rule_id << ' ' << pathology_token(rule.pathology) << ' '
      << rule_kind_string(rule.kind) << '\n';
  for (const auto& n : rule.nodes) {
    out << "node " << n.name << ' ' << entity_class_string(n.entity_class);
    if (n.attribute) out << ':' << attribute_string(*n.attribute);
    out << " \"" << n.pattern.spec() << '"';
    if (n.is_anchor) out << " anchor";
    out << '\n';
  }
  for (const auto& e : rule.edges) {
    out << "edge " << e.from << " -" << edge_kind_string(e.kind) << "-> " << e.to
        << '\n';
  }
  out << '\n';
}

}  // namespace

std::string serialize_rules(const RuleSet& rules) {
  std::ostringstream out;
  for (Pathology p : all_pathologies()) {
    const auto& b = rules.bucket(p);
    for (const auto& r : b.mention) serialize_rule(out, r);
    for (const auto& r : b.negation) serialize_rule(out, r);
    for (const auto& r : b.uncertainty) serialize_rule(out, r);
  }
  return out.str();
}

std::vector<Diagnostic> validate_rules(const RuleSet& rules) {
  std::vector<Diagnostic> out;
  std::set<std::string> ids;

  auto check = [&](const RuleGraph& rule, RuleKind expected, Pathology bucket_p) {
    auto add = [&](RuleIssue issue, const std::string& msg) {
      out.push_back({issue, rule.rule_id, msg});
    };
    if (!ids.insert(rule.rule_id).second) {
      add(RuleIssue::DuplicateRuleId, "duplicate rule id");
    }
    if (rule.kind != expected || rule.pathology != bucket_p) {
      add(RuleIssue::SyntaxError, "rule filed under the wrong bucket");
    }
    if (rule.nodes.empty()) {
      add(RuleIssue::SyntaxError, "rule has no nodes");
      return;
    }
    if (static_cast<int>(rule.nodes.size()) > kMaxRuleNodes) {
      add(RuleIssue::TooManyNodes,
          "rule has " + std::to_string(rule.nodes.size()) + " nodes (max " +
              std::to_string(kMaxRuleNodes) + ")");
    }
    int anchors = 0;
    std::set<std::string> names;
    for (const auto& n : rule.nodes) {
      anchors += n.is_anchor ? 1 : 0;
      if (!names.insert(n.name).second) {
        add(RuleIssue::SyntaxError, "node '" + n.name + "' redeclared");
      }
      if (n.attribute && n.entity_class != EntityClass::Obs) {
        add(RuleIssue::AttributeOnAnatomy,
            "node '" + n.name + "' constrains an attribute on a non-OBS class");
      }
      if (!n.pattern.match_any && n.pattern.literal.empty()) {
        add(RuleIssue::SyntaxError, "node '" + n.name + "' has an empty pattern");
      }
    }
    if (anchors == 0) add(RuleIssue::MissingAnchor, "rule has no anchor node");
    if (anchors > 1) add(RuleIssue::MultipleAnchors, "rule has multiple anchors");
    for (const auto& e : rule.edges) {
      if (rule.node_index(e.from) < 0 || rule.node_index(e.to) < 0) {
        add(RuleIssue::SyntaxError, "edge references an undeclared node");
      } else if (e.from == e.to) {
        add(RuleIssue::SyntaxError, "edge endpoints must differ");
      }
    }
    bool endpoints_ok = true;
    for (const auto& e : rule.edges) {
      if (rule.node_index(e.from) < 0 || rule.node_index(e.to) < 0) {
        endpoints_ok = false;
      }
    }
    if (endpoints_ok && !weakly_connected(rule)) {
      add(RuleIssue::DisconnectedRule, "rule is not weakly connected");
    }
  };

  for (Pathology p : all_pathologies()) {
    const auto& b = rules.bucket(p);
    for (const auto& r : b.mention) check(r, RuleKind::Mention, p);
    for (const auto& r : b.negation) check(r, RuleKind::Negation, p);
    for (const auto& r : b.uncertainty) check(r, RuleKind::Uncertainty, p);
  }
  return out;
}

}  // namespace radpert::rules
