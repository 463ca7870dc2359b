#include "radpert/kg_model.hpp"

#include <cctype>
#include <set>

#include "radpert/util.hpp"
#include <json.hpp>

namespace radpert::kg {

using ordered_json = nlohmann::ordered_json;

std::string_view label_string(EntityLabel l) {
  switch (l) {
    case EntityLabel::AnatDp: return "ANAT-DP";
    case EntityLabel::ObsDp: return "OBS-DP";
    case EntityLabel::ObsDa: return "OBS-DA";
    case EntityLabel::ObsU: return "OBS-U";
  }
  return "OBS-DP";
}

std::optional<EntityLabel> label_from_string(std::string_view s) {
  if (s == "ANAT-DP") return EntityLabel::AnatDp;
  if (s == "OBS-DP") return EntityLabel::ObsDp;
  if (s == "OBS-DA") return EntityLabel::ObsDa;
  if (s == "OBS-U") return EntityLabel::ObsU;
  return std::nullopt;
}

std::string_view relation_string(RelationKind k) {
  switch (k) {
    case RelationKind::SuggestiveOf: return "suggestive_of";
    case RelationKind::LocatedAt: return "located_at";
    case RelationKind::Modify: return "modify";
  }
  return "located_at";
}

std::optional<RelationKind> relation_from_string(std::string_view s) {
  if (s == "suggestive_of") return RelationKind::SuggestiveOf;
  if (s == "located_at") return RelationKind::LocatedAt;
  if (s == "modify") return RelationKind::Modify;
  return std::nullopt;
}

namespace {

struct TokenPos {
  std::string text;
  std::size_t char_begin = 0;
};

std::vector<TokenPos> tokenize_with_offsets(const std::string& text) {
  std::vector<TokenPos> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back({text.substr(start, i - start), start});
  }
  return out;
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Character ranges of sentences: text is cut after '.', '!' or '?' when the
// terminator is followed by whitespace or end of text. Abbreviations are not
// special-cased.
std::vector<std::pair<std::size_t, std::size_t>> sentence_char_ranges(
    const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_terminator(text[i]) &&
        (i + 1 == text.size() ||
         std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      ranges.emplace_back(start, i + 1);
      start = i + 1;
    }
  }
  if (start < text.size()) ranges.emplace_back(start, text.size());
  if (ranges.empty() && !text.empty()) ranges.emplace_back(0, text.size());
  return ranges;
}

std::vector<SentenceSpan> compute_sentence_spans(
    const std::string& text, const std::vector<TokenPos>& tokens) {
  const auto ranges = sentence_char_ranges(text);
  std::vector<SentenceSpan> spans;
  std::size_t tok = 0;
  for (const auto& [lo, hi] : ranges) {
    const int begin = static_cast<int>(tok);
    while (tok < tokens.size() && tokens[tok].char_begin < hi) ++tok;
    if (static_cast<int>(tok) > begin) {
      spans.push_back({begin, static_cast<int>(tok)});
    }
  }
  // Tokens past the last computed range (only possible with degenerate
  // whitespace) fold into the final sentence.
  if (tok < tokens.size()) {
    if (spans.empty()) {
      spans.push_back({0, static_cast<int>(tokens.size())});
    } else {
      spans.back().end_token = static_cast<int>(tokens.size());
    }
  }
  return spans;
}

std::string relation_key(std::string_view source, std::string_view target) {
  std::string key(source);
  key.push_back('\x1f');
  key.append(target);
  return key;
}

}  // namespace

ReportGraph::ReportGraph(std::string report_id, std::string raw_text,
                         std::vector<Entity> entities,
                         std::vector<Relation> relations,
                         std::vector<Violation> ingest_warnings)
    : report_id_(std::move(report_id)),
      raw_text_(std::move(raw_text)),
      entities_(std::move(entities)),
      relations_(std::move(relations)),
      ingest_warnings_(std::move(ingest_warnings)) {
  const auto toks = tokenize_with_offsets(raw_text_);
  tokens_.reserve(toks.size());
  for (const auto& t : toks) tokens_.push_back(t.text);
  sentence_spans_ = compute_sentence_spans(raw_text_, toks);
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    entity_index_.emplace(entities_[i].id, i);
  }
  for (const auto& r : relations_) {
    relation_index_[relation_key(r.source, r.target)] |=
        1u << static_cast<unsigned>(r.kind);
  }
}

const Entity* ReportGraph::find_entity(std::string_view id) const {
  auto it = entity_index_.find(std::string(id));
  return it == entity_index_.end() ? nullptr : &entities_[it->second];
}

unsigned ReportGraph::relation_kinds(std::string_view source,
                                     std::string_view target) const {
  auto it = relation_index_.find(relation_key(source, target));
  return it == relation_index_.end() ? 0u : it->second;
}

namespace {

ReportGraph parse_report_object(const std::string& report_id,
                                const ordered_json& doc) {
  if (!doc.is_object() || !doc.contains("text") || !doc["text"].is_string()) {
    throw ParseError(ParseError::Code::MalformedDocument,
                     "report '" + report_id + "': missing \"text\" string");
  }
  const std::string text = doc["text"].get<std::string>();
  const std::size_t token_count = split_ws(text).size();

  std::vector<Entity> entities;
  std::vector<Violation> warnings;
  struct PendingRelation {
    std::string source;
    std::string target;
    RelationKind kind;
  };
  std::vector<PendingRelation> pending;

  if (doc.contains("entities")) {
    const auto& ents = doc["entities"];
    if (!ents.is_object()) {
      throw ParseError(ParseError::Code::MalformedDocument,
                       "report '" + report_id + "': \"entities\" is not a map");
    }
    for (auto it = ents.begin(); it != ents.end(); ++it) {
      const std::string& eid = it.key();
      const auto& e = it.value();
      if (!e.is_object() || !e.contains("tokens") || !e.contains("label") ||
          !e.contains("start_ix") || !e.contains("end_ix")) {
        throw ParseError(ParseError::Code::MalformedDocument,
                         "entity '" + eid + "': missing required fields");
      }
      Entity ent;
      ent.id = eid;
      ent.span_text = join(split_ws(e["tokens"].get<std::string>()), " ");
      if (ent.span_text.empty()) {
        throw ParseError(ParseError::Code::MalformedDocument,
                         "entity '" + eid + "': empty span text");
      }
      const std::string label_str = e["label"].get<std::string>();
      const auto label = label_from_string(label_str);
      if (!label) {
        throw ParseError(ParseError::Code::UnknownLabel,
                         "entity '" + eid + "': unknown label \"" + label_str + "\"");
      }
      ent.label = *label;
      ent.start_token = e["start_ix"].get<int>();
      ent.end_token = e["end_ix"].get<int>();
      if (ent.start_token < 0 || ent.end_token < ent.start_token ||
          static_cast<std::size_t>(ent.end_token) >= token_count) {
        throw ParseError(ParseError::Code::IndexOutOfBounds,
                         "entity '" + eid + "': token range [" +
                             std::to_string(ent.start_token) + ", " +
                             std::to_string(ent.end_token) + "] outside report (" +
                             std::to_string(token_count) + " tokens)");
      }
      if (e.contains("relations")) {
        for (const auto& rel : e["relations"]) {
          if (!rel.is_array() || rel.size() != 2) {
            throw ParseError(ParseError::Code::MalformedDocument,
                             "entity '" + eid + "': relation entry is not [kind, target]");
          }
          const std::string kind_str = rel[0].get<std::string>();
          const auto kind = relation_from_string(kind_str);
          if (!kind) {
            throw ParseError(ParseError::Code::MalformedDocument,
                             "entity '" + eid + "': unknown relation kind \"" +
                                 kind_str + "\"");
          }
          std::string target = rel[1].is_string()
                                   ? rel[1].get<std::string>()
                                   : std::to_string(rel[1].get<long long>());
          pending.push_back({eid, std::move(target), *kind});
        }
      }
      entities.push_back(std::move(ent));
    }
  }

  std::set<std::string> ids;
  for (const auto& e : entities) ids.insert(e.id);

  std::vector<Relation> relations;
  std::set<std::string> seen;
  auto entity_label = [&](const std::string& id) {
    for (const auto& e : entities) {
      if (e.id == id) return e.label;
    }
    return EntityLabel::ObsDp;  // unreachable: resolved before use
  };
  for (auto& p : pending) {
    if (!ids.count(p.target)) {
      throw ParseError(ParseError::Code::DanglingRelation,
                       "relation " + p.source + " -> " + p.target +
                           ": target entity does not exist");
    }
    if (p.source == p.target) {
      warnings.push_back({Violation::Code::SelfLoop, Violation::Severity::Warning,
                          "self-loop relation on entity '" + p.source + "' dropped"});
      continue;
    }
    std::string dedup_key = p.source + '\x1f' + p.target + '\x1f' +
                            std::string(relation_string(p.kind));
    if (!seen.insert(dedup_key).second) {
      warnings.push_back({Violation::Code::DuplicateRelation,
                          Violation::Severity::Warning,
                          "duplicate relation " + p.source + " -" +
                              std::string(relation_string(p.kind)) + "-> " +
                              p.target + " deduplicated"});
      continue;
    }
    if (p.kind == RelationKind::Modify &&
        is_observation(entity_label(p.source)) !=
            is_observation(entity_label(p.target))) {
      warnings.push_back({Violation::Code::CrossTypeModify,
                          Violation::Severity::Warning,
                          "modify relation " + p.source + " -> " + p.target +
                              " connects ANAT and OBS entities (kept)"});
    }
    relations.push_back({std::move(p.source), std::move(p.target), p.kind});
  }

  return ReportGraph(report_id, text, std::move(entities), std::move(relations),
                     std::move(warnings));
}

ordered_json parse_json_or_throw(const std::string& bytes) {
  try {
    return ordered_json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(ParseError::Code::MalformedDocument,
                     "invalid JSON at byte " + std::to_string(e.byte) + ": " +
                         e.what(),
                     e.byte);
  }
}

bool looks_like_single_report(const ordered_json& j) {
  return j.is_object() && j.contains("text") && j["text"].is_string();
}

}  // namespace

ReportGraph parse_document(const std::string& bytes) {
  auto graphs = parse_corpus(bytes);
  if (graphs.size() != 1) {
    throw ParseError(ParseError::Code::MalformedDocument,
                     "expected exactly one report, found " +
                         std::to_string(graphs.size()));
  }
  return std::move(graphs.front());
}

std::vector<ReportGraph> parse_corpus(const std::string& bytes) {
  const ordered_json j = parse_json_or_throw(bytes);
  std::vector<ReportGraph> out;
  if (looks_like_single_report(j)) {
    out.push_back(parse_report_object("doc-0", j));
    return out;
  }
  if (!j.is_object()) {
    throw ParseError(ParseError::Code::MalformedDocument,
                     "top level must be a report object or a map of reports");
  }
  std::size_t ordinal = 0;
  for (auto it = j.begin(); it != j.end(); ++it, ++ordinal) {
    const std::string id =
        it.key().empty() ? "doc-" + std::to_string(ordinal) : it.key();
    out.push_back(parse_report_object(id, it.value()));
  }
  return out;
}

std::vector<DocResult> parse_corpus_lenient(const std::string& bytes) {
  const ordered_json j = parse_json_or_throw(bytes);
  std::vector<DocResult> out;
  if (looks_like_single_report(j)) {
    DocResult r;
    r.report_id = "doc-0";
    try {
      r.graph = parse_report_object(r.report_id, j);
    } catch (const ParseError& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
    return out;
  }
  if (!j.is_object()) {
    throw ParseError(ParseError::Code::MalformedDocument,
                     "top level must be a report object or a map of reports");
  }
  std::size_t ordinal = 0;
  for (auto it = j.begin(); it != j.end(); ++it, ++ordinal) {
    DocResult r;
    r.report_id = it.key().empty() ? "doc-" + std::to_string(ordinal) : it.key();
    try {
      r.graph = parse_report_object(r.report_id, it.value());
    } catch (const ParseError& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

ordered_json report_to_json(const ReportGraph& g) {
  ordered_json doc;
  doc["text"] = g.raw_text();
  ordered_json ents = ordered_json::object();
  for (const auto& e : g.entities()) {
    ordered_json je;
    je["tokens"] = e.span_text;
    je["label"] = std::string(label_string(e.label));
    je["start_ix"] = e.start_token;
    je["end_ix"] = e.end_token;
    ordered_json rels = ordered_json::array();
    for (const auto& r : g.relations()) {
      if (r.source == e.id) {
        rels.push_back({std::string(relation_string(r.kind)), r.target});
      }
    }
    je["relations"] = std::move(rels);
    ents[e.id] = std::move(je);
  }
  doc["entities"] = std::move(ents);
  return doc;
}

}  // namespace

std::string serialize_document(const ReportGraph& graph) {
  ordered_json top;
  top[graph.report_id()] = report_to_json(graph);
  return top.dump(2) + "\n";
}

std::string serialize_corpus(const std::vector<ReportGraph>& graphs) {
  ordered_json top = ordered_json::object();
  for (const auto& g : graphs) top[g.report_id()] = report_to_json(g);
  return top.dump(2) + "\n";
}

std::string sentence_text(const ReportGraph& graph, int sentence_index) {
  const auto& span = graph.sentence_spans().at(static_cast<std::size_t>(sentence_index));
  std::string out;
  for (int t = span.begin_token; t < span.end_token; ++t) {
    if (t > span.begin_token) out += ' ';
    out += graph.tokens()[static_cast<std::size_t>(t)];
  }
  return out;
}

std::pair<int, std::string> sentence_of(const ReportGraph& graph,
                                        std::string_view entity_id) {
  const Entity* e = graph.find_entity(entity_id);
  if (!e) {
    throw ParseError(ParseError::Code::UnknownEntity,
                     "unknown entity '" + std::string(entity_id) + "'");
  }
  const auto& spans = graph.sentence_spans();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (e->start_token >= spans[i].begin_token &&
        e->start_token < spans[i].end_token) {
      return {static_cast<int>(i), sentence_text(graph, static_cast<int>(i))};
    }
  }
  throw ParseError(ParseError::Code::UnknownEntity,
                   "entity '" + std::string(entity_id) +
                       "' start token not covered by any sentence");
}

std::vector<Violation> validate_graph(const ReportGraph& graph) {
  std::vector<Violation> out;
  const int n_tokens = static_cast<int>(graph.tokens().size());

  for (const auto& e : graph.entities()) {
    if (e.span_text.empty()) {
      out.push_back({Violation::Code::EmptySpan, Violation::Severity::Error,
                     "entity '" + e.id + "' has empty span text"});
    }
    if (e.start_token < 0 || e.end_token < e.start_token ||
        e.end_token >= n_tokens) {
      out.push_back({Violation::Code::TokenRange, Violation::Severity::Error,
                     "entity '" + e.id + "' token range outside report"});
    }
  }

  std::set<std::string> seen;
  for (const auto& r : graph.relations()) {
    const Entity* src = graph.find_entity(r.source);
    const Entity* tgt = graph.find_entity(r.target);
    if (!src || !tgt) {
      out.push_back({Violation::Code::DanglingRelation, Violation::Severity::Error,
                     "relation " + r.source + " -> " + r.target +
                         " has an unresolved endpoint"});
      continue;
    }
    if (r.source == r.target) {
      out.push_back({Violation::Code::SelfLoop, Violation::Severity::Warning,
                     "self-loop relation on entity '" + r.source + "'"});
    }
    std::string key = r.source + '\x1f' + r.target + '\x1f' +
                      std::string(relation_string(r.kind));
    if (!seen.insert(key).second) {
      out.push_back({Violation::Code::DuplicateRelation, Violation::Severity::Warning,
                     "duplicate relation " + r.source + " -> " + r.target});
    }
    if (r.kind == RelationKind::Modify &&
        is_observation(src->label) != is_observation(tgt->label)) {
      out.push_back({Violation::Code::CrossTypeModify, Violation::Severity::Warning,
                     "modify relation " + r.source + " -> " + r.target +
                         " connects ANAT and OBS entities"});
    }
  }

  // Sentence spans must partition [0, n_tokens) in order.
  int cursor = 0;
  bool partition_ok = true;
  for (const auto& s : graph.sentence_spans()) {
    if (s.begin_token != cursor || s.end_token <= s.begin_token) {
      partition_ok = false;
      break;
    }
    cursor = s.end_token;
  }
  if (cursor != n_tokens) partition_ok = false;
  if (!partition_ok && n_tokens > 0) {
    out.push_back({Violation::Code::SentencePartition, Violation::Severity::Error,
                   "sentence spans do not partition the report tokens"});
  }
  return out;
}

}  // namespace radpert::kg
