#include "radpert/labeler.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "radpert/util.hpp"

namespace radpert::label {

UncertaintyClass flip(UncertaintyClass c) {
  switch (c) {
    case UncertaintyClass::Positive: return UncertaintyClass::Negative;
    case UncertaintyClass::Negative: return UncertaintyClass::Positive;
    default: return c;  // Uncertain is a fixed point; Null never reaches here
  }
}

namespace {

std::optional<UncertaintyClass> class_of_obs(const kg::Entity& e) {
  switch (e.label) {
    case kg::EntityLabel::ObsDp: return UncertaintyClass::Positive;
    case kg::EntityLabel::ObsDa: return UncertaintyClass::Negative;
    case kg::EntityLabel::ObsU: return UncertaintyClass::Uncertain;
    case kg::EntityLabel::AnatDp: return std::nullopt;
  }
  return std::nullopt;
}

// Deterministic choice among several OBS entities: earliest start token,
// then id.
const kg::Entity* pick_obs(std::vector<const kg::Entity*>& obs) {
  if (obs.empty()) return nullptr;
  std::sort(obs.begin(), obs.end(), [](const kg::Entity* a, const kg::Entity* b) {
    if (a->start_token != b->start_token) return a->start_token < b->start_token;
    return a->id < b->id;
  });
  return obs.front();
}

}  // namespace

UncertaintyClass initial_class_of(const rules::RuleGraph& rule,
                                  const match::Match& m,
                                  const kg::ReportGraph& graph) {
  const auto* anchor_node = rule.anchor();
  const kg::Entity* anchor =
      anchor_node ? graph.find_entity(m.assignment.at(anchor_node->name)) : nullptr;

  if (anchor) {
    if (auto c = class_of_obs(*anchor)) return *c;
  }

  // Anchor is anatomy: prefer an OBS connected to the anchor by a rule edge,
  // then any OBS in the match; an ANAT-only match defaults to Positive.
  std::vector<const kg::Entity*> adjacent;
  std::vector<const kg::Entity*> any_obs;
  for (const auto& [node, entity_id] : m.assignment) {
    const kg::Entity* e = graph.find_entity(entity_id);
    if (!e || !kg::is_observation(e->label)) continue;
    any_obs.push_back(e);
    if (anchor_node) {
      for (const auto& edge : rule.edges) {
        if ((edge.from == anchor_node->name && edge.to == node) ||
            (edge.to == anchor_node->name && edge.from == node)) {
          adjacent.push_back(e);
          break;
        }
      }
    }
  }
  if (const kg::Entity* e = pick_obs(adjacent)) return *class_of_obs(*e);
  if (const kg::Entity* e = pick_obs(any_obs)) return *class_of_obs(*e);
  return UncertaintyClass::Positive;
}

std::vector<Mention> extract_mentions(const kg::ReportGraph& graph,
                                      const rules::RuleSet& rules,
                                      Pathology pathology,
                                      const LabelOptions& options) {
  const match::MatchOptions mopts{options.induced};
  std::vector<Mention> out;
  std::set<std::string> seen_anchors;

  for (const auto& rule : rules.bucket(pathology).mention) {
    const auto* anchor_node = rule.anchor();
    if (!anchor_node) continue;
    for (const auto& m : match::find_matches(rule, graph, mopts)) {
      const std::string anchor_id = m.assignment.at(anchor_node->name);
      if (!seen_anchors.insert(anchor_id).second) continue;
      Mention mention;
      mention.pathology = pathology;
      mention.rule_id = rule.rule_id;
      mention.match = m;
      mention.anchor_entity = anchor_id;
      mention.initial_class = initial_class_of(rule, m, graph);
      mention.final_class = mention.initial_class;
      mention.sentence_index = kg::sentence_of(graph, anchor_id).first;
      out.push_back(std::move(mention));
    }
  }
  return out;
}

namespace {

// A modifier rule binds to a mention when its anchor's image is in the
// mention's entity set or one relation hop away (either direction, any kind).
bool binds_to_mention(const kg::ReportGraph& graph, const std::string& anchor_id,
                      const std::set<std::string>& mention_entities) {
  if (mention_entities.count(anchor_id)) return true;
  for (const auto& id : mention_entities) {
    if (graph.relation_kinds(anchor_id, id) != 0) return true;
    if (graph.relation_kinds(id, anchor_id) != 0) return true;
  }
  return false;
}

std::vector<std::string> firing_rules(const std::vector<rules::RuleGraph>& bucket,
                                      const kg::ReportGraph& graph,
                                      const std::set<std::string>& mention_entities,
                                      const match::MatchOptions& mopts) {
  std::vector<std::string> fired;
  for (const auto& rule : bucket) {
    const auto* anchor_node = rule.anchor();
    if (!anchor_node) continue;
    for (const auto& m : match::find_matches(rule, graph, mopts)) {
      if (binds_to_mention(graph, m.assignment.at(anchor_node->name),
                           mention_entities)) {
        fired.push_back(rule.rule_id);
        break;
      }
    }
  }
  return fired;
}

}  // namespace

Mention apply_modifiers(Mention mention, const kg::ReportGraph& graph,
                        const rules::RuleSet& rules,
                        const LabelOptions& options) {
  const match::MatchOptions mopts{options.induced};
  std::set<std::string> entities;
  for (const auto& [node, entity_id] : mention.match.assignment) {
    entities.insert(entity_id);
  }

  const auto& bucket = rules.bucket(mention.pathology);
  auto uncertain = firing_rules(bucket.uncertainty, graph, entities, mopts);
  if (!uncertain.empty()) {
    mention.applied_rules = std::move(uncertain);
    mention.final_class = UncertaintyClass::Uncertain;
    return mention;
  }
  auto negated = firing_rules(bucket.negation, graph, entities, mopts);
  if (!negated.empty()) {
    mention.applied_rules = std::move(negated);
    mention.final_class = flip(mention.initial_class);
    return mention;
  }
  mention.applied_rules.clear();
  mention.final_class = mention.initial_class;
  return mention;
}

UncertaintyClass aggregate(const std::vector<UncertaintyClass>& classes) {
  if (classes.empty()) return UncertaintyClass::Null;
  UncertaintyClass best = UncertaintyClass::Negative;
  for (UncertaintyClass c : classes) {
    if (c == UncertaintyClass::Null) {
      throw LabelError(LabelError::Code::ContainsNull,
                       "aggregate input contains Null");
    }
    if (static_cast<int>(c) > static_cast<int>(best)) best = c;
  }
  return best;
}

LabelRecord label_report(const kg::ReportGraph& graph,
                         const rules::RuleSet& rules,
                         const LabelOptions& options) {
  LabelRecord record;
  record.report_id = graph.report_id();

  for (Pathology p : all_pathologies()) {
    auto mentions = extract_mentions(graph, rules, p, options);
    for (auto& m : mentions) m = apply_modifiers(std::move(m), graph, rules, options);

    std::vector<UncertaintyClass> classes;
    classes.reserve(mentions.size());
    for (const auto& m : mentions) classes.push_back(m.final_class);
    const UncertaintyClass label = aggregate(classes);
    record.labels[pathology_index(p)] = label;
    if (label == UncertaintyClass::Null) continue;

    // Evidence: mention carrying the winning class, earliest anchor first.
    const Mention* best = nullptr;
    int best_start = 0;
    for (const auto& m : mentions) {
      if (m.final_class != label) continue;
      const kg::Entity* anchor = graph.find_entity(m.anchor_entity);
      const int start = anchor ? anchor->start_token : 0;
      if (!best || start < best_start) {
        best = &m;
        best_start = start;
      }
    }
    if (best) {
      record.evidence[pathology_index(p)] =
          Evidence{best->sentence_index,
                   kg::sentence_text(graph, best->sentence_index)};
    }
  }
  return record;
}

CorpusResult label_corpus(const std::vector<kg::DocResult>& docs,
                          const rules::RuleSet& rules,
                          const LabelOptions& options, int jobs) {
  struct Slot {
    std::optional<LabelRecord> record;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(docs.size());

  parallel_for_indexed(docs.size(), jobs, [&](std::size_t i) {
    const auto& doc = docs[i];
    if (!doc.graph) {
      slots[i].error = doc.error.empty() ? "unparseable document" : doc.error;
      return;
    }
    try {
      slots[i].record = label_report(*doc.graph, rules, options);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  CorpusResult result;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (slots[i].record) {
      result.records.push_back(std::move(*slots[i].record));
    } else {
      result.failures.push_back({docs[i].report_id, *slots[i].error});
    }
  }
  return result;
}

namespace {

std::string csv_header() {
  std::string out = "report_id";
  for (Pathology p : all_pathologies()) {
    out += ',';
    out += pathology_name(p);
  }
  return out;
}

}  // namespace

std::string labels_to_csv(const std::vector<LabelRecord>& records) {
  std::ostringstream out;
  out << csv_header() << '\n';
  for (const auto& r : records) {
    out << r.report_id;
    for (Pathology p : all_pathologies()) {
      out << ',' << class_csv_cell(r.labels[pathology_index(p)]);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<LabelRecord> labels_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw LabelError(LabelError::Code::BadCsv, "empty label file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) {
    throw LabelError(LabelError::Code::BadCsv,
                     "unexpected header; expected: " + csv_header());
  }

  std::vector<LabelRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos
                                             ? std::string::npos
                                             : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 1 + kPathologyCount) {
      throw LabelError(LabelError::Code::BadCsv,
                       "line " + std::to_string(line_no) + ": expected " +
                           std::to_string(1 + kPathologyCount) + " cells, found " +
                           std::to_string(cells.size()));
    }
    LabelRecord record;
    record.report_id = cells[0];
    for (std::size_t i = 0; i < kPathologyCount; ++i) {
      const auto c = class_from_csv_cell(cells[i + 1]);
      if (!c) {
        throw LabelError(LabelError::Code::BadCsv,
                         "line " + std::to_string(line_no) + ": bad cell '" +
                             cells[i + 1] + "'");
      }
      record.labels[i] = *c;
    }
    out.push_back(std::move(record));
  }
  return out;
}

std::string evidence_to_tsv(const std::vector<LabelRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    for (Pathology p : all_pathologies()) {
      const auto& ev = r.evidence[pathology_index(p)];
      if (!ev) continue;
      out << r.report_id << '\t' << pathology_name(p) << '\t'
          << ev->sentence_index << '\t' << ev->sentence_text << '\n';
    }
  }
  return out.str();
}

}  // namespace radpert::label
