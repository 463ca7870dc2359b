#include "radpert/matcher.hpp"

#include <algorithm>
#include <set>

#include "radpert/util.hpp"

namespace radpert::match {

namespace {

constexpr unsigned kAllKinds = 0b111;

unsigned kind_bit(rules::EdgeKind k) {
  switch (k) {
    case rules::EdgeKind::SuggestiveOf:
      return 1u << static_cast<unsigned>(kg::RelationKind::SuggestiveOf);
    case rules::EdgeKind::LocatedAt:
      return 1u << static_cast<unsigned>(kg::RelationKind::LocatedAt);
    case rules::EdgeKind::Modify:
      return 1u << static_cast<unsigned>(kg::RelationKind::Modify);
    case rules::EdgeKind::Any:
      return kAllKinds;
  }
  return kAllKinds;
}

bool attribute_matches(rules::ObsAttribute attr, kg::EntityLabel label) {
  switch (attr) {
    case rules::ObsAttribute::DP: return label == kg::EntityLabel::ObsDp;
    case rules::ObsAttribute::DA: return label == kg::EntityLabel::ObsDa;
    case rules::ObsAttribute::U: return label == kg::EntityLabel::ObsU;
  }
  return false;
}

int anchor_start_token(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                       const Match& m) {
  const auto* anchor = rule.anchor();
  if (!anchor) return 0;
  auto it = m.assignment.find(anchor->name);
  if (it == m.assignment.end()) return 0;
  const kg::Entity* e = graph.find_entity(it->second);
  return e ? e->start_token : 0;
}

void sort_and_dedup(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                    std::vector<Match>& matches) {
  std::sort(matches.begin(), matches.end(),
            [&](const Match& a, const Match& b) {
              const int sa = anchor_start_token(rule, graph, a);
              const int sb = anchor_start_token(rule, graph, b);
              if (sa != sb) return sa < sb;
              return a.assignment < b.assignment;
            });
  matches.erase(std::unique(matches.begin(), matches.end()), matches.end());
}

// Licensed relation kinds between a pair of rule nodes, as a bitmask.
unsigned licensed_kinds(const rules::RuleGraph& rule, const std::string& from,
                        const std::string& to) {
  unsigned mask = 0;
  for (const auto& e : rule.edges) {
    if (e.from == from && e.to == to) mask |= kind_bit(e.kind);
  }
  return mask;
}

bool induced_ok_indexed(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                        const std::vector<const kg::Entity*>& image) {
  const std::size_t n = rule.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const unsigned present = graph.relation_kinds(image[i]->id, image[j]->id);
      if (present == 0) continue;
      const unsigned licensed =
          licensed_kinds(rule, rule.nodes[i].name, rule.nodes[j].name);
      if (present & ~licensed) return false;
    }
  }
  return true;
}

}  // namespace

bool match_text(const rules::TextPattern& pattern, const kg::Entity& entity) {
  if (pattern.match_any) return true;
  for (const auto& token : split_ws(entity.span_text)) {
    if (pattern.matches_token(token)) return true;
  }
  return false;
}

bool node_satisfied(const rules::NodeConstraint& node, const kg::Entity& entity) {
  switch (node.entity_class) {
    case rules::EntityClass::Anat:
      if (kg::is_observation(entity.label)) return false;
      break;
    case rules::EntityClass::Obs:
      if (!kg::is_observation(entity.label)) return false;
      break;
    case rules::EntityClass::Any:
      break;
  }
  if (node.attribute && !attribute_matches(*node.attribute, entity.label)) {
    return false;
  }
  return match_text(node.pattern, entity);
}

std::vector<Match> find_matches(const rules::RuleGraph& rule,
                                const kg::ReportGraph& graph,
                                const MatchOptions& options) {
  const std::size_t n = rule.nodes.size();
  std::vector<Match> out;
  if (n == 0) return out;

  std::vector<std::vector<const kg::Entity*>> candidates(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : graph.entities()) {
      if (node_satisfied(rule.nodes[i], e)) candidates[i].push_back(&e);
    }
    if (candidates[i].empty()) return out;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].size() < candidates[b].size();
  });

  // Edges checkable once both endpoints are placed; grouped by the placement
  // step that completes them.
  std::vector<std::size_t> placed_at(n);
  for (std::size_t step = 0; step < n; ++step) placed_at[order[step]] = step;
  std::vector<std::vector<const rules::RuleEdge*>> edges_at(n);
  for (const auto& e : rule.edges) {
    const std::size_t a = placed_at[static_cast<std::size_t>(rule.node_index(e.from))];
    const std::size_t b = placed_at[static_cast<std::size_t>(rule.node_index(e.to))];
    edges_at[std::max(a, b)].push_back(&e);
  }

  std::vector<const kg::Entity*> image(n, nullptr);

  auto backtrack = [&](auto&& self, std::size_t step) -> void {
    if (step == n) {
      if (options.induced && !induced_ok_indexed(rule, graph, image)) return;
      Match m;
      for (std::size_t i = 0; i < n; ++i) {
        m.assignment.emplace(rule.nodes[i].name, image[i]->id);
      }
      out.push_back(std::move(m));
      return;
    }
    const std::size_t node = order[step];
    for (const kg::Entity* cand : candidates[node]) {
      bool used = false;
      for (std::size_t i = 0; i < step && !used; ++i) {
        used = image[order[i]] == cand;
      }
      if (used) continue;
      image[node] = cand;
      bool ok = true;
      for (const auto* e : edges_at[step]) {
        const auto& src = image[static_cast<std::size_t>(rule.node_index(e->from))];
        const auto& tgt = image[static_cast<std::size_t>(rule.node_index(e->to))];
        if ((graph.relation_kinds(src->id, tgt->id) & kind_bit(e->kind)) == 0) {
          ok = false;
          break;
        }
      }
      if (ok) self(self, step + 1);
      image[node] = nullptr;
    }
  };
  backtrack(backtrack, 0);

  sort_and_dedup(rule, graph, out);
  return out;
}

namespace {

// Oracle-side helpers deliberately avoid the graph's hash indexes.
bool relation_exists_linear(const kg::ReportGraph& graph, const std::string& src,
                            const std::string& tgt, unsigned kinds) {
  for (const auto& r : graph.relations()) {
    if (r.source == src && r.target == tgt &&
        (kinds & (1u << static_cast<unsigned>(r.kind)))) {
      return true;
    }
  }
  return false;
}

bool induced_ok_linear(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                       const std::vector<const kg::Entity*>& image) {
  for (const auto& r : graph.relations()) {
    int from_node = -1;
    int to_node = -1;
    for (std::size_t i = 0; i < image.size(); ++i) {
      if (image[i]->id == r.source) from_node = static_cast<int>(i);
      if (image[i]->id == r.target) to_node = static_cast<int>(i);
    }
    if (from_node < 0 || to_node < 0 || from_node == to_node) continue;
    const unsigned licensed = licensed_kinds(rule, rule.nodes[from_node].name,
                                             rule.nodes[to_node].name);
    if (((1u << static_cast<unsigned>(r.kind)) & ~licensed) != 0) return false;
  }
  return true;
}

}  // namespace

std::vector<Match> brute_force_matches(const rules::RuleGraph& rule,
                                       const kg::ReportGraph& graph,
                                       const MatchOptions& options) {
  const std::size_t n = rule.nodes.size();
  if (static_cast<int>(n) > rules::kMaxRuleNodes) {
    throw MatchError(MatchError::Code::RuleTooLarge,
                     "rule '" + rule.rule_id + "' has " + std::to_string(n) +
                         " nodes (max " + std::to_string(rules::kMaxRuleNodes) +
                         ")");
  }
  std::vector<Match> out;
  if (n == 0) return out;

  const auto& entities = graph.entities();
  std::vector<const kg::Entity*> image(n, nullptr);
  std::vector<bool> used(entities.size(), false);

  auto enumerate = [&](auto&& self, std::size_t node) -> void {
    if (node == n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!node_satisfied(rule.nodes[i], *image[i])) return;
      }
      for (const auto& e : rule.edges) {
        const auto& src = image[static_cast<std::size_t>(rule.node_index(e.from))];
        const auto& tgt = image[static_cast<std::size_t>(rule.node_index(e.to))];
        if (!relation_exists_linear(graph, src->id, tgt->id, kind_bit(e.kind))) {
          return;
        }
      }
      if (options.induced && !induced_ok_linear(rule, graph, image)) return;
      Match m;
      for (std::size_t i = 0; i < n; ++i) {
        m.assignment.emplace(rule.nodes[i].name, image[i]->id);
      }
      out.push_back(std::move(m));
      return;
    }
    for (std::size_t i = 0; i < entities.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      image[node] = &entities[i];
      self(self, node + 1);
      used[i] = false;
    }
  };
  enumerate(enumerate, 0);

  sort_and_dedup(rule, graph, out);
  return out;
}

bool verify_match(const rules::RuleGraph& rule, const kg::ReportGraph& graph,
                  const Match& m, const MatchOptions& options) {
  if (m.assignment.size() != rule.nodes.size()) return false;
  std::vector<const kg::Entity*> image(rule.nodes.size(), nullptr);
  std::set<std::string> targets;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    auto it = m.assignment.find(rule.nodes[i].name);
    if (it == m.assignment.end()) return false;
    if (!targets.insert(it->second).second) return false;  // injectivity
    const kg::Entity* e = graph.find_entity(it->second);
    if (!e || !node_satisfied(rule.nodes[i], *e)) return false;
    image[i] = e;
  }
  for (const auto& e : rule.edges) {
    const auto& src = image[static_cast<std::size_t>(rule.node_index(e.from))];
    const auto& tgt = image[static_cast<std::size_t>(rule.node_index(e.to))];
    if (!relation_exists_linear(graph, src->id, tgt->id, kind_bit(e.kind))) {
      return false;
    }
  }
  if (options.induced && !induced_ok_linear(rule, graph, image)) return false;
  return true;
}

}  // namespace radpert::match
