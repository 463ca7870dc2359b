#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace radpert::kg {

/// Entity color in the report knowledge graph. Anatomy carries no
/// uncertainty attribute; Observations are DP / DA / U.
enum class EntityLabel { AnatDp, ObsDp, ObsDa, ObsU };

inline bool is_observation(EntityLabel l) { return l != EntityLabel::AnatDp; }

std::string_view label_string(EntityLabel l);  // "ANAT-DP", "OBS-DP", ...
std::optional<EntityLabel> label_from_string(std::string_view s);

enum class RelationKind { SuggestiveOf, LocatedAt, Modify };

std::string_view relation_string(RelationKind k);
std::optional<RelationKind> relation_from_string(std::string_view s);

struct Entity {
  std::string id;
  std::string span_text;  // surface tokens joined by single spaces
  int start_token = 0;
  int end_token = 0;  // inclusive
  EntityLabel label = EntityLabel::ObsDp;
};

struct Relation {
  std::string source;
  std::string target;
  RelationKind kind = RelationKind::LocatedAt;
};

/// Half-open token range of one sentence.
struct SentenceSpan {
  int begin_token = 0;
  int end_token = 0;
};

struct Violation {
  enum class Code {
    CrossTypeModify,    // warning: MODIFY between ANAT and OBS
    DuplicateRelation,  // warning: identical (source, target, kind) repeated
    SelfLoop,           // warning: relation source == target (dropped on ingest)
    DanglingRelation,   // hard: endpoint does not resolve
    TokenRange,         // hard: entity indices outside token bounds
    EmptySpan,          // hard: entity with empty surface text
    SentencePartition,  // hard: sentence spans do not partition the tokens
  };
  enum class Severity { Warning, Error };

  Code code;
  Severity severity;
  std::string message;
};

class ParseError : public std::runtime_error {
 public:
  enum class Code {
    MalformedDocument,
    UnknownLabel,
    DanglingRelation,
    IndexOutOfBounds,
    UnknownEntity,
  };

  ParseError(Code code, const std::string& msg, std::size_t byte_offset = 0)
      : std::runtime_error(msg), code_(code), byte_offset_(byte_offset) {}

  Code code() const { return code_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  Code code_;
  std::size_t byte_offset_;
};

/// One radiology report as a knowledge graph. Immutable after construction;
/// safe to share between threads.
class ReportGraph {
 public:
  ReportGraph() = default;
  ReportGraph(std::string report_id, std::string raw_text,
              std::vector<Entity> entities, std::vector<Relation> relations,
              std::vector<Violation> ingest_warnings = {});

  const std::string& report_id() const { return report_id_; }
  const std::string& raw_text() const { return raw_text_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<SentenceSpan>& sentence_spans() const { return sentence_spans_; }
  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }
  const std::vector<Violation>& ingest_warnings() const { return ingest_warnings_; }

  const Entity* find_entity(std::string_view id) const;

  /// Relation kinds present from source to target (bit i set = kind i).
  unsigned relation_kinds(std::string_view source, std::string_view target) const;

  bool has_relation(std::string_view source, std::string_view target,
                    RelationKind kind) const {
    return (relation_kinds(source, target) >> static_cast<unsigned>(kind)) & 1u;
  }

 private:
  std::string report_id_;
  std::string raw_text_;
  std::vector<std::string> tokens_;
  std::vector<SentenceSpan> sentence_spans_;
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::vector<Violation> ingest_warnings_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  std::unordered_map<std::string, unsigned> relation_index_;  // "src\x1ftgt" -> kind bits
};

/// Parses a serialized document holding exactly one report (either a bare
/// report object or a single-entry map). Throws ParseError.
ReportGraph parse_document(const std::string& bytes);

/// Parses a document holding one report or a map of reports. Throws on
/// malformed JSON; per-report schema errors also throw (strict mode).
std::vector<ReportGraph> parse_corpus(const std::string& bytes);

/// Per-report outcome of a lenient corpus parse: batch runs keep going past
/// individual bad reports.
struct DocResult {
  std::string report_id;
  std::optional<ReportGraph> graph;
  std::string error;  // set iff !graph
};

std::vector<DocResult> parse_corpus_lenient(const std::string& bytes);

/// Re-serializes to the ingestion layout. parse(serialize(g)) == g
/// structurally, key order aside.
std::string serialize_document(const ReportGraph& graph);
std::string serialize_corpus(const std::vector<ReportGraph>& graphs);

/// Sentence index and surface text (tokens joined by single spaces) of the
/// sentence containing the entity's start token. Throws ParseError with
/// Code::UnknownEntity.
std::pair<int, std::string> sentence_of(const ReportGraph& graph,
                                        std::string_view entity_id);

std::string sentence_text(const ReportGraph& graph, int sentence_index);

/// Recomputes all invariant violations. Empty result means valid; parser
/// output yields warnings only.
std::vector<Violation> validate_graph(const ReportGraph& graph);

}  // namespace radpert::kg
