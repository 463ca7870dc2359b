#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace radpert {

/// The thirteen chest X-ray findings, in label-CSV column order.
enum class Pathology {
  Atelectasis = 0,
  Cardiomegaly,
  Consolidation,
  Edema,
  EnlargedCardiomediastinum,
  Fracture,
  LungLesion,
  LungOpacity,
  PleuralEffusion,
  PleuralOther,
  Pneumonia,
  Pneumothorax,
  SupportDevices,
};

inline constexpr std::size_t kPathologyCount = 13;

/// All pathologies in CSV column order.
const std::array<Pathology, kPathologyCount>& all_pathologies();

/// The order findings appear in chat prompt templates (Enlarged
/// Cardiomediastinum first). Distinct from the CSV column order.
const std::array<Pathology, kPathologyCount>& template_order();

std::string_view pathology_name(Pathology p);

/// Case-insensitive lookup; accepts '_' in place of spaces.
std::optional<Pathology> pathology_from_name(std::string_view name);

inline std::size_t pathology_index(Pathology p) {
  return static_cast<std::size_t>(p);
}

/// Per-pathology output class. The numeric order doubles as the
/// aggregation priority: Positive > Uncertain > Negative > Null.
enum class UncertaintyClass {
  Null = 0,
  Negative = 1,
  Uncertain = 2,
  Positive = 3,
};

std::string_view class_name(UncertaintyClass c);

/// CheXpert-lineage CSV cell encoding: "" Null, "1.0" Positive,
/// "0.0" Negative, "-1.0" Uncertain.
std::string_view class_csv_cell(UncertaintyClass c);
std::optional<UncertaintyClass> class_from_csv_cell(std::string_view cell);

/// Prompt vocabulary: Yes / No / Maybe / Undefined.
std::string_view class_answer_word(UncertaintyClass c);
std::optional<UncertaintyClass> class_from_answer_word(std::string_view word);

using ClassVector = std::array<UncertaintyClass, kPathologyCount>;

inline ClassVector all_null() {
  ClassVector v{};
  v.fill(UncertaintyClass::Null);
  return v;
}

}  // namespace radpert
