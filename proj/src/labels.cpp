#include "radpert/labels.hpp"

#include <algorithm>
#include <cctype>

namespace radpert {

namespace {

constexpr std::array<Pathology, kPathologyCount> kCsvOrder = {
    Pathology::Atelectasis,
    Pathology::Cardiomegaly,
    Pathology::Consolidation,
    Pathology::Edema,
    Pathology::EnlargedCardiomediastinum,
    Pathology::Fracture,
    Pathology::LungLesion,
    Pathology::LungOpacity,
    Pathology::PleuralEffusion,
    Pathology::PleuralOther,
    Pathology::Pneumonia,
    Pathology::Pneumothorax,
    Pathology::SupportDevices,
};

constexpr std::array<Pathology, kPathologyCount> kTemplateOrder = {
    Pathology::EnlargedCardiomediastinum,
    Pathology::Cardiomegaly,
    Pathology::LungOpacity,
    Pathology::LungLesion,
    Pathology::Edema,
    Pathology::Consolidation,
    Pathology::Pneumonia,
    Pathology::Atelectasis,
    Pathology::Pneumothorax,
    Pathology::PleuralEffusion,
    Pathology::PleuralOther,
    Pathology::Fracture,
    Pathology::SupportDevices,
};

constexpr std::array<std::string_view, kPathologyCount> kNames = {
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
};

std::string normalize_name(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    if (ch == '_') ch = ' ';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

}  // namespace

const std::array<Pathology, kPathologyCount>& all_pathologies() {
  return kCsvOrder;
}

const std::array<Pathology, kPathologyCount>& template_order() {
  return kTemplateOrder;
}

std::string_view pathology_name(Pathology p) {
  return kNames[pathology_index(p)];
}

std::optional<Pathology> pathology_from_name(std::string_view name) {
  const std::string needle = normalize_name(name);
  for (std::size_t i = 0; i < kPathologyCount; ++i) {
    if (normalize_name(kNames[i]) == needle) return kCsvOrder[i];
  }
  return std::nullopt;
}

std::string_view class_name(UncertaintyClass c) {
  switch (c) {
    case UncertaintyClass::Null: return "Null";
    case UncertaintyClass::Negative: return "Negative";
    case UncertaintyClass::Uncertain: return "Uncertain";
    case UncertaintyClass::Positive: return "Positive";
  }
  return "Null";
}

std::string_view class_csv_cell(UncertaintyClass c) {
  switch (c) {
    case UncertaintyClass::Null: return "";
    case UncertaintyClass::Negative: return "0.0";
    case UncertaintyClass::Uncertain: return "-1.0";
    case UncertaintyClass::Positive: return "1.0";
  }
  return "";
}

std::optional<UncertaintyClass> class_from_csv_cell(std::string_view cell) {
  if (cell.empty()) return UncertaintyClass::Null;
  if (cell == "1.0" || cell == "1") return UncertaintyClass::Positive;
  if (cell == "0.0" || cell == "0") return UncertaintyClass::Negative;
  if (cell == "-1.0" || cell == "-1") return UncertaintyClass::Uncertain;
  return std::nullopt;
}

std::string_view class_answer_word(UncertaintyClass c) {
  switch (c) {
    case UncertaintyClass::Null: return "Undefined";
    case UncertaintyClass::Negative: return "No";
    case UncertaintyClass::Uncertain: return "Maybe";
    case UncertaintyClass::Positive: return "Yes";
  }
  return "Undefined";
}

std::optional<UncertaintyClass> class_from_answer_word(std::string_view word) {
  std::string w(word);
  std::transform(w.begin(), w.end(), w.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  if (w == "yes") return UncertaintyClass::Positive;
  if (w == "no") return UncertaintyClass::Negative;
  if (w == "maybe") return UncertaintyClass::Uncertain;
  if (w == "undefined") return UncertaintyClass::Null;
  return std::nullopt;
}

}  // namespace radpert
