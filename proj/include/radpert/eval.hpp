#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radpert/labeler.hpp"
#include "radpert/labels.hpp"

namespace radpert::eval {

enum class SubTask { Mention = 0, Negation = 1, PositiveMention = 2, Uncertainty = 3 };

inline constexpr std::array<SubTask, 4> kAllSubTasks{
    SubTask::Mention, SubTask::Negation, SubTask::PositiveMention,
    SubTask::Uncertainty};

// The weighted average spans only the three classification sub-tasks.
inline constexpr std::array<SubTask, 3> kClassificationSubTasks{
    SubTask::Negation, SubTask::PositiveMention, SubTask::Uncertainty};

std::string_view subtask_name(SubTask t);

class EvalError : public std::runtime_error {
 public:
  enum class Code {
    MisalignedCorpora,
    EmptyCorpus,
    AllZeroSupport,
    ExhaustiveTooLarge,
  };

  EvalError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Binary positive-class indicator per sub-task; a partition of the four
// classes (exactly one sub-task maps each class to true).
bool binarize(UncertaintyClass c, SubTask t);

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
};

// 2tp / (2tp + fp + fn); 0.0 when the denominator vanishes.
double f1(const ConfusionCounts& counts);

struct SubTaskScore {
  double f1 = 0.0;
  long support = 0;
};

// Support-weighted mean over the three classification sub-tasks.
double weighted_f1(const std::array<SubTaskScore, 3>& scores);

struct BootstrapResult {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct BootstrapOptions {
  long replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 42;
  bool exhaustive = false;  // enumerate all n^n resamples (n <= 5)
  int jobs = 1;
};

// Percentile of a sorted sample via linear interpolation between order
// statistics; +infinity endpoints degrade to the nearest order statistic.
double percentile(const std::vector<double>& sorted, double q);

// Index sample for one replicate: n draws with replacement from [0, n),
// derived only from (seed, replicate).
std::vector<std::size_t> bootstrap_sample(std::uint64_t seed, long replicate,
                                          std::size_t n);
std::vector<std::vector<std::size_t>> exhaustive_samples(std::size_t n);

// score_of_sample returns the replicate score, or NaN to drop the replicate
// (e.g. no support in the resample). If every replicate is dropped the
// result degenerates to (fallback, fallback, fallback).
BootstrapResult bootstrap_score(
    std::size_t n, const std::function<double(const std::vector<std::size_t>&)>&
                       score_of_sample,
    const BootstrapOptions& options, double fallback = 0.0);

struct Improvement {
  double value = 0.0;  // percent; may be +infinity
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// 100 * (new - base) / base; base 0 maps to +infinity (new > 0) or 0.0.
double improvement(double new_score, double base_score);

// "Inf." for +infinity, otherwise one decimal place.
std::string format_improvement(double value);

struct ScoreCell {
  double f1 = 0.0;  // point estimate on the full corpus
  long support = 0;
  BootstrapResult boot;
  std::optional<Improvement> vs_baseline;
};

using Confusion = std::array<std::array<long, 4>, 4>;  // [gold][pred]
using ConfusionNorm = std::array<std::array<double, 4>, 4>;

struct PathologyEval {
  std::array<ScoreCell, 4> subtask;  // indexed by SubTask
  ScoreCell weighted;                // support = summed classification support
  Confusion confusion{};
};

struct EvalReport {
  std::vector<std::string> report_ids;  // gold order
  std::array<PathologyEval, kPathologyCount> per_pathology;
  ScoreCell macro_avg;
  ScoreCell weighted_avg;
  long replicates = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  bool exhaustive = false;
};

struct EvalOptions {
  std::optional<std::vector<label::LabelRecord>> baseline;
  BootstrapOptions bootstrap;
};

Confusion confusion_matrix(const std::vector<label::LabelRecord>& pred,
                           const std::vector<label::LabelRecord>& gold,
                           Pathology pathology);
ConfusionNorm normalize_confusion(const Confusion& m);

EvalReport evaluate(const std::vector<label::LabelRecord>& pred,
                    const std::vector<label::LabelRecord>& gold,
                    const EvalOptions& options = {});

// Renderings. JSON encodes +infinity improvements as the string "Inf.".
std::string render_json(const EvalReport& report);
std::string render_table(const EvalReport& report);
std::string render_confusion_csv(const EvalReport& report);

}  // namespace radpert::eval
