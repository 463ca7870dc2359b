#include "radpert/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "radpert/rng.hpp"
#include "radpert/util.hpp"
#include <json.hpp>

namespace radpert::eval {

using ordered_json = nlohmann::ordered_json;

std::string_view subtask_name(SubTask t) {
  switch (t) {
    case SubTask::Mention: return "mention";
    case SubTask::Negation: return "negation";
    case SubTask::PositiveMention: return "positive_mention";
    case SubTask::Uncertainty: return "uncertainty";
  }
  return "mention";
}

bool binarize(UncertaintyClass c, SubTask t) {
  switch (t) {
    case SubTask::Mention: return c == UncertaintyClass::Null;
    case SubTask::Negation: return c == UncertaintyClass::Negative;
    case SubTask::PositiveMention: return c == UncertaintyClass::Positive;
    case SubTask::Uncertainty: return c == UncertaintyClass::Uncertain;
  }
  return false;
}

double f1(const ConfusionCounts& c) {
  const long denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return (2.0 * static_cast<double>(c.tp)) / static_cast<double>(denom);
}

double weighted_f1(const std::array<SubTaskScore, 3>& scores) {
  double total = 0.0;
  double weighted = 0.0;
  for (const auto& s : scores) {
    total += static_cast<double>(s.support);
    weighted += s.f1 * static_cast<double>(s.support);
  }
  if (total == 0.0) {
    throw EvalError(EvalError::Code::AllZeroSupport,
                    "weighted F1 undefined: all sub-task supports are zero");
  }
  return weighted / total;
}

double percentile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const std::size_t i = static_cast<std::size_t>(h);
  const double theta = h - static_cast<double>(i);
  if (theta == 0.0 || i + 1 >= n) return sorted[i];
  if (sorted[i] == sorted[i + 1]) return sorted[i];
  // Exact for finite endpoints; an infinite upper endpoint dominates.
  return sorted[i] + theta * (sorted[i + 1] - sorted[i]);
}

std::vector<std::size_t> bootstrap_sample(std::uint64_t seed, long replicate,
                                          std::size_t n) {
  return resample_indices(seed, static_cast<std::uint64_t>(replicate), n);
}

std::vector<std::vector<std::size_t>> exhaustive_samples(std::size_t n) {
  if (n == 0 || n > 5) {
    throw EvalError(EvalError::Code::ExhaustiveTooLarge,
                    "exhaustive resampling supports 1 <= n <= 5, got n = " +
                        std::to_string(n));
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < n; ++i) count *= n;
  std::vector<std::vector<std::size_t>> out;
  out.reserve(count);
  std::vector<std::size_t> tuple(n, 0);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(tuple);
    for (std::size_t pos = n; pos-- > 0;) {
      if (++tuple[pos] < n) break;
      tuple[pos] = 0;
    }
  }
  return out;
}

namespace {

BootstrapResult summarize(std::vector<double> values, double alpha,
                          double fallback) {
  if (values.empty()) return {fallback, fallback, fallback};
  std::sort(values.begin(), values.end());
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) /
      static_cast<double>(values.size());
  return {mean, percentile(values, alpha / 2.0),
          percentile(values, 1.0 - alpha / 2.0)};
}

}  // namespace

BootstrapResult bootstrap_score(
    std::size_t n,
    const std::function<double(const std::vector<std::size_t>&)>& score_of_sample,
    const BootstrapOptions& options, double fallback) {
  if (n == 0) {
    throw EvalError(EvalError::Code::EmptyCorpus, "cannot bootstrap an empty corpus");
  }
  std::vector<std::vector<std::size_t>> samples;
  long replicates = options.replicates;
  if (options.exhaustive) {
    samples = exhaustive_samples(n);
    replicates = static_cast<long>(samples.size());
  }
  std::vector<double> scores(static_cast<std::size_t>(replicates));
  parallel_for_indexed(static_cast<std::size_t>(replicates), options.jobs,
                       [&](std::size_t r) {
                         const auto sample =
                             options.exhaustive
                                 ? samples[r]
                                 : bootstrap_sample(options.seed,
                                                    static_cast<long>(r), n);
                         scores[r] = score_of_sample(sample);
                       });
  std::vector<double> kept;
  kept.reserve(scores.size());
  for (double s : scores) {
    if (!std::isnan(s)) kept.push_back(s);
  }
  return summarize(std::move(kept), options.alpha, fallback);
}

double improvement(double new_score, double base_score) {
  if (base_score == 0.0) {
    if (new_score > 0.0) return std::numeric_limits<double>::infinity();
    return 0.0;
  }
  return 100.0 * (new_score - base_score) / base_score;
}

std::string format_improvement(double value) {
  if (std::isinf(value)) return "Inf.";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

Confusion confusion_matrix(const std::vector<label::LabelRecord>& pred,
                           const std::vector<label::LabelRecord>& gold,
                           Pathology pathology) {
  if (pred.size() != gold.size()) {
    throw EvalError(EvalError::Code::MisalignedCorpora,
                    "pred and gold have different sizes");
  }
  Confusion m{};
  const std::size_t pi = pathology_index(pathology);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i].report_id != gold[i].report_id) {
      throw EvalError(EvalError::Code::MisalignedCorpora,
                      "report order mismatch at row " + std::to_string(i));
    }
    const int g = static_cast<int>(gold[i].labels[pi]);
    const int p = static_cast<int>(pred[i].labels[pi]);
    ++m[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
  }
  return m;
}

ConfusionNorm normalize_confusion(const Confusion& m) {
  ConfusionNorm out{};
  for (std::size_t g = 0; g < 4; ++g) {
    long row = 0;
    for (std::size_t p = 0; p < 4; ++p) row += m[g][p];
    for (std::size_t p = 0; p < 4; ++p) {
      out[g][p] = row == 0 ? 0.0
                           : static_cast<double>(m[g][p]) / static_cast<double>(row);
    }
  }
  return out;
}

namespace {

// One replicate's worth of scores: 13 * (4 sub-task F1s + weighted F1),
// then macro and weighted averages. Unqualified cells (zero support in the
// resample) hold 0.0 and are excluded from their own bootstrap distribution,
// but participate as 0.0 in paired improvement computations.
struct Battery {
  static constexpr std::size_t kPerPathology = 5;
  static constexpr std::size_t kMacro = kPathologyCount * kPerPathology;
  static constexpr std::size_t kWeightedAvg = kMacro + 1;
  static constexpr std::size_t kCells = kWeightedAvg + 1;

  std::array<double, kCells> value{};
  std::array<bool, kCells> qualified{};
  std::array<long, kCells> support{};

  static std::size_t subtask_cell(std::size_t pathology, SubTask t) {
    return pathology * kPerPathology + static_cast<std::size_t>(t);
  }
  static std::size_t weighted_cell(std::size_t pathology) {
    return pathology * kPerPathology + 4;
  }
};

using Labels = std::vector<ClassVector>;

Battery compute_battery(const Labels& pred, const Labels& gold,
                        const std::vector<std::size_t>& sample) {
  Battery b;
  double macro_sum = 0.0;
  long macro_n = 0;
  double cross_weighted = 0.0;
  double cross_support = 0.0;

  for (std::size_t p = 0; p < kPathologyCount; ++p) {
    std::array<SubTaskScore, 3> classification{};
    for (SubTask t : kAllSubTasks) {
      ConfusionCounts c;
      long support = 0;
      for (const std::size_t i : sample) {
        const bool gb = binarize(gold[i][p], t);
        const bool pb = binarize(pred[i][p], t);
        support += gb ? 1 : 0;
        if (gb && pb) ++c.tp;
        if (!gb && pb) ++c.fp;
        if (gb && !pb) ++c.fn;
        if (!gb && !pb) ++c.tn;
      }
      const std::size_t cell = Battery::subtask_cell(p, t);
      b.value[cell] = f1(c);
      b.support[cell] = support;
      b.qualified[cell] = support > 0;
      if (t != SubTask::Mention) {
        classification[static_cast<std::size_t>(t) - 1] = {b.value[cell], support};
      }
    }

    const std::size_t wcell = Battery::weighted_cell(p);
    long s_total = 0;
    for (const auto& s : classification) s_total += s.support;
    b.support[wcell] = s_total;
    b.qualified[wcell] = s_total > 0;
    b.value[wcell] = s_total > 0 ? weighted_f1(classification) : 0.0;

    if (s_total > 0) {
      macro_sum += b.value[wcell];
      ++macro_n;
      cross_weighted += b.value[wcell] * static_cast<double>(s_total);
      cross_support += static_cast<double>(s_total);
    }
  }

  b.value[Battery::kMacro] = macro_n > 0 ? macro_sum / static_cast<double>(macro_n) : 0.0;
  b.qualified[Battery::kMacro] = macro_n > 0;
  b.support[Battery::kMacro] = macro_n;
  b.value[Battery::kWeightedAvg] =
      cross_support > 0.0 ? cross_weighted / cross_support : 0.0;
  b.qualified[Battery::kWeightedAvg] = cross_support > 0.0;
  b.support[Battery::kWeightedAvg] = static_cast<long>(cross_support);
  return b;
}

struct Aligned {
  std::vector<std::string> ids;
  Labels pred;
  Labels gold;
  std::optional<Labels> baseline;
};

Labels align_to(const std::vector<label::LabelRecord>& records,
                const std::vector<std::string>& gold_ids, const char* what) {
  std::map<std::string, const label::LabelRecord*> by_id;
  for (const auto& r : records) {
    if (!by_id.emplace(r.report_id, &r).second) {
      throw EvalError(EvalError::Code::MisalignedCorpora,
                      std::string(what) + " contains duplicate report_id '" +
                          r.report_id + "'");
    }
  }
  std::vector<std::string> missing;
  Labels out;
  out.reserve(gold_ids.size());
  for (const auto& id : gold_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
      continue;
    }
    out.push_back(it->second->labels);
    by_id.erase(it);
  }
  if (!missing.empty() || !by_id.empty()) {
    std::string msg = std::string(what) + " is misaligned with gold;";
    if (!missing.empty()) msg += " missing: " + join(missing, ", ") + ";";
    if (!by_id.empty()) {
      std::vector<std::string> extra;
      for (const auto& [id, r] : by_id) extra.push_back(id);
      msg += " extra: " + join(extra, ", ") + ";";
    }
    throw EvalError(EvalError::Code::MisalignedCorpora, msg);
  }
  return out;
}

Aligned align(const std::vector<label::LabelRecord>& pred,
              const std::vector<label::LabelRecord>& gold,
              const std::optional<std::vector<label::LabelRecord>>& baseline) {
  if (gold.empty()) {
    throw EvalError(EvalError::Code::EmptyCorpus, "gold corpus is empty");
  }
  Aligned a;
  std::set<std::string> seen;
  for (const auto& r : gold) {
    if (!seen.insert(r.report_id).second) {
      throw EvalError(EvalError::Code::MisalignedCorpora,
                      "gold contains duplicate report_id '" + r.report_id + "'");
    }
    a.ids.push_back(r.report_id);
    a.gold.push_back(r.labels);
  }
  a.pred = align_to(pred, a.ids, "pred");
  if (baseline) a.baseline = align_to(*baseline, a.ids, "baseline");
  return a;
}

ScoreCell make_cell(const Battery& point, const std::vector<Battery>& reps,
                    const std::vector<Battery>* base_reps, const Battery* base_point,
                    std::size_t cell, double alpha) {
  ScoreCell out;
  out.f1 = point.value[cell];
  out.support = point.support[cell];

  std::vector<double> kept;
  kept.reserve(reps.size());
  for (const auto& r : reps) {
    if (r.qualified[cell]) kept.push_back(r.value[cell]);
  }
  out.boot = summarize(std::move(kept), alpha, out.f1);

  if (base_reps && base_point) {
    Improvement imp;
    imp.value = improvement(point.value[cell], base_point->value[cell]);
    std::vector<double> diffs(reps.size());
    for (std::size_t r = 0; r < reps.size(); ++r) {
      diffs[r] = improvement(reps[r].value[cell], (*base_reps)[r].value[cell]);
    }
    std::sort(diffs.begin(), diffs.end());
    imp.ci_low = diffs.empty() ? imp.value : percentile(diffs, alpha / 2.0);
    imp.ci_high = diffs.empty() ? imp.value : percentile(diffs, 1.0 - alpha / 2.0);
    out.vs_baseline = imp;
  }
  return out;
}

}  // namespace

EvalReport evaluate(const std::vector<label::LabelRecord>& pred,
                    const std::vector<label::LabelRecord>& gold,
                    const EvalOptions& options) {
  const Aligned a = align(pred, gold, options.baseline);
  const std::size_t n = a.ids.size();
  const auto& bopt = options.bootstrap;

  const Battery point = compute_battery(a.pred, a.gold, [&] {
    std::vector<std::size_t> identity(n);
    for (std::size_t i = 0; i < n; ++i) identity[i] = i;
    return identity;
  }());
  std::optional<Battery> base_point;
  if (a.baseline) base_point = compute_battery(*a.baseline, a.gold, [&] {
    std::vector<std::size_t> identity(n);
    for (std::size_t i = 0; i < n; ++i) identity[i] = i;
    return identity;
  }());

  std::vector<std::vector<std::size_t>> fixed_samples;
  long replicates = bopt.replicates;
  if (bopt.exhaustive) {
    fixed_samples = exhaustive_samples(n);
    replicates = static_cast<long>(fixed_samples.size());
  }
  if (replicates < 1) {
    throw EvalError(EvalError::Code::EmptyCorpus, "replicates must be >= 1");
  }

  std::vector<Battery> reps(static_cast<std::size_t>(replicates));
  std::vector<Battery> base_reps(a.baseline ? static_cast<std::size_t>(replicates) : 0);
  parallel_for_indexed(static_cast<std::size_t>(replicates), bopt.jobs,
                       [&](std::size_t r) {
                         const auto sample =
                             bopt.exhaustive
                                 ? fixed_samples[r]
                                 : bootstrap_sample(bopt.seed,
                                                    static_cast<long>(r), n);
                         reps[r] = compute_battery(a.pred, a.gold, sample);
                         if (a.baseline) {
                           base_reps[r] =
                               compute_battery(*a.baseline, a.gold, sample);
                         }
                       });

  EvalReport report;
  report.report_ids = a.ids;
  report.replicates = replicates;
  report.seed = bopt.seed;
  report.alpha = bopt.alpha;
  report.exhaustive = bopt.exhaustive;

  const std::vector<Battery>* brp = a.baseline ? &base_reps : nullptr;
  const Battery* bpp = base_point ? &*base_point : nullptr;

  std::vector<label::LabelRecord> pr(n), gr(n);
  for (std::size_t i = 0; i < n; ++i) {
    pr[i].report_id = a.ids[i];
    pr[i].labels = a.pred[i];
    gr[i].report_id = a.ids[i];
    gr[i].labels = a.gold[i];
  }

  for (std::size_t p = 0; p < kPathologyCount; ++p) {
    auto& pe = report.per_pathology[p];
    for (SubTask t : kAllSubTasks) {
      pe.subtask[static_cast<std::size_t>(t)] =
          make_cell(point, reps, brp, bpp, Battery::subtask_cell(p, t), bopt.alpha);
    }
    pe.weighted =
        make_cell(point, reps, brp, bpp, Battery::weighted_cell(p), bopt.alpha);
    pe.confusion = confusion_matrix(pr, gr, all_pathologies()[p]);
  }
  report.macro_avg = make_cell(point, reps, brp, bpp, Battery::kMacro, bopt.alpha);
  report.weighted_avg =
      make_cell(point, reps, brp, bpp, Battery::kWeightedAvg, bopt.alpha);
  return report;
}

namespace {

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

ordered_json improvement_json(const Improvement& imp) {
  auto encode = [](double v) -> ordered_json {
    if (std::isinf(v)) return "Inf.";
    return v;
  };
  ordered_json j;
  j["percent"] = encode(imp.value);
  j["ci_low"] = encode(imp.ci_low);
  j["ci_high"] = encode(imp.ci_high);
  return j;
}

ordered_json cell_json(const ScoreCell& c) {
  ordered_json j;
  j["f1"] = c.f1;
  j["support"] = c.support;
  j["boot_mean"] = c.boot.mean;
  j["ci_low"] = c.boot.ci_low;
  j["ci_high"] = c.boot.ci_high;
  if (c.vs_baseline) j["improvement"] = improvement_json(*c.vs_baseline);
  return j;
}

std::string cell_table(const ScoreCell& c) {
  std::string out = fmt3(c.boot.mean) + "  (" + fmt3(c.boot.ci_low) + ", " +
                    fmt3(c.boot.ci_high) + ")";
  if (c.vs_baseline) {
    out += "  " + format_improvement(c.vs_baseline->value) + " (" +
           format_improvement(c.vs_baseline->ci_low) + ", " +
           format_improvement(c.vs_baseline->ci_high) + ")";
  }
  return out;
}

}  // namespace

std::string render_json(const EvalReport& report) {
  ordered_json j;
  j["reports"] = report.report_ids.size();
  j["replicates"] = report.replicates;
  j["seed"] = report.seed;
  j["alpha"] = report.alpha;
  j["exhaustive"] = report.exhaustive;

  ordered_json paths = ordered_json::object();
  for (std::size_t p = 0; p < kPathologyCount; ++p) {
    const auto& pe = report.per_pathology[p];
    ordered_json pj;
    ordered_json subtasks = ordered_json::object();
    for (SubTask t : kAllSubTasks) {
      subtasks[std::string(subtask_name(t))] =
          cell_json(pe.subtask[static_cast<std::size_t>(t)]);
    }
    pj["subtasks"] = std::move(subtasks);
    pj["weighted"] = cell_json(pe.weighted);
    ordered_json conf = ordered_json::array();
    for (const auto& row : pe.confusion) {
      conf.push_back({row[0], row[1], row[2], row[3]});
    }
    pj["confusion"] = std::move(conf);
    paths[std::string(pathology_name(all_pathologies()[p]))] = std::move(pj);
  }
  j["pathologies"] = std::move(paths);
  j["macro_avg"] = cell_json(report.macro_avg);
  j["weighted_avg"] = cell_json(report.weighted_avg);
  return j.dump(2) + "\n";
}

std::string render_table(const EvalReport& report) {
  std::ostringstream out;
  out << "Weighted F1 per pathology (bootstrap mean, 95% CI";
  if (report.weighted_avg.vs_baseline) out << "; improvement vs baseline";
  out << ")\n\n";

  auto row = [&](const std::string& name, const ScoreCell& c) {
    out << name;
    for (std::size_t i = name.size(); i < 28; ++i) out << ' ';
    out << cell_table(c) << "  support=" << c.support << '\n';
  };

  for (std::size_t p = 0; p < kPathologyCount; ++p) {
    row(std::string(pathology_name(all_pathologies()[p])),
        report.per_pathology[p].weighted);
  }
  row("Macro Avg.", report.macro_avg);
  row("Weighted Avg.", report.weighted_avg);

  for (SubTask t : kAllSubTasks) {
    out << "\n[" << subtask_name(t) << "]\n";
    for (std::size_t p = 0; p < kPathologyCount; ++p) {
      row(std::string(pathology_name(all_pathologies()[p])),
          report.per_pathology[p].subtask[static_cast<std::size_t>(t)]);
    }
  }
  return out.str();
}

std::string render_confusion_csv(const EvalReport& report) {
  static const char* kClassNames[4] = {"Null", "Negative", "Uncertain", "Positive"};
  std::ostringstream out;
  out << "pathology,gold,Null,Negative,Uncertain,Positive\n";
  for (std::size_t p = 0; p < kPathologyCount; ++p) {
    for (std::size_t g = 0; g < 4; ++g) {
      out << pathology_name(all_pathologies()[p]) << ',' << kClassNames[g];
      for (std::size_t c = 0; c < 4; ++c) {
        out << ',' << report.per_pathology[p].confusion[g][c];
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace radpert::eval
