#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "radpert/eval.hpp"
#include "radpert/labeler.hpp"

using namespace radpert;
using eval::BootstrapOptions;
using eval::EvalError;
using eval::SubTask;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing fixture ", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<label::LabelRecord> records_from(const std::string& file) {
  return label::labels_from_csv(slurp(std::string(RADPERT_DATA_DIR) + "/" + file));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("binarization hits exactly one positive class per sub-task") {
  using UC = UncertaintyClass;
  struct Cell { UC c; SubTask t; bool expected; };
  const Cell cells[] = {
      {UC::Null, SubTask::Mention, true},
      {UC::Null, SubTask::Negation, false},
      {UC::Null, SubTask::PositiveMention, false},
      {UC::Null, SubTask::Uncertainty, false},
      {UC::Negative, SubTask::Mention, false},
      {UC::Negative, SubTask::Negation, true},
      {UC::Negative, SubTask::PositiveMention, false},
      {UC::Negative, SubTask::Uncertainty, false},
      {UC::Uncertain, SubTask::Mention, false},
      {UC::Uncertain, SubTask::Negation, false},
      {UC::Uncertain, SubTask::PositiveMention, false},
      {UC::Uncertain, SubTask::Uncertainty, true},
      {UC::Positive, SubTask::Mention, false},
      {UC::Positive, SubTask::Negation, false},
      {UC::Positive, SubTask::PositiveMention, true},
      {UC::Positive, SubTask::Uncertainty, false},
  };
  for (const auto& cell : cells) {
    CHECK(eval::binarize(cell.c, cell.t) == cell.expected);
  }
}

TEST_CASE("f1 from counts") {
  eval::ConfusionCounts c;
  c.tp = 2; c.fp = 1; c.fn = 1;
  CHECK(eval::f1(c) == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
  eval::ConfusionCounts zero;
  CHECK(eval::f1(zero) == 0.0);  // 0/0 convention
  eval::ConfusionCounts fn_only;
  fn_only.fn = 3;
  CHECK(eval::f1(fn_only) == 0.0);
}

TEST_CASE("weighted f1 uses supports as weights") {
  std::array<eval::SubTaskScore, 3> scores{{{1.0, 8}, {0.0, 5}, {0.5, 2}}};
  CHECK(eval::weighted_f1(scores) == doctest::Approx(0.6).epsilon(1e-15));

  std::array<eval::SubTaskScore, 3> empty{{{1.0, 0}, {1.0, 0}, {1.0, 0}}};
  CHECK_THROWS_AS((void)eval::weighted_f1(empty), EvalError);
}

TEST_CASE("percentile interpolates between order statistics") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(eval::percentile(v, 0.0) == 1.0);
  CHECK(eval::percentile(v, 1.0) == 4.0);
  CHECK(eval::percentile(v, 0.5) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(eval::percentile(v, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(eval::percentile({7.0}, 0.3) == 7.0);

  // infinite endpoints never produce NaN
  const std::vector<double> inf_tail{0.0, 0.0, kInf};
  CHECK(eval::percentile(inf_tail, 0.025) == 0.0);
  CHECK(eval::percentile(inf_tail, 0.975) == kInf);
}

TEST_CASE("six-report fixture matches hand-computed metrics to 1e-12") {
  const auto pred = records_from("eval_six_pred.csv");
  const auto gold = records_from("eval_six_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.replicates = 20;
  const auto report = eval::evaluate(pred, gold, opt);

  const auto& atel = report.per_pathology[pathology_index(Pathology::Atelectasis)];
  CHECK(atel.subtask[1].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(atel.subtask[1].support == 1);
  CHECK(atel.subtask[2].f1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(atel.subtask[2].support == 2);
  CHECK(atel.subtask[3].f1 == 0.0);
  CHECK(atel.subtask[3].support == 1);
  CHECK(atel.subtask[0].f1 == 1.0);  // mention: both nulls found
  CHECK(atel.weighted.f1 == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
  CHECK(atel.weighted.support == 4);

  const auto& card = report.per_pathology[pathology_index(Pathology::Cardiomegaly)];
  CHECK(card.weighted.f1 == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(card.weighted.support == 3);

  // Edema has no gold support anywhere: excluded from both averages
  const auto& edema = report.per_pathology[pathology_index(Pathology::Edema)];
  CHECK(edema.weighted.support == 0);

  CHECK(report.macro_avg.f1 ==
        doctest::Approx((5.0 / 12.0 + 8.0 / 9.0) / 2.0).epsilon(1e-12));
  CHECK(report.weighted_avg.f1 ==
        doctest::Approx(13.0 / 21.0).epsilon(1e-12));
  CHECK(report.weighted_avg.support == 7);
}

TEST_CASE("confusion matrix rows sum to gold class counts") {
  const auto pred = records_from("eval_six_pred.csv");
  const auto gold = records_from("eval_six_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.replicates = 5;
  const auto report = eval::evaluate(pred, gold, opt);

  const auto& atel =
      report.per_pathology[pathology_index(Pathology::Atelectasis)].confusion;
  const long expected_rows[4] = {2, 1, 1, 2};  // null, neg, unc, pos in gold
  for (int g = 0; g < 4; ++g) {
    long sum = 0;
    for (int p = 0; p < 4; ++p) sum += atel[g][p];
    CHECK(sum == expected_rows[g]);
  }

  const auto norm = eval::normalize_confusion(atel);
  for (int g = 0; g < 4; ++g) {
    double sum = 0;
    for (int p = 0; p < 4; ++p) sum += norm[g][p];
    if (expected_rows[g] > 0) CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap sampling is deterministic and in bounds") {
  const auto a = eval::bootstrap_sample(42, 7, 10);
  const auto b = eval::bootstrap_sample(42, 7, 10);
  CHECK(a == b);
  CHECK(a.size() == 10);
  for (auto i : a) CHECK(i < 10);
  CHECK(eval::bootstrap_sample(42, 8, 10) != a);
  CHECK(eval::bootstrap_sample(43, 7, 10) != a);
}

TEST_CASE("exhaustive enumeration covers all n^n resamples") {
  const auto samples = eval::exhaustive_samples(3);
  REQUIRE(samples.size() == 27);
  std::vector<std::vector<std::size_t>> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  for (const auto& s : samples) {
    CHECK(s.size() == 3);
    for (auto i : s) CHECK(i < 3);
  }
  CHECK(eval::exhaustive_samples(1).size() == 1);
  CHECK_THROWS_AS((void)eval::exhaustive_samples(6), EvalError);
}

TEST_CASE("bootstrap_score over exhaustive samples matches closed form") {
  const double values[] = {1.0, 2.0, 3.0};
  BootstrapOptions opt;
  opt.exhaustive = true;
  const auto r = eval::bootstrap_score(
      3,
      [&](const std::vector<std::size_t>& s) {
        double sum = 0;
        for (auto i : s) sum += values[i];
        return sum / 3.0;
      },
      opt);
  CHECK(r.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.ci_low == doctest::Approx(1.0 + 0.65 / 3.0).epsilon(1e-12));
  CHECK(r.ci_high == doctest::Approx(8.0 / 3.0 + 0.35 / 3.0).epsilon(1e-12));
}

TEST_CASE("bootstrap_score drops NaN replicates and falls back when empty") {
  BootstrapOptions opt;
  opt.exhaustive = true;
  const auto conditional = eval::bootstrap_score(
      2,
      [](const std::vector<std::size_t>& s) {
        const bool has0 =
            std::find(s.begin(), s.end(), std::size_t{0}) != s.end();
        return has0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
      },
      opt);
  CHECK(conditional.mean == 1.0);
  CHECK(conditional.ci_low == 1.0);
  CHECK(conditional.ci_high == 1.0);

  const auto empty = eval::bootstrap_score(
      2, [](const std::vector<std::size_t>&) {
        return std::numeric_limits<double>::quiet_NaN();
      },
      opt, 0.5);
  CHECK(empty.mean == 0.5);
  CHECK(empty.ci_low == 0.5);
  CHECK(empty.ci_high == 0.5);
}

TEST_CASE("bootstrap runs identically across worker counts") {
  const auto pred = records_from("eval_six_pred.csv");
  const auto gold = records_from("eval_six_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.replicates = 300;
  opt.bootstrap.jobs = 1;
  const auto a = eval::evaluate(pred, gold, opt);
  opt.bootstrap.jobs = 4;
  const auto b = eval::evaluate(pred, gold, opt);
  CHECK(eval::render_json(a) == eval::render_json(b));
}

TEST_CASE("perfect predictions give mean one and degenerate intervals") {
  const auto gold = records_from("synthetic_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.replicates = 60;
  const auto report = eval::evaluate(gold, gold, opt);
  CHECK(report.weighted_avg.f1 == 1.0);
  CHECK(report.weighted_avg.boot.mean == 1.0);
  CHECK(report.weighted_avg.boot.ci_low == 1.0);
  CHECK(report.weighted_avg.boot.ci_high == 1.0);
  CHECK(report.macro_avg.boot.mean == 1.0);
  for (Pathology p : all_pathologies()) {
    const auto& cell = report.per_pathology[pathology_index(p)].weighted;
    CHECK(cell.boot.mean == 1.0);
    CHECK(cell.boot.ci_low == 1.0);
    CHECK(cell.boot.ci_high == 1.0);
  }
}

TEST_CASE("exhaustive evaluate matches a direct enumeration oracle") {
  const auto pred = records_from("improve_new.csv");
  const auto gold = records_from("improve_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.exhaustive = true;
  const auto report = eval::evaluate(pred, gold, opt);
  CHECK(report.replicates == 27);

  const auto i = pathology_index(Pathology::Cardiomegaly);
  const auto samples = eval::exhaustive_samples(3);
  for (SubTask t : eval::kAllSubTasks) {
    std::vector<double> qualified;
    for (const auto& s : samples) {
      eval::ConfusionCounts c;
      long support = 0;
      for (auto idx : s) {
        const bool g = eval::binarize(gold[idx].labels[i], t);
        const bool p = eval::binarize(pred[idx].labels[i], t);
        if (g && p) ++c.tp;
        if (!g && p) ++c.fp;
        if (g && !p) ++c.fn;
        if (g) ++support;
      }
      if (support > 0) qualified.push_back(eval::f1(c));
    }
    const auto& cell = report.per_pathology[i].subtask[static_cast<int>(t)];
    if (qualified.empty()) {
      CHECK(cell.boot.mean == cell.f1);
    } else {
      std::sort(qualified.begin(), qualified.end());
      double mean = 0;
      for (double v : qualified) mean += v;
      mean /= static_cast<double>(qualified.size());
      CHECK(cell.boot.mean == mean);
      CHECK(cell.boot.ci_low == eval::percentile(qualified, 0.025));
      CHECK(cell.boot.ci_high == eval::percentile(qualified, 0.975));
    }
  }
}

TEST_CASE("improvement percentages and rendering") {
  CHECK(eval::improvement(0.816, 0.789) ==
        doctest::Approx(3.4220532319391634).epsilon(1e-9));
  CHECK(eval::improvement(0.5, 0.0) == kInf);
  CHECK(eval::improvement(0.0, 0.0) == 0.0);
  CHECK(eval::improvement(0.4, 0.5) == doctest::Approx(-20.0).epsilon(1e-12));

  CHECK(eval::format_improvement(kInf) == "Inf.");
  CHECK(eval::format_improvement(3.4220532319391634) == "3.4");
  CHECK(eval::format_improvement(0.0) == "0.0");
  CHECK(eval::format_improvement(-20.0) == "-20.0");
}

TEST_CASE("zero baseline yields Inf improvement with (0.0, Inf.) interval") {
  const auto pred = records_from("improve_new.csv");
  const auto gold = records_from("improve_gold.csv");
  eval::EvalOptions opt;
  opt.baseline = records_from("improve_base.csv");
  opt.bootstrap.exhaustive = true;
  const auto report = eval::evaluate(pred, gold, opt);

  const auto i = pathology_index(Pathology::Cardiomegaly);
  const auto& cell =
      report.per_pathology[i].subtask[static_cast<int>(SubTask::PositiveMention)];
  REQUIRE(cell.vs_baseline.has_value());
  CHECK(cell.vs_baseline->value == kInf);
  CHECK(cell.vs_baseline->ci_low == 0.0);
  CHECK(cell.vs_baseline->ci_high == kInf);

  const auto table = eval::render_table(report);
  CHECK(table.find("Inf. (0.0, Inf.)") != std::string::npos);
}

TEST_CASE("misaligned corpora are rejected with the offending ids") {
  const auto gold = records_from("eval_six_gold.csv");
  auto pred = gold;
  pred.pop_back();
  label::LabelRecord extra;
  extra.report_id = "zz";
  pred.push_back(extra);
  try {
    (void)eval::evaluate(pred, gold, {});
    FAIL("expected EvalError");
  } catch (const EvalError& e) {
    CHECK(e.code() == EvalError::Code::MisalignedCorpora);
    CHECK(std::string(e.what()).find("r6") != std::string::npos);
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }
}

TEST_CASE("renderers produce their documented layouts") {
  const auto pred = records_from("eval_six_pred.csv");
  const auto gold = records_from("eval_six_gold.csv");
  eval::EvalOptions opt;
  opt.bootstrap.replicates = 10;
  const auto report = eval::evaluate(pred, gold, opt);

  const auto table = eval::render_table(report);
  CHECK(table.find("Weighted Avg.") != std::string::npos);
  CHECK(table.find("[negation]") != std::string::npos);

  const auto csv = eval::render_confusion_csv(report);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 1 + 13 * 4);
  CHECK(csv.rfind("pathology,gold,Null,Negative,Uncertain,Positive\n", 0) == 0);

  const auto json = eval::render_json(report);
  CHECK(json.find("\"weighted_avg\"") != std::string::npos);
  CHECK(json.back() == '\n');
}

}  // TEST_SUITE
