#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "pdls/errors.hpp"
#include "pdls/evaluation.hpp"
#include "pdls/hierarchy.hpp"
#include "pdls/rng.hpp"

using namespace pdls;

namespace {

// Independent AUC oracle: count concordant pairs directly, ties worth 1/2.
double pairwise_auc(const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& positives) {
  double num = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positives[i]) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positives[j]) continue;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  for (std::uint8_t p : positives) n_neg += p ? 0 : 1;
  return num / (double(n_pos) * double(n_neg));
}

void check_curve_shape(const ROCCurve& c) {
  REQUIRE(c.points.size() >= 2);
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
    CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
  }
}

ConfidenceVector make_cv(double suspect, double high_rest, double int_rest,
                         double high_int, std::array<double, 4> rest4) {
  ConfidenceVector v;
  v.samples = 1;
  v.heads.push_back({"suspect_vs_rest", {"rest", "suspect"}, {1.0 - suspect, suspect}});
  v.heads.push_back({"high_vs_int", {"mel_int", "mel_high"}, {1.0 - high_int, high_int}});
  v.heads.push_back({"high_vs_rest", {"rest", "mel_high"}, {1.0 - high_rest, high_rest}});
  v.heads.push_back({"int_vs_rest", {"rest", "mel_int"}, {1.0 - int_rest, int_rest}});
  v.heads.push_back({"rest4",
                     {"basaloid", "squamous", "mel_low", "other"},
                     {rest4[0], rest4[1], rest4[2], rest4[3]}});
  return v;
}

FinalLabel fl(FinalClass c, bool low_conf = false) { return FinalLabel{c, low_conf}; }

const MetricsRow& row_of(const std::vector<MetricsRow>& rows, const std::string& label) {
  for (const MetricsRow& r : rows)
    if (r.label == label) return r;
  REQUIRE_MESSAGE(false, "missing row " << label);
  static MetricsRow dummy;
  return dummy;
}

} // namespace

TEST_CASE("roc_binary reproduces the worked four-point example") {
  const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> pos = {0, 0, 1, 1};
  const ROCCurve c = roc_binary(scores, pos);
  CHECK(c.auc == 0.75);

  // Sweep thresholds 0.8, 0.4, 0.35, 0.1 with predict-positive at score >= t.
  const std::vector<ROCPoint> expected = {
      {0.0, 0.0}, {0.0, 0.5}, {0.5, 0.5}, {0.5, 1.0}, {1.0, 1.0}};
  REQUIRE(c.points.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(c.points[i].fpr == expected[i].fpr);
    CHECK(c.points[i].tpr == expected[i].tpr);
  }
}

TEST_CASE("roc_binary endpoints: perfect, inverted, and all-tied scores") {
  const std::vector<std::uint8_t> pos = {0, 0, 1, 1};
  CHECK(roc_binary({0.1, 0.2, 0.8, 0.9}, pos).auc == 1.0);
  CHECK(roc_binary({0.9, 0.8, 0.2, 0.1}, pos).auc == 0.0);

  const ROCCurve tied = roc_binary({0.5, 0.5, 0.5, 0.5}, pos);
  CHECK(tied.auc == 0.5);
  // One distinct threshold: the curve jumps straight to (1,1).
  REQUIRE(tied.points.size() == 2);
  CHECK(tied.points[1].fpr == 1.0);
  CHECK(tied.points[1].tpr == 1.0);
}

TEST_CASE("roc_binary input validation") {
  CHECK_THROWS_AS(roc_binary({}, {}), InvalidInputError);
  CHECK_THROWS_AS(roc_binary({0.1, 0.2}, {1}), ShapeError);
  CHECK_THROWS_AS(roc_binary({0.1, 0.2}, {1, 1}), DegenerateLabelsError);
  CHECK_THROWS_AS(roc_binary({0.1, 0.2}, {0, 0}), DegenerateLabelsError);
}

TEST_CASE("roc_binary matches the pairwise-counting oracle on random inputs") {
  Rng rng(20250811);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + std::size_t(rng.uniform_int(99));
    std::vector<double> scores(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Quantize to k/8 so ties appear often.
      scores[i] = double(rng.uniform_int(9)) / 8.0;
      pos[i] = std::uint8_t(rng.uniform_int(2));
    }
    pos[0] = 1; // force both classes
    pos[1] = 0;
    const ROCCurve c = roc_binary(scores, pos);
    CHECK(std::abs(c.auc - pairwise_auc(scores, pos)) <= 1e-12);
    check_curve_shape(c);
  }
}

TEST_CASE("roc_binary is invariant under strictly monotone score transforms") {
  Rng rng(515253);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(30);
    std::vector<std::uint8_t> pos(30);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = double(rng.uniform_int(7)) / 4.0;
      pos[i] = std::uint8_t(rng.uniform_int(2));
    }
    pos[0] = 1;
    pos[1] = 0;
    std::vector<double> warped(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) warped[i] = std::exp(scores[i]);
    CHECK(roc_binary(scores, pos).auc == roc_binary(warped, pos).auc);
  }
}

TEST_CASE("hierarchy_roc emits the seven read-outs, each matching roc_binary") {
  // Two specimens per class with hand-picked confidences.
  std::vector<ConfidenceVector> cvs;
  std::vector<SpecimenClass> truths;
  Rng rng(774411);
  const std::array<SpecimenClass, 6> order = kAllClasses;
  for (SpecimenClass cls : order) {
    for (int rep = 0; rep < 3; ++rep) {
      const double s = rng.uniform01();
      const double hr = rng.uniform01();
      const double ir = rng.uniform01();
      const double hi = rng.uniform01();
      double r0 = 0.1 + rng.uniform01(), r1 = 0.1 + rng.uniform01();
      double r2 = 0.1 + rng.uniform01(), r3 = 0.1 + rng.uniform01();
      const double z = r0 + r1 + r2 + r3;
      cvs.push_back(make_cv(s, hr, ir, hi, {r0 / z, r1 / z, r2 / z, r3 / z}));
      truths.push_back(cls);
    }
  }

  const std::map<std::string, ROCCurve> out = hierarchy_roc(cvs, truths);
  const std::set<std::string> expected_keys = {"basaloid", "squamous", "mel_low",
                                               "other",    "mel_high", "mel_int",
                                               "mel_suspect"};
  std::set<std::string> got;
  for (const auto& [k, v] : out) got.insert(k);
  CHECK(got == expected_keys);

  auto recheck = [&](const std::string& key, auto&& score_fn, auto&& pos_fn) {
    std::vector<double> s;
    std::vector<std::uint8_t> p;
    for (std::size_t i = 0; i < cvs.size(); ++i) {
      s.push_back(score_fn(cvs[i]));
      p.push_back(pos_fn(truths[i]) ? 1 : 0);
    }
    const ROCCurve oracle = roc_binary(s, p);
    CHECK(out.at(key).auc == oracle.auc);
    REQUIRE(out.at(key).points.size() == oracle.points.size());
    for (std::size_t i = 0; i < oracle.points.size(); ++i) {
      CHECK(out.at(key).points[i].fpr == oracle.points[i].fpr);
      CHECK(out.at(key).points[i].tpr == oracle.points[i].tpr);
    }
  };

  for (std::size_t c = 0; c < kRestClasses.size(); ++c) {
    const SpecimenClass cls = kRestClasses[c];
    recheck(std::string(class_id(cls)),
            [&](const ConfidenceVector& v) { return v.head("rest4").mean_probs[c]; },
            [cls](SpecimenClass t) { return t == cls; });
  }
  recheck("mel_high",
          [](const ConfidenceVector& v) { return v.prob("high_vs_rest", "mel_high"); },
          [](SpecimenClass t) { return t == SpecimenClass::MelHigh; });
  recheck("mel_int",
          [](const ConfidenceVector& v) { return v.prob("int_vs_rest", "mel_int"); },
          [](SpecimenClass t) { return t == SpecimenClass::MelInt; });
  recheck("mel_suspect",
          [](const ConfidenceVector& v) { return v.prob("suspect_vs_rest", "suspect"); },
          [](SpecimenClass t) {
            return t == SpecimenClass::MelInt || t == SpecimenClass::MelHigh;
          });
}

TEST_CASE("hierarchy_roc input validation") {
  std::vector<ConfidenceVector> cvs = {make_cv(0.5, 0.5, 0.5, 0.5, {0.25, 0.25, 0.25, 0.25})};
  CHECK_THROWS_AS(hierarchy_roc({}, {}), InvalidInputError);
  CHECK_THROWS_AS(hierarchy_roc(cvs, {SpecimenClass::Other, SpecimenClass::MelLow}),
                  ShapeError);
}

TEST_CASE("confusion_metrics strict mode scores exact final labels") {
  // Three mel_high calls against truths High, High, Low.
  const std::vector<FinalLabel> preds = {fl(FinalClass::MelHigh), fl(FinalClass::MelHigh),
                                         fl(FinalClass::MelHigh)};
  const std::vector<SpecimenClass> truths = {SpecimenClass::MelHigh,
                                             SpecimenClass::MelHigh,
                                             SpecimenClass::MelLow};
  const std::vector<MetricsRow> rows = confusion_metrics(preds, truths, MetricMode::Strict);
  REQUIRE(rows.size() == kAllClasses.size());
  for (std::size_t i = 0; i < kAllClasses.size(); ++i)
    CHECK(rows[i].label == class_id(kAllClasses[i]));

  const MetricsRow& high = row_of(rows, "mel_high");
  CHECK(high.ppv == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(high.sensitivity == 1.0);
  CHECK(high.support == 2);
  CHECK(high.f1 == doctest::Approx(0.8).epsilon(1e-12));
  // specificity: 1 truth-negative, 1 false positive -> 0.
  CHECK(high.balanced_accuracy == doctest::Approx(0.5).epsilon(1e-12));

  const MetricsRow& low = row_of(rows, "mel_low");
  CHECK(low.sensitivity == 0.0);
  CHECK(low.ppv == 0.0); // no mel_low calls at all
  CHECK(low.support == 1);
  CHECK(low.f1 == 0.0);

  // A class absent from both preds and truths: all-zero except specificity.
  const MetricsRow& other = row_of(rows, "other");
  CHECK(other.support == 0);
  CHECK(other.ppv == 0.0);
  CHECK(other.sensitivity == 0.0);
  CHECK(other.balanced_accuracy == 0.5);
}

TEST_CASE("strict mode counts the suspect fallback as a miss for every class") {
  const std::vector<FinalLabel> preds = {fl(FinalClass::MelSuspect),
                                         fl(FinalClass::MelSuspect)};
  const std::vector<SpecimenClass> truths = {SpecimenClass::MelHigh,
                                             SpecimenClass::MelInt};
  const std::vector<MetricsRow> rows = confusion_metrics(preds, truths, MetricMode::Strict);
  CHECK(row_of(rows, "mel_high").sensitivity == 0.0);
  CHECK(row_of(rows, "mel_int").sensitivity == 0.0);
  for (const MetricsRow& r : rows) CHECK(r.ppv == 0.0);
}

TEST_CASE("suspect-credit mode collapses the melanocytic upgrade path") {
  const std::vector<FinalLabel> preds = {
      fl(FinalClass::MelSuspect), fl(FinalClass::MelHigh),  fl(FinalClass::MelInt),
      fl(FinalClass::Basaloid),   fl(FinalClass::MelSuspect)};
  const std::vector<SpecimenClass> truths = {
      SpecimenClass::MelHigh, SpecimenClass::MelInt, SpecimenClass::MelHigh,
      SpecimenClass::MelInt,  SpecimenClass::Other};
  const std::vector<MetricsRow> rows =
      confusion_metrics(preds, truths, MetricMode::SuspectCredit);
  REQUIRE(rows.size() == kRestClasses.size() + 1);
  CHECK(rows.back().label == "mel_suspect");

  // Truth suspects: 4 (two High, two Int); suspect-flavored preds hit 3 of
  // them, plus one false alarm on the Other specimen.
  const MetricsRow& s = rows.back();
  CHECK(s.support == 4);
  CHECK(s.sensitivity == 0.75);
  CHECK(s.ppv == 0.75);
}

TEST_CASE("confusion metrics properties over random label sets") {
  Rng rng(6060842);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + std::size_t(rng.uniform_int(60));
    std::vector<FinalLabel> preds(n);
    std::vector<SpecimenClass> truths(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i].cls = FinalClass(int(rng.uniform_int(7))); // includes MelSuspect
      truths[i] = kAllClasses[std::size_t(rng.uniform_int(6))];
    }
    const std::vector<MetricsRow> rows =
        confusion_metrics(preds, truths, MetricMode::Strict);
    std::size_t support_total = 0;
    for (const MetricsRow& r : rows) {
      support_total += r.support;
      CHECK(r.ppv >= 0.0);
      CHECK(r.ppv <= 1.0);
      CHECK(r.sensitivity >= 0.0);
      CHECK(r.sensitivity <= 1.0);
    }
    CHECK(support_total == n); // every truth lands in exactly one strict row
  }
  CHECK_THROWS_AS(confusion_metrics({fl(FinalClass::Other)}, {}, MetricMode::Strict),
                  ShapeError);
}

TEST_CASE("diagnosis report scores each named diagnosis against its class") {
  std::vector<DiagnosisCase> cases;
  // Two melanomas, one called exactly, one deferred to the fallback.
  cases.push_back({fl(FinalClass::MelHigh), SpecimenClass::MelHigh, "Melanoma"});
  cases.push_back({fl(FinalClass::MelSuspect), SpecimenClass::MelHigh, "Melanoma"});
  // A melanoma in situ, called as intermediate.
  cases.push_back({fl(FinalClass::MelInt), SpecimenClass::MelInt, "Melanoma In Situ"});
  // Two low-grade nevi under different names plus an untagged low-grade
  // specimen; the untagged one shares the class so it must stay out of the
  // nevus rows entirely.
  cases.push_back({fl(FinalClass::MelLow), SpecimenClass::MelLow, "Blue Nevus"});
  cases.push_back({fl(FinalClass::Basaloid), SpecimenClass::MelLow, "Compound Nevus"});
  cases.push_back({fl(FinalClass::MelLow), SpecimenClass::MelLow, ""});
  // Untagged negatives from other classes.
  cases.push_back({fl(FinalClass::Other), SpecimenClass::Other, ""});
  cases.push_back({fl(FinalClass::MelHigh), SpecimenClass::Basaloid, ""});

  const std::vector<MetricsRow> rows = diagnosis_report(cases);
  // Alphabetical diagnosis order; Int/High names carry a second row.
  std::vector<std::string> labels;
  for (const MetricsRow& r : rows) labels.push_back(r.label);
  const std::vector<std::string> expected = {
      "Blue Nevus",        "Compound Nevus", "Melanoma", "Melanoma -> mel_suspect",
      "Melanoma In Situ",  "Melanoma In Situ -> mel_suspect"};
  CHECK(labels == expected);

  // Strict melanoma row: one exact hit, one fallback miss, one stray
  // mel_high call on an untagged basaloid.
  const MetricsRow& mel = row_of(rows, "Melanoma");
  CHECK(mel.support == 2);
  CHECK(mel.sensitivity == 0.5);
  CHECK(mel.ppv == 0.5);

  // With suspect credit both melanomas count. False alarms: the stray
  // mel_high on the basaloid, and the in-situ case — different diagnosis,
  // different class, so it stays in scope and its mel_int call lands in the
  // suspect group.
  const MetricsRow& mel_fb = row_of(rows, "Melanoma -> mel_suspect");
  CHECK(mel_fb.support == 2);
  CHECK(mel_fb.sensitivity == 1.0);
  CHECK(mel_fb.ppv == 0.5);

  // Blue Nevus row: the Compound Nevus and the untagged mel_low specimen
  // share the class so they are excluded; the only mel_low call in scope is
  // the true positive.
  const MetricsRow& blue = row_of(rows, "Blue Nevus");
  CHECK(blue.support == 1);
  CHECK(blue.sensitivity == 1.0);
  CHECK(blue.ppv == 1.0);

  // Compound Nevus was called basaloid: a plain miss.
  const MetricsRow& compound = row_of(rows, "Compound Nevus");
  CHECK(compound.support == 1);
  CHECK(compound.sensitivity == 0.0);

  CHECK(diagnosis_report({}).empty());
  CHECK_THROWS_AS(
      diagnosis_report({{fl(FinalClass::Other), SpecimenClass::Other, "Unknowable"}}),
      InvalidInputError);
}

namespace {

std::vector<TriageInput> separated_pool(std::size_t n_suspect, std::size_t n_rest,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TriageInput> pool;
  for (std::size_t i = 0; i < n_suspect; ++i)
    pool.push_back({"s" + std::to_string(i), 0.8 + 0.2 * rng.uniform01(), true});
  for (std::size_t i = 0; i < n_rest; ++i)
    pool.push_back({"r" + std::to_string(i), 0.2 * rng.uniform01(), false});
  return pool;
}

} // namespace

TEST_CASE("triage simulation on a perfectly separated pool") {
  const std::vector<TriageInput> pool = separated_pool(20, 40, 91);
  const std::vector<double> fractions = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  const TriageCurve curve = triage_simulation(pool, 400, 0, fractions, 1234);

  CHECK(curve.caseload == pool.size());
  CHECK(curve.simulations == 400);
  REQUIRE(curve.fractions == fractions);
  REQUIRE(curve.mean_sensitivity.size() == fractions.size());
  REQUIRE(curve.std_sensitivity.size() == fractions.size());

  // Reviewing everything always catches every suspect.
  CHECK(curve.mean_sensitivity.back() == 1.0);
  CHECK(curve.std_sensitivity.back() == 0.0);

  // More review never hurts.
  for (std::size_t i = 1; i < fractions.size(); ++i)
    CHECK(curve.mean_sensitivity[i] >= curve.mean_sensitivity[i - 1]);

  // Suspects fill a third of the pool and sort strictly first, so reviewing
  // half the caseload all but guarantees full sensitivity.
  CHECK(curve.mean_sensitivity[3] >= 0.99);
  CHECK(curve.warnings.empty());
}

TEST_CASE("triage simulation is deterministic in the seed") {
  const std::vector<TriageInput> pool = separated_pool(8, 24, 17);
  const std::vector<double> fractions = {0.2, 0.6};
  const TriageCurve a = triage_simulation(pool, 50, 16, fractions, 777);
  const TriageCurve b = triage_simulation(pool, 50, 16, fractions, 777);
  CHECK(a.mean_sensitivity == b.mean_sensitivity);
  CHECK(a.std_sensitivity == b.std_sensitivity);
  CHECK(a.caseload == 16);

  const TriageCurve c = triage_simulation(pool, 50, 16, fractions, 778);
  CHECK(a.mean_sensitivity != c.mean_sensitivity);
}

TEST_CASE("triage simulation input validation") {
  const std::vector<TriageInput> pool = separated_pool(4, 4, 3);
  const std::vector<double> fr = {0.5};
  CHECK_THROWS_AS(triage_simulation(pool, 0, 0, fr, 1), InvalidInputError);
  CHECK_THROWS_AS(triage_simulation({}, 10, 0, fr, 1), InvalidInputError);
  CHECK_THROWS_AS(triage_simulation(pool, 10, 0, {}, 1), InvalidInputError);
  CHECK_THROWS_AS(triage_simulation(pool, 10, 0, {-0.1}, 1), InvalidInputError);
  CHECK_THROWS_AS(triage_simulation(pool, 10, 0, {1.1}, 1), InvalidInputError);

  std::vector<TriageInput> rest_only;
  for (std::size_t i = 0; i < 10; ++i)
    rest_only.push_back({"r" + std::to_string(i), 0.5, false});
  CHECK_THROWS_WITH_AS(triage_simulation(rest_only, 10, 0, fr, 1),
                       "test pool contains no suspect-class specimens", DataError);
}

TEST_CASE("triage simulation reports caseloads that cannot be filled with suspects") {
  // One suspect needle in a 10000-specimen pool with caseload 1: nearly
  // every simulation exhausts its redraw budget and falls back to the
  // vacuous full-sensitivity convention.
  std::vector<TriageInput> pool;
  pool.push_back({"needle", 1.0, true});
  for (std::size_t i = 0; i < 9999; ++i)
    pool.push_back({"hay" + std::to_string(i), 0.1, false});
  const TriageCurve curve = triage_simulation(pool, 20, 1, {1.0}, 5150);
  CHECK(!curve.warnings.empty());
  CHECK(curve.warnings.front().find("drew no suspects") != std::string::npos);
  CHECK(curve.mean_sensitivity[0] == 1.0);
}

TEST_CASE("default triage fractions sweep the whole percent grid") {
  const std::vector<double> f = default_triage_fractions();
  REQUIRE(f.size() == 101);
  CHECK(f.front() == 0.0);
  CHECK(f.back() == 1.0);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(f[i] == doctest::Approx(double(i) / 100.0).epsilon(1e-15));
}

namespace {

AblationConfig tiny_ablation_config() {
  AblationConfig cfg;
  cfg.train.model.encoder_widths = {10, 8};
  cfg.train.model.attention_dim = 6;
  cfg.train.model.dropout_rate = 0.25;
  cfg.train.fit.adam.lr = 1e-3;
  cfg.train.fit.max_epochs = 5;
  cfg.mc = McConfig{4, 999};
  return cfg;
}

} // namespace

TEST_CASE("ablation with identical variants yields exactly zero deltas") {
  const std::vector<SpecimenBag> data = testutil::small_dataset(6, 10, 4242);
  std::vector<SpecimenBag> variant;
  std::vector<SpecimenBag> test;
  for (const SpecimenBag& b : data) {
    if (b.split == Split::Test)
      test.push_back(b);
    else
      variant.push_back(b);
  }
  REQUIRE(!test.empty());

  const AblationReport report =
      ablation_run(variant, variant, test, {11, 12}, tiny_ablation_config());
  REQUIRE(report.consensus_runs.size() == 2);
  REQUIRE(report.non_consensus_runs.size() == 2);
  CHECK(report.consensus_runs[0].seed == 11);
  CHECK(report.consensus_runs[1].seed == 12);

  CHECK(report.suspect_sensitivity_delta_mean == 0.0);
  CHECK(report.suspect_sensitivity_delta_std == 0.0);
  CHECK(report.high_ppv_delta_mean == 0.0);
  CHECK(report.high_ppv_delta_std == 0.0);
  REQUIRE(report.class_sensitivity_delta_mean.size() == kAllClasses.size());
  for (const auto& [cls, delta] : report.class_sensitivity_delta_mean)
    CHECK(delta == 0.0);
  for (const auto& [cls, sd] : report.class_sensitivity_delta_std) CHECK(sd == 0.0);

  // Same variant + same seed must reproduce identical per-run metrics.
  for (std::size_t i = 0; i < report.consensus_runs.size(); ++i) {
    CHECK(report.consensus_runs[i].suspect_sensitivity ==
          report.non_consensus_runs[i].suspect_sensitivity);
    CHECK(report.consensus_runs[i].high_ppv == report.non_consensus_runs[i].high_ppv);
  }
}

TEST_CASE("ablation rejects leakage and empty inputs") {
  const std::vector<SpecimenBag> data = testutil::small_dataset(6, 10, 881);
  std::vector<SpecimenBag> variant;
  std::vector<SpecimenBag> test;
  for (const SpecimenBag& b : data) {
    if (b.split == Split::Test)
      test.push_back(b);
    else
      variant.push_back(b);
  }
  const AblationConfig cfg = tiny_ablation_config();

  CHECK_THROWS_WITH_AS(ablation_run(variant, variant, test, {}, cfg),
                       "ablation needs at least one seed", InvalidInputError);
  CHECK_THROWS_WITH_AS(ablation_run(variant, variant, {}, {1}, cfg),
                       "ablation needs a shared test set", InvalidInputError);

  std::vector<SpecimenBag> leaky = variant;
  leaky.push_back(test.front());
  try {
    ablation_run(leaky, variant, test, {1}, cfg);
    FAIL("leakage not detected");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(test.front().specimen_id) != std::string::npos);
    CHECK(std::string(e.what()).find("leaks") != std::string::npos);
  }
}
