#include "pdls/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"

namespace pdls {

ROCCurve roc_binary(const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& positives) {
  if (scores.size() != positives.size())
    throw ShapeError("scores and labels must have equal length");
  if (scores.empty()) throw InvalidInputError("empty score list");

  std::size_t n_pos = 0;
  for (std::uint8_t p : positives) n_pos += p ? 1 : 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateLabelsError("AUC undefined: labels contain a single class");

  // Mann-Whitney via average ranks over ascending scores.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j); // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (positives[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  ROCCurve curve;
  curve.auc = (rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1)) /
              (double(n_pos) * double(n_neg));

  // Threshold sweep, descending over distinct scores: predict positive at
  // score >= t.
  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::vector<std::size_t> by_score(order.rbegin(), order.rend()); // descending
  std::size_t idx = 0;
  for (double t : thresholds) {
    while (idx < by_score.size() && scores[by_score[idx]] >= t) {
      if (positives[by_score[idx]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++idx;
    }
    curve.points.push_back({double(fp) / double(n_neg), double(tp) / double(n_pos)});
  }
  if (curve.points.back().fpr != 1.0 || curve.points.back().tpr != 1.0)
    curve.points.push_back({1.0, 1.0});
  return curve;
}

std::map<std::string, ROCCurve> hierarchy_roc(const std::vector<ConfidenceVector>& scores,
                                              const std::vector<SpecimenClass>& truths) {
  if (scores.size() != truths.size())
    throw ShapeError("scores and truths must have equal length");
  if (scores.empty()) throw InvalidInputError("no specimens to score");

  std::map<std::string, ROCCurve> out;
  auto add = [&](const std::string& key, auto&& score_fn, auto&& positive_fn) {
    std::vector<double> s(scores.size());
    std::vector<std::uint8_t> pos(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = score_fn(scores[i]);
      pos[i] = positive_fn(truths[i]) ? 1 : 0;
    }
    out[key] = roc_binary(s, pos);
  };

  for (std::size_t c = 0; c < kRestClasses.size(); ++c) {
    const SpecimenClass cls = kRestClasses[c];
    add(std::string(class_id(cls)),
        [&](const ConfidenceVector& v) { return v.head(kRestHead).mean_probs[c]; },
        [cls](SpecimenClass t) { return t == cls; });
  }
  add(std::string(class_id(SpecimenClass::MelHigh)),
      [](const ConfidenceVector& v) { return v.prob("high_vs_rest", "mel_high"); },
      [](SpecimenClass t) { return t == SpecimenClass::MelHigh; });
  add(std::string(class_id(SpecimenClass::MelInt)),
      [](const ConfidenceVector& v) { return v.prob("int_vs_rest", "mel_int"); },
      [](SpecimenClass t) { return t == SpecimenClass::MelInt; });
  add("mel_suspect",
      [](const ConfidenceVector& v) { return v.prob(kUpstreamHead, "suspect"); },
      [](SpecimenClass t) { return suspect_grouping(t) == SuspectGroup::Suspect; });
  return out;
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

MetricsRow row_from_counts(std::string label, const Counts& c) {
  MetricsRow row;
  row.label = std::move(label);
  row.support = c.tp + c.fn;
  // Zero denominators report as 0 rather than NaN.
  row.ppv = (c.tp + c.fp) ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  row.sensitivity = (c.tp + c.fn) ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  row.f1 = (row.ppv + row.sensitivity > 0.0)
               ? 2.0 * row.ppv * row.sensitivity / (row.ppv + row.sensitivity)
               : 0.0;
  const double specificity = (c.tn + c.fp) ? double(c.tn) / double(c.tn + c.fp) : 0.0;
  row.balanced_accuracy = 0.5 * (row.sensitivity + specificity);
  return row;
}

bool suspect_pred(FinalClass f) {
  return f == FinalClass::MelInt || f == FinalClass::MelHigh ||
         f == FinalClass::MelSuspect;
}

} // namespace

std::vector<MetricsRow> confusion_metrics(const std::vector<FinalLabel>& preds,
                                          const std::vector<SpecimenClass>& truths,
                                          MetricMode mode) {
  if (preds.size() != truths.size())
    throw ShapeError("predictions and truths must have equal length");

  std::vector<MetricsRow> rows;
  auto tally = [&](const std::string& label, auto&& truth_is, auto&& pred_is) {
    Counts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool t = truth_is(truths[i]);
      const bool p = pred_is(preds[i].cls);
      if (t && p) {
        ++c.tp;
      } else if (!t && p) {
        ++c.fp;
      } else if (t && !p) {
        ++c.fn;
      } else {
        ++c.tn;
      }
    }
    rows.push_back(row_from_counts(label, c));
  };

  if (mode == MetricMode::Strict) {
    for (SpecimenClass cls : kAllClasses) {
      tally(std::string(class_id(cls)),
            [cls](SpecimenClass t) { return t == cls; },
            [cls](FinalClass p) { return p == to_final(cls); });
    }
    return rows;
  }

  for (SpecimenClass cls : kRestClasses) {
    tally(std::string(class_id(cls)),
          [cls](SpecimenClass t) { return t == cls; },
          [cls](FinalClass p) { return p == to_final(cls); });
  }
  tally("mel_suspect",
        [](SpecimenClass t) { return suspect_grouping(t) == SuspectGroup::Suspect; },
        [](FinalClass p) { return suspect_pred(p); });
  return rows;
}

std::vector<MetricsRow> diagnosis_report(const std::vector<DiagnosisCase>& cases) {
  std::set<std::string> names;
  for (const DiagnosisCase& c : cases)
    if (!c.diagnosis.empty()) names.insert(c.diagnosis);

  std::vector<MetricsRow> rows;
  for (const std::string& name : names) {
    const SpecimenClass cls = diagnosis_to_class(name); // throws on unknown
    auto tally = [&](const std::string& label, auto&& pred_is) {
      Counts c;
      for (const DiagnosisCase& cse : cases) {
        const bool is_this_diagnosis = cse.diagnosis == name;
        if (!is_this_diagnosis && cse.truth == cls)
          continue; // same class, different diagnosis: out of scope for this row
        const bool p = pred_is(cse.pred.cls);
        if (is_this_diagnosis && p) {
          ++c.tp;
        } else if (!is_this_diagnosis && p) {
          ++c.fp;
        } else if (is_this_diagnosis && !p) {
          ++c.fn;
        } else {
          ++c.tn;
        }
      }
      rows.push_back(row_from_counts(label, c));
    };

    tally(name, [cls](FinalClass p) { return p == to_final(cls); });
    if (suspect_grouping(cls) == SuspectGroup::Suspect)
      tally(name + " -> mel_suspect", [](FinalClass p) { return suspect_pred(p); });
  }
  return rows;
}

std::vector<double> default_triage_fractions() {
  std::vector<double> f(101);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = double(i) / 100.0;
  return f;
}

TriageCurve triage_simulation(const std::vector<TriageInput>& pool, int simulations,
                              std::size_t caseload, const std::vector<double>& fractions,
                              std::uint64_t seed) {
  if (simulations < 1) throw InvalidInputError("need at least one simulation");
  if (pool.empty()) throw InvalidInputError("empty test pool");
  if (fractions.empty()) throw InvalidInputError("empty fraction grid");
  for (double f : fractions)
    if (f < 0.0 || f > 1.0) throw InvalidInputError("review fractions must lie in [0,1]");
  const bool any_suspect =
      std::any_of(pool.begin(), pool.end(), [](const TriageInput& t) { return t.suspect_truth; });
  if (!any_suspect) throw DataError("test pool contains no suspect-class specimens");

  TriageCurve curve;
  curve.fractions = fractions;
  curve.simulations = simulations;
  curve.caseload = caseload == 0 ? pool.size() : caseload;
  curve.mean_sensitivity.assign(fractions.size(), 0.0);
  curve.std_sensitivity.assign(fractions.size(), 0.0);

  constexpr int kResampleCap = 1000;
  std::vector<double> sum(fractions.size(), 0.0);
  std::vector<double> sumsq(fractions.size(), 0.0);

  for (int s = 0; s < simulations; ++s) {
    Rng rng(derive_seed(derive_seed(seed, "triage-sim"), std::uint64_t(s)));
    std::vector<const TriageInput*> sample(curve.caseload);
    std::size_t n_suspect = 0;
    int attempts = 0;
    do {
      n_suspect = 0;
      for (std::size_t i = 0; i < curve.caseload; ++i) {
        sample[i] = &pool[rng.uniform_int(pool.size())];
        if (sample[i]->suspect_truth) ++n_suspect;
      }
      ++attempts;
    } while (n_suspect == 0 && attempts < kResampleCap);
    if (n_suspect == 0) {
      // Vanishingly unlikely unless the caseload is tiny; an empty-suspect
      // caseload finds all of its zero suspects at every fraction.
      curve.warnings.push_back("simulation " + std::to_string(s) + " drew no suspects after " +
                               std::to_string(kResampleCap) + " attempts");
      for (std::size_t i = 0; i < fractions.size(); ++i) {
        sum[i] += 1.0;
        sumsq[i] += 1.0;
      }
      continue;
    }

    std::sort(sample.begin(), sample.end(), [](const TriageInput* a, const TriageInput* b) {
      if (a->suspect_confidence != b->suspect_confidence)
        return a->suspect_confidence > b->suspect_confidence;
      return a->specimen_id < b->specimen_id;
    });

    // Prefix counts of suspects let every fraction read off in O(1).
    std::vector<std::size_t> prefix(sample.size() + 1, 0);
    for (std::size_t i = 0; i < sample.size(); ++i)
      prefix[i + 1] = prefix[i] + (sample[i]->suspect_truth ? 1 : 0);

    for (std::size_t i = 0; i < fractions.size(); ++i) {
      const std::size_t reviewed = std::min(
          sample.size(), std::size_t(std::llround(fractions[i] * double(sample.size()))));
      const double sens = double(prefix[reviewed]) / double(n_suspect);
      sum[i] += sens;
      sumsq[i] += sens * sens;
    }
  }

  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double mean = sum[i] / double(simulations);
    curve.mean_sensitivity[i] = mean;
    curve.std_sensitivity[i] =
        std::sqrt(std::max(0.0, sumsq[i] / double(simulations) - mean * mean));
  }
  return curve;
}

namespace {

AblationVariantRun evaluate_variant(const std::vector<SpecimenBag>& variant,
                                    const std::vector<SpecimenBag>& test,
                                    std::uint64_t seed, const AblationConfig& cfg) {
  HierarchyTrainConfig train_cfg = cfg.train;
  train_cfg.seed = seed;
  PdlsModel model = train_hierarchy(variant, train_cfg);

  std::vector<SpecimenBag> val;
  for (const SpecimenBag& b : variant)
    if (b.split == Split::Val) val.push_back(b);
  model.thresholds = calibrate_all(model, val, cfg.targets, cfg.mc);

  std::vector<FinalLabel> preds;
  std::vector<SpecimenClass> truths;
  preds.reserve(test.size());
  for (const SpecimenBag& b : test) {
    preds.push_back(infer_specimen(model, b, cfg.mc).final);
    truths.push_back(b.label);
  }

  AblationVariantRun run;
  run.seed = seed;
  for (const MetricsRow& row : confusion_metrics(preds, truths, MetricMode::Strict)) {
    run.class_sensitivity[row.label] = row.sensitivity;
    if (row.label == class_id(SpecimenClass::MelHigh)) run.high_ppv = row.ppv;
  }
  for (const MetricsRow& row : confusion_metrics(preds, truths, MetricMode::SuspectCredit))
    if (row.label == "mel_suspect") run.suspect_sensitivity = row.sensitivity;
  return run;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / double(xs.size()));
}

} // namespace

AblationReport ablation_run(const std::vector<SpecimenBag>& consensus_variant,
                            const std::vector<SpecimenBag>& non_consensus_variant,
                            const std::vector<SpecimenBag>& test,
                            const std::vector<std::uint64_t>& seeds,
                            const AblationConfig& cfg) {
  if (seeds.empty()) throw InvalidInputError("ablation needs at least one seed");
  if (test.empty()) throw InvalidInputError("ablation needs a shared test set");

  std::set<std::string> test_ids;
  for (const SpecimenBag& b : test) test_ids.insert(b.specimen_id);
  for (const auto* variant : {&consensus_variant, &non_consensus_variant}) {
    for (const SpecimenBag& b : *variant)
      if (test_ids.count(b.specimen_id))
        throw DataError("specimen " + b.specimen_id +
                        " leaks between a training variant and the test set");
  }

  AblationReport report;
  for (std::uint64_t seed : seeds) {
    report.consensus_runs.push_back(evaluate_variant(consensus_variant, test, seed, cfg));
    report.non_consensus_runs.push_back(
        evaluate_variant(non_consensus_variant, test, seed, cfg));
  }

  auto deltas = [&](auto&& get) {
    std::vector<double> d(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i)
      d[i] = get(report.consensus_runs[i]) - get(report.non_consensus_runs[i]);
    return d;
  };

  mean_std(deltas([](const AblationVariantRun& r) { return r.suspect_sensitivity; }),
           report.suspect_sensitivity_delta_mean, report.suspect_sensitivity_delta_std);
  mean_std(deltas([](const AblationVariantRun& r) { return r.high_ppv; }),
           report.high_ppv_delta_mean, report.high_ppv_delta_std);
  for (SpecimenClass cls : kAllClasses) {
    const std::string key(class_id(cls));
    double mean = 0.0;
    double sd = 0.0;
    mean_std(deltas([&](const AblationVariantRun& r) { return r.class_sensitivity.at(key); }),
             mean, sd);
    report.class_sensitivity_delta_mean[key] = mean;
    report.class_sensitivity_delta_std[key] = sd;
  }
  return report;
}

} // namespace pdls
