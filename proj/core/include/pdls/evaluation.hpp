#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdls/hierarchy.hpp"
#include "pdls/taxonomy.hpp"

namespace pdls {

struct ROCPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ROCCurve {
  std::vector<ROCPoint> points; // (0,0) .. (1,1), monotone
  double auc = 0.0;
};

/// Mann-Whitney AUC (ties count one half) plus the threshold-sweep curve.
/// Labels with a single class have no defined AUC.
ROCCurve roc_binary(const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& positives);

/// One-vs-rest curves for every hierarchy read-out: the four rest classes
/// from the rest head, mel_int/mel_high from their dedicated heads, and
/// the upstream suspect score. Keys: class ids plus "mel_suspect".
std::map<std::string, ROCCurve> hierarchy_roc(const std::vector<ConfidenceVector>& scores,
                                              const std::vector<SpecimenClass>& truths);

struct MetricsRow {
  std::string label;
  double ppv = 0.0;
  double sensitivity = 0.0;
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t support = 0;
};

/// Strict scores every class against its exact final label. SuspectCredit
/// collapses {mel_int, mel_high, mel_suspect} predictions and Int/High
/// truths into one mel_suspect row, the operating notion behind the
/// "flagged as suspect" results.
enum class MetricMode { Strict, SuspectCredit };

std::vector<MetricsRow> confusion_metrics(const std::vector<FinalLabel>& preds,
                                          const std::vector<SpecimenClass>& truths,
                                          MetricMode mode = MetricMode::Strict);

struct DiagnosisCase {
  FinalLabel pred;
  SpecimenClass truth = SpecimenClass::Other;
  std::string diagnosis; // empty = untagged (serves as negatives only)
};

/// Per-diagnosis rows: positives are the specimens carrying the diagnosis,
/// negatives the specimens of other classes; a correct call is the
/// diagnosis's class. Int/High diagnoses get a second "-> mel_suspect"
/// row crediting the suspect fallback.
std::vector<MetricsRow> diagnosis_report(const std::vector<DiagnosisCase>& cases);

struct TriageInput {
  std::string specimen_id;
  double suspect_confidence = 0.0; // upstream MC confidence
  bool suspect_truth = false;      // Int/High ground truth
};

struct TriageCurve {
  std::vector<double> fractions;
  std::vector<double> mean_sensitivity;
  std::vector<double> std_sensitivity;
  int simulations = 0;
  std::size_t caseload = 0;
  std::vector<std::string> warnings;
};

/// Bootstrap caseloads from the test pool, sort by suspect confidence
/// (descending, ties by specimen id) and read off suspect sensitivity per
/// review fraction; mean and std over the simulations.
TriageCurve triage_simulation(const std::vector<TriageInput>& pool, int simulations,
                              std::size_t caseload, const std::vector<double>& fractions,
                              std::uint64_t seed);

std::vector<double> default_triage_fractions(); // 0.00, 0.01, ..., 1.00

// --- consensus ablation -----------------------------------------------------

struct AblationConfig {
  HierarchyTrainConfig train;
  CalibrationTargets targets;
  McConfig mc;
};

struct AblationVariantRun {
  std::uint64_t seed = 0;
  double suspect_sensitivity = 0.0; // SuspectCredit mel_suspect row
  double high_ppv = 0.0;            // strict mel_high PPV
  std::map<std::string, double> class_sensitivity; // strict rows
};

struct AblationReport {
  std::vector<AblationVariantRun> consensus_runs;
  std::vector<AblationVariantRun> non_consensus_runs;
  // consensus minus non-consensus, aggregated over seeds
  double suspect_sensitivity_delta_mean = 0.0;
  double suspect_sensitivity_delta_std = 0.0;
  double high_ppv_delta_mean = 0.0;
  double high_ppv_delta_std = 0.0;
  std::map<std::string, double> class_sensitivity_delta_mean;
  std::map<std::string, double> class_sensitivity_delta_std;
};

/// Trains the consensus-only and with-non-consensus variants once per seed
/// on their own train/val splits, evaluates both on the shared consensus
/// test set, and aggregates the per-seed deltas. Any specimen appearing in
/// both a training set and the test set is a leakage error.
AblationReport ablation_run(const std::vector<SpecimenBag>& consensus_variant,
                            const std::vector<SpecimenBag>& non_consensus_variant,
                            const std::vector<SpecimenBag>& test,
                            const std::vector<std::uint64_t>& seeds,
                            const AblationConfig& cfg);

} // namespace pdls
