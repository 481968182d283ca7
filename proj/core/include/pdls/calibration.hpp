#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdls/mil.hpp"
#include "pdls/taxonomy.hpp"

namespace pdls {

struct PdlsModel; // hierarchy.hpp

struct McConfig {
  int passes = 100;
  std::uint64_t seed = 0;
};

struct HeadConfidence {
  std::string head;
  std::vector<std::string> classes;
  std::vector<double> mean_probs; // sums to 1 within fp error

  double prob(std::string_view cls) const;
};

/// Per-class mean softmax probabilities over T Monte Carlo dropout passes.
struct ConfidenceVector {
  std::vector<HeadConfidence> heads;
  int samples = 0;
  std::uint64_t seed = 0;

  const HeadConfidence& head(std::string_view name) const;
  double prob(std::string_view head_name, std::string_view cls) const;
};

/// T stochastic passes with dropout kept on; the per-specimen RNG stream is
/// derived from the specimen id, so results do not depend on the order in
/// which specimens are processed.
ConfidenceVector mc_confidence(const BagModel& model, const SpecimenBag& bag, int passes,
                               std::uint64_t seed);

struct ValPrediction {
  double confidence = 0.0; // confidence of the predicted class
  SpecimenClass predicted = SpecimenClass::Other;
  SpecimenClass truth = SpecimenClass::Other;
};

/// Smallest threshold c* (from {0} plus the observed confidences) such that
/// accuracy over predictions of `cls` with confidence >= c* meets the
/// target. nullopt when no threshold attains it.
std::optional<double> calibrate_accuracy_threshold(const std::vector<ValPrediction>& preds,
                                                   SpecimenClass cls, double target_accuracy,
                                                   std::vector<std::string>* warnings = nullptr);

/// Same search, but the criterion is PPV toward mel_high over the supplied
/// high-risk predictions.
std::optional<double> calibrate_ppv_threshold(const std::vector<ValPrediction>& preds,
                                              double target_ppv,
                                              std::vector<std::string>* warnings = nullptr);

struct CalibrationTargets {
  double accuracy = 0.90; // applies to every class unless overridden
  double ppv = 0.60;      // mel_high only
  std::map<SpecimenClass, double> accuracy_overrides;

  double accuracy_for(SpecimenClass c) const;
};

struct ThresholdSet {
  std::map<SpecimenClass, double> accuracy; // per final class, in [0,1]
  double ppv_mel_high = 1.0;
  std::map<SpecimenClass, double> target_accuracy;
  double target_ppv = 0.0;
  std::vector<std::string> warnings;

  double accuracy_for(SpecimenClass c) const;
};

/// Runs raw (threshold-free) inference over the validation bags, then
/// calibrates every per-class accuracy threshold plus the mel_high PPV
/// threshold. Unattainable targets become threshold 1.0 with a warning,
/// which routes those predictions to the suspect fallback.
ThresholdSet calibrate_all(const PdlsModel& model, const std::vector<SpecimenBag>& validation,
                           const CalibrationTargets& targets, const McConfig& mc);

} // namespace pdls
