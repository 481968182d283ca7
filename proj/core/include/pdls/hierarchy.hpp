#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdls/calibration.hpp"
#include "pdls/imaging.hpp"
#include "pdls/mil.hpp"
#include "pdls/taxonomy.hpp"

namespace pdls {

inline constexpr std::string_view kUpstreamHead = "suspect_vs_rest";
inline constexpr std::string_view kRestHead = "rest4";

/// Rest-branch class order (= rest4 head output order).
inline constexpr std::array<SpecimenClass, 4> kRestClasses = {
    SpecimenClass::Basaloid, SpecimenClass::Squamous, SpecimenClass::MelLow,
    SpecimenClass::Other};

enum class Branch { Suspect, Rest };

std::string_view branch_id(Branch b);

/// The three-model hierarchy. Thresholds appear after calibration;
/// final-label inference refuses to run without them.
struct PdlsModel {
  BagModel upstream;    // suspect_vs_rest
  BagModel suspect_sub; // high_vs_int, high_vs_rest, int_vs_rest
  BagModel rest_sub;    // rest4
  std::optional<ThresholdSet> thresholds;
  std::optional<RefColorStats> reference_colors;

  std::size_t embedding_dim() const { return upstream.embedding_dim(); }
  void validate() const;
};

struct HierarchyTrainConfig {
  BagModelConfig model;
  FitConfig fit;
  std::uint64_t seed = 0;
};

/// Upstream trains on suspect-vs-rest relabels of every specimen, the
/// suspect submodel on the masked three-task relabels of every specimen,
/// and the rest submodel on the four rest classes only. Calibration is a
/// separate step; the returned model carries no thresholds.
PdlsModel train_hierarchy(const std::vector<SpecimenBag>& bags,
                          const HierarchyTrainConfig& cfg);

/// Branch choice: the larger upstream confidence wins, ties go to the
/// suspect branch.
Branch route(double suspect_confidence, double rest_confidence);

/// Threshold-free inference: routed branch, its argmax class and that
/// class's mean MC confidence.
struct RawInference {
  std::string specimen_id;
  Branch branch = Branch::Rest;
  SpecimenClass predicted = SpecimenClass::Other;
  double confidence = 0.0;
  double upstream_suspect_confidence = 0.0;
  ConfidenceVector confidences; // upstream heads + routed submodel heads
};

RawInference infer_raw(const PdlsModel& model, const SpecimenBag& bag, const McConfig& mc);

/// MC confidences from all three component models regardless of routing;
/// evaluation scores every head on every test specimen.
ConfidenceVector infer_all_heads(const PdlsModel& model, const SpecimenBag& bag,
                                 const McConfig& mc);

struct Prediction {
  std::string specimen_id;
  Branch branch = Branch::Rest;
  ConfidenceVector confidences;
  FinalLabel final;
  double upstream_suspect_confidence = 0.0;
};

/// Full inference with threshold gating: high-risk labels must clear both
/// the accuracy and PPV thresholds (else mel_suspect); intermediate must
/// clear its accuracy threshold (else mel_suspect); rest-branch labels
/// below threshold keep their class but carry low_confidence.
Prediction infer_specimen(const PdlsModel& model, const SpecimenBag& bag, const McConfig& mc);

/// Re-derives the final label from a prediction's recorded confidences and
/// the model thresholds; inference must be replayable from its audit trail.
FinalLabel replay_final_label(const Prediction& pred, const ThresholdSet& thresholds);

struct FinetuneConfig {
  int train_count = 210;
  int val_count = 45;
  FitConfig fit;
  CalibrationTargets targets;
  McConfig mc;
  std::uint64_t seed = 0;
};

/// Continues training all three models on calibration-lab bags (class-
/// balanced train/val partition), then recalibrates thresholds on the
/// validation part. Preprocessing (color stats) is left untouched.
PdlsModel finetune(const PdlsModel& model, const std::vector<SpecimenBag>& calibration_bags,
                   const FinetuneConfig& cfg);

// Target builders shared by train_hierarchy, finetune and the ablation.
std::vector<TrainExample> upstream_examples(const std::vector<SpecimenBag>& bags);
std::vector<TrainExample> suspect_examples(const std::vector<SpecimenBag>& bags);
std::vector<TrainExample> rest_examples(const std::vector<SpecimenBag>& bags);

} // namespace pdls
