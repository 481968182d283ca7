#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdls {

/// The six morphology classes a specimen can be diagnosed as. The three
/// melanocytic values are ordered Low < Intermediate < High.
enum class SpecimenClass : int {
  Basaloid = 0,
  Squamous = 1,
  MelLow = 2,
  MelInt = 3,
  MelHigh = 4,
  Other = 5,
};

inline constexpr int kNumClasses = 6;

inline constexpr std::array<SpecimenClass, kNumClasses> kAllClasses = {
    SpecimenClass::Basaloid, SpecimenClass::Squamous, SpecimenClass::MelLow,
    SpecimenClass::MelInt,   SpecimenClass::MelHigh,  SpecimenClass::Other,
};

/// A label the inference pipeline can emit: the six classes plus the
/// suspect fallback, which is never a ground-truth value.
enum class FinalClass : int {
  Basaloid = 0,
  Squamous = 1,
  MelLow = 2,
  MelInt = 3,
  MelHigh = 4,
  Other = 5,
  MelSuspect = 6,
};

struct FinalLabel {
  FinalClass cls = FinalClass::Other;
  bool low_confidence = false;

  bool operator==(const FinalLabel&) const = default;
};

/// Stable identifiers used in every file format.
std::string_view class_id(SpecimenClass c);
std::string_view final_class_id(FinalClass f);
SpecimenClass class_from_id(std::string_view id);
FinalClass final_class_from_id(std::string_view id);

FinalClass to_final(SpecimenClass c);
/// Valid only for the six non-suspect values.
SpecimenClass to_specimen_class(FinalClass f);

enum class SuspectGroup { Suspect, Rest };

/// MPATH I-V melanocytic severity score.
using MpathScore = int;

/// MPATH I/II -> Low, III -> Intermediate, IV/V -> High.
SpecimenClass mpath_to_class(MpathScore score);

/// Intermediate/High form the Melanocytic Suspect branch; everything else
/// is Rest.
SuspectGroup suspect_grouping(SpecimenClass c);

/// Low/Intermediate/High — the classes subject to consensus review.
bool is_melanocytic(SpecimenClass c);

struct Diagnosis {
  std::string name;
  SpecimenClass cls;
};

/// Maps a diagnosis name (case-insensitive exact match against the fixed
/// vocabulary) to its class.
SpecimenClass diagnosis_to_class(std::string_view name);

/// The full diagnosis vocabulary grouped under the six classes.
const std::vector<Diagnosis>& diagnosis_vocabulary();

/// Diagnosis names belonging to one class. Other has no named entries.
std::vector<std::string> diagnoses_for_class(SpecimenClass c);

struct ConsensusDecision {
  std::optional<SpecimenClass> outcome; // nullopt = excluded
  int reviews_used = 3;

  bool consensus() const { return outcome.has_value(); }
  bool operator==(const ConsensusDecision&) const = default;
};

/// Consensus-review rule: 3/3 agreement accepts immediately; a 2/3 majority
/// needs both additional reviewers to confirm it; anything else excludes
/// the specimen. Three distinct first reviews exclude without consulting
/// the extra reviewers.
ConsensusDecision consensus(const std::array<SpecimenClass, 3>& first_three,
                            const std::optional<std::array<SpecimenClass, 2>>& extra_two);

} // namespace pdls
