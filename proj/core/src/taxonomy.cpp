#include "pdls/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "pdls/errors.hpp"

namespace pdls {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassIds = {
    "basaloid", "squamous", "mel_low", "mel_int", "mel_high", "other",
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::vector<Diagnosis>& vocabulary_impl() {
  static const std::vector<Diagnosis> vocab = {
      // Basaloid
      {"Nodular Basal Cell Carcinoma", SpecimenClass::Basaloid},
      {"Basal Cell Carcinoma, NOS", SpecimenClass::Basaloid},
      {"Basal Cell Carcinoma, Morphea type", SpecimenClass::Basaloid},
      {"Basal Cell Carcinoma", SpecimenClass::Basaloid},
      {"Pilomatrixoma", SpecimenClass::Basaloid},
      {"Infiltrative Basal Cell Carcinoma", SpecimenClass::Basaloid},
      // Squamous
      {"Invasive Squamous Cell Carcinoma", SpecimenClass::Squamous},
      {"Squamous Cell Carcinoma in situ", SpecimenClass::Squamous},
      {"Squamous Cell Carcinoma", SpecimenClass::Squamous},
      {"Bowen's Disease", SpecimenClass::Squamous},
      {"Fibrokeratoma", SpecimenClass::Squamous},
      {"Warty Dyskeratorma", SpecimenClass::Squamous},
      // Melanocytic High Risk
      {"Melanoma", SpecimenClass::MelHigh},
      // Melanocytic Intermediate Risk
      {"Melanoma In Situ", SpecimenClass::MelInt},
      {"Severe Dysplasia", SpecimenClass::MelInt},
      // Melanocytic Low Risk
      {"Conventional Melanocytic Nevus", SpecimenClass::MelLow},
      {"Dermal Nevus", SpecimenClass::MelLow},
      {"Compound Nevus", SpecimenClass::MelLow},
      {"Junctional Nevus", SpecimenClass::MelLow},
      {"Mild Dysplasia", SpecimenClass::MelLow},
      {"Moderate Dysplasia", SpecimenClass::MelLow},
      {"Halo Nevus", SpecimenClass::MelLow},
      {"Dysplastic Nevus, NOS", SpecimenClass::MelLow},
      {"Dysplastic Nevus", SpecimenClass::MelLow},
      {"Spitz Nevus", SpecimenClass::MelLow},
      {"Blue Nevus", SpecimenClass::MelLow},
  };
  return vocab;
}

const std::map<std::string, SpecimenClass>& vocabulary_index() {
  static const std::map<std::string, SpecimenClass> index = [] {
    std::map<std::string, SpecimenClass> m;
    for (const auto& d : vocabulary_impl()) m.emplace(lower(d.name), d.cls);
    return m;
  }();
  return index;
}

} // namespace

std::string_view class_id(SpecimenClass c) { return kClassIds[static_cast<int>(c)]; }

std::string_view final_class_id(FinalClass f) {
  if (f == FinalClass::MelSuspect) return "mel_suspect";
  return kClassIds[static_cast<int>(f)];
}

SpecimenClass class_from_id(std::string_view id) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassIds[i] == id) return static_cast<SpecimenClass>(i);
  throw InvalidInputError("unknown class id: " + std::string(id));
}

FinalClass final_class_from_id(std::string_view id) {
  if (id == "mel_suspect") return FinalClass::MelSuspect;
  return static_cast<FinalClass>(static_cast<int>(class_from_id(id)));
}

FinalClass to_final(SpecimenClass c) { return static_cast<FinalClass>(static_cast<int>(c)); }

SpecimenClass to_specimen_class(FinalClass f) {
  if (f == FinalClass::MelSuspect)
    throw InvalidInputError("mel_suspect is not a specimen class");
  return static_cast<SpecimenClass>(static_cast<int>(f));
}

SpecimenClass mpath_to_class(MpathScore score) {
  switch (score) {
    case 1:
    case 2:
      return SpecimenClass::MelLow;
    case 3:
      return SpecimenClass::MelInt;
    case 4:
    case 5:
      return SpecimenClass::MelHigh;
    default: {
      std::ostringstream os;
      os << "invalid-input: MPATH score must be in 1..5, got " << score;
      throw InvalidInputError(os.str());
    }
  }
}

SuspectGroup suspect_grouping(SpecimenClass c) {
  return (c == SpecimenClass::MelInt || c == SpecimenClass::MelHigh)
             ? SuspectGroup::Suspect
             : SuspectGroup::Rest;
}

bool is_melanocytic(SpecimenClass c) {
  return c == SpecimenClass::MelLow || c == SpecimenClass::MelInt ||
         c == SpecimenClass::MelHigh;
}

SpecimenClass diagnosis_to_class(std::string_view name) {
  const auto& index = vocabulary_index();
  auto it = index.find(lower(name));
  if (it == index.end()) {
    std::ostringstream os;
    os << "unknown-diagnosis: \"" << name << "\"; vocabulary:";
    for (const auto& d : vocabulary_impl()) os << " \"" << d.name << "\"";
    throw InvalidInputError(os.str());
  }
  return it->second;
}

const std::vector<Diagnosis>& diagnosis_vocabulary() { return vocabulary_impl(); }

std::vector<std::string> diagnoses_for_class(SpecimenClass c) {
  std::vector<std::string> out;
  for (const auto& d : vocabulary_impl())
    if (d.cls == c) out.push_back(d.name);
  return out;
}

ConsensusDecision consensus(const std::array<SpecimenClass, 3>& first_three,
                            const std::optional<std::array<SpecimenClass, 2>>& extra_two) {
  // Vote counts over the first three reviews.
  std::map<SpecimenClass, int> votes;
  for (SpecimenClass c : first_three) ++votes[c];

  SpecimenClass majority = first_three[0];
  int best = 0;
  for (const auto& [cls, n] : votes) {
    if (n > best) {
      best = n;
      majority = cls;
    }
  }

  if (best == 3) return ConsensusDecision{majority, 3};
  if (best == 1) return ConsensusDecision{std::nullopt, 3}; // three-way split
  if (!extra_two.has_value())
    throw IncompleteReviewError(
        "incomplete-review: 2/3 majority requires the fourth and fifth reviews");
  const auto& extras = *extra_two;
  if (extras[0] == majority && extras[1] == majority)
    return ConsensusDecision{majority, 5};
  return ConsensusDecision{std::nullopt, 5};
}

} // namespace pdls
