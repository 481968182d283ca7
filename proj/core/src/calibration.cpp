#include "pdls/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "pdls/errors.hpp"
#include "pdls/hierarchy.hpp"
#include "pdls/rng.hpp"

namespace pdls {

double HeadConfidence::prob(std::string_view cls) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == cls) return mean_probs[i];
  throw InvalidInputError("head '" + head + "' has no class '" + std::string(cls) + "'");
}

const HeadConfidence& ConfidenceVector::head(std::string_view name) const {
  for (const HeadConfidence& h : heads)
    if (h.head == name) return h;
  throw InvalidInputError("no confidence entry for head '" + std::string(name) + "'");
}

double ConfidenceVector::prob(std::string_view head_name, std::string_view cls) const {
  return head(head_name).prob(cls);
}

ConfidenceVector mc_confidence(const BagModel& model, const SpecimenBag& bag, int passes,
                               std::uint64_t seed) {
  if (passes < 1) throw InvalidInputError("mc_confidence needs at least one pass");
  model.validate();

  ConfidenceVector out;
  out.samples = passes;
  out.seed = seed;
  out.heads.resize(model.heads.size());
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    out.heads[h].head = model.heads[h].name;
    out.heads[h].classes = model.heads[h].class_names;
    out.heads[h].mean_probs.assign(model.heads[h].classes(), 0.0);
  }

  const std::uint64_t specimen_seed = derive_seed(seed, bag.specimen_id);
  for (int t = 0; t < passes; ++t) {
    BagForward fwd = bag_forward(model, bag, {model.dropout_rate, DropoutMode::McSample},
                                 derive_seed(specimen_seed, std::uint64_t(t)));
    for (std::size_t h = 0; h < fwd.head_probs.size(); ++h)
      for (std::size_t c = 0; c < fwd.head_probs[h].size(); ++c)
        out.heads[h].mean_probs[c] += fwd.head_probs[h][c];
  }
  for (HeadConfidence& h : out.heads)
    for (double& p : h.mean_probs) p /= double(passes);
  return out;
}

namespace {

// Shared threshold search: smallest candidate c in {0} u confidences whose
// >=c subset is nonempty and satisfies the predicate's rate target.
std::optional<double> smallest_threshold(const std::vector<std::pair<double, bool>>& scored,
                                         double target) {
  if (scored.empty()) return std::nullopt;
  std::vector<double> candidates;
  candidates.reserve(scored.size() + 1);
  candidates.push_back(0.0);
  for (const auto& [conf, ok] : scored) candidates.push_back(conf);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  for (double c : candidates) {
    std::size_t kept = 0;
    std::size_t good = 0;
    for (const auto& [conf, ok] : scored) {
      if (conf >= c) {
        ++kept;
        if (ok) ++good;
      }
    }
    if (kept == 0) continue;
    if (double(good) / double(kept) >= target) return c;
  }
  return std::nullopt;
}

} // namespace

std::optional<double> calibrate_accuracy_threshold(const std::vector<ValPrediction>& preds,
                                                   SpecimenClass cls, double target_accuracy,
                                                   std::vector<std::string>* warnings) {
  if (target_accuracy < 0.0 || target_accuracy > 1.0)
    throw InvalidInputError("target accuracy must lie in [0,1]");
  std::vector<std::pair<double, bool>> scored;
  for (const ValPrediction& p : preds)
    if (p.predicted == cls) scored.emplace_back(p.confidence, p.truth == cls);
  if (scored.empty()) {
    if (warnings)
      warnings->push_back("no validation predictions for class " +
                          std::string(class_id(cls)));
    return std::nullopt;
  }
  auto thr = smallest_threshold(scored, target_accuracy);
  if (!thr && warnings)
    warnings->push_back("accuracy target " + std::to_string(target_accuracy) +
                        " unattainable for class " + std::string(class_id(cls)));
  return thr;
}

std::optional<double> calibrate_ppv_threshold(const std::vector<ValPrediction>& preds,
                                              double target_ppv,
                                              std::vector<std::string>* warnings) {
  if (target_ppv < 0.0 || target_ppv > 1.0)
    throw InvalidInputError("target PPV must lie in [0,1]");
  std::vector<std::pair<double, bool>> scored;
  for (const ValPrediction& p : preds)
    if (p.predicted == SpecimenClass::MelHigh)
      scored.emplace_back(p.confidence, p.truth == SpecimenClass::MelHigh);
  if (scored.empty()) {
    if (warnings) warnings->push_back("no high-risk predictions to calibrate PPV on");
    return std::nullopt;
  }
  auto thr = smallest_threshold(scored, target_ppv);
  if (!thr && warnings)
    warnings->push_back("PPV target " + std::to_string(target_ppv) + " unattainable");
  return thr;
}

double CalibrationTargets::accuracy_for(SpecimenClass c) const {
  auto it = accuracy_overrides.find(c);
  return it == accuracy_overrides.end() ? accuracy : it->second;
}

double ThresholdSet::accuracy_for(SpecimenClass c) const {
  auto it = accuracy.find(c);
  if (it == accuracy.end())
    throw MissingThresholdsError("no accuracy threshold for class " +
                                 std::string(class_id(c)));
  return it->second;
}

ThresholdSet calibrate_all(const PdlsModel& model, const std::vector<SpecimenBag>& validation,
                           const CalibrationTargets& targets, const McConfig& mc) {
  if (validation.empty()) throw InvalidInputError("empty validation set");

  std::vector<ValPrediction> preds;
  preds.reserve(validation.size());
  for (const SpecimenBag& bag : validation) {
    RawInference raw = infer_raw(model, bag, mc);
    preds.push_back({raw.confidence, raw.predicted, bag.label});
  }

  ThresholdSet out;
  out.target_ppv = targets.ppv;
  for (SpecimenClass c : kAllClasses) {
    const double target = targets.accuracy_for(c);
    out.target_accuracy[c] = target;
    auto thr = calibrate_accuracy_threshold(preds, c, target, &out.warnings);
    // 1.0 is above every attainable confidence bar an exact-certainty one,
    // so unattainable classes fall back to their conservative label.
    out.accuracy[c] = thr.value_or(1.0);
  }
  auto ppv = calibrate_ppv_threshold(preds, targets.ppv, &out.warnings);
  out.ppv_mel_high = ppv.value_or(1.0);
  return out;
}

} // namespace pdls
