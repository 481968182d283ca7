#include "pdls/hierarchy.hpp"

#include <algorithm>
#include <cmath>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"

namespace pdls {

std::string_view branch_id(Branch b) {
  return b == Branch::Suspect ? "suspect" : "rest";
}

void PdlsModel::validate() const {
  upstream.validate();
  suspect_sub.validate();
  rest_sub.validate();
  if (suspect_sub.embedding_dim() != upstream.embedding_dim() ||
      rest_sub.embedding_dim() != upstream.embedding_dim())
    throw ShapeError("hierarchy models must share one embedding width");
  if (upstream.head(kUpstreamHead).classes() != 2)
    throw ShapeError("upstream head must be binary");
  for (std::string_view name : kSuspectTaskHeads)
    if (suspect_sub.head(name).classes() != 2)
      throw ShapeError("suspect task heads must be binary");
  if (rest_sub.head(kRestHead).classes() != kRestClasses.size())
    throw ShapeError("rest head must cover the four rest classes");
}

std::vector<TrainExample> upstream_examples(const std::vector<SpecimenBag>& bags) {
  std::vector<TrainExample> out;
  out.reserve(bags.size());
  for (const SpecimenBag& b : bags) {
    const int target = suspect_grouping(b.label) == SuspectGroup::Suspect ? 1 : 0;
    out.push_back({&b, {target}});
  }
  return out;
}

std::vector<TrainExample> suspect_examples(const std::vector<SpecimenBag>& bags) {
  std::vector<TrainExample> out;
  out.reserve(bags.size());
  for (const SpecimenBag& b : bags) {
    const auto targets = task_targets(task_group(b.label));
    out.push_back({&b, {targets.begin(), targets.end()}});
  }
  return out;
}

std::vector<TrainExample> rest_examples(const std::vector<SpecimenBag>& bags) {
  std::vector<TrainExample> out;
  for (const SpecimenBag& b : bags) {
    auto it = std::find(kRestClasses.begin(), kRestClasses.end(), b.label);
    if (it == kRestClasses.end()) continue;
    out.push_back({&b, {int(it - kRestClasses.begin())}});
  }
  return out;
}

namespace {

std::vector<SpecimenBag> filter_split(const std::vector<SpecimenBag>& bags, Split split) {
  std::vector<SpecimenBag> out;
  for (const SpecimenBag& b : bags)
    if (b.split == split) out.push_back(b);
  return out;
}

} // namespace

PdlsModel train_hierarchy(const std::vector<SpecimenBag>& bags,
                          const HierarchyTrainConfig& cfg) {
  if (bags.empty()) throw InvalidInputError("no training bags supplied");
  const std::size_t dim = bags.front().dim();
  for (const SpecimenBag& b : bags)
    if (b.dim() != dim) throw ShapeError("bags disagree on embedding width");

  std::vector<SpecimenBag> train = filter_split(bags, Split::Train);
  std::vector<SpecimenBag> val = filter_split(bags, Split::Val);
  if (train.empty()) throw InvalidInputError("empty train split");
  if (val.empty()) throw InvalidInputError("empty val split");

  for (SpecimenClass c : kAllClasses) {
    const bool present = std::any_of(train.begin(), train.end(),
                                     [&](const SpecimenBag& b) { return b.label == c; });
    if (!present)
      throw DegenerateLabelsError("class " + std::string(class_id(c)) +
                                  " missing from training data");
  }

  PdlsModel model;
  model.upstream = make_bag_model(
      dim, cfg.model, {{std::string(kUpstreamHead), {"rest", "suspect"}}},
      derive_seed(cfg.seed, "upstream"));
  model.suspect_sub = make_bag_model(dim, cfg.model,
                                     {{"high_vs_int", {"mel_int", "mel_high"}},
                                      {"high_vs_rest", {"rest", "mel_high"}},
                                      {"int_vs_rest", {"rest", "mel_int"}}},
                                     derive_seed(cfg.seed, "suspect"));
  model.rest_sub = make_bag_model(
      dim, cfg.model,
      {{std::string(kRestHead), {"basaloid", "squamous", "mel_low", "other"}}},
      derive_seed(cfg.seed, "rest"));

  FitConfig fit_cfg = cfg.fit;
  fit_cfg.seed = derive_seed(cfg.seed, "fit-upstream");
  fit(model.upstream, upstream_examples(train), upstream_examples(val), fit_cfg);
  fit_cfg.seed = derive_seed(cfg.seed, "fit-suspect");
  fit(model.suspect_sub, suspect_examples(train), suspect_examples(val), fit_cfg);
  fit_cfg.seed = derive_seed(cfg.seed, "fit-rest");
  fit(model.rest_sub, rest_examples(train), rest_examples(val), fit_cfg);
  return model;
}

Branch route(double suspect_confidence, double rest_confidence) {
  // Ties fall to the suspect branch: the pipeline optimizes suspect
  // sensitivity, so ambiguity routes to the cautious side.
  return suspect_confidence >= rest_confidence ? Branch::Suspect : Branch::Rest;
}

RawInference infer_raw(const PdlsModel& model, const SpecimenBag& bag, const McConfig& mc) {
  model.validate();

  RawInference out;
  out.specimen_id = bag.specimen_id;
  ConfidenceVector up =
      mc_confidence(model.upstream, bag, mc.passes, derive_seed(mc.seed, "upstream"));
  out.upstream_suspect_confidence = up.prob(kUpstreamHead, "suspect");
  out.branch = route(out.upstream_suspect_confidence, up.prob(kUpstreamHead, "rest"));

  ConfidenceVector sub;
  if (out.branch == Branch::Suspect) {
    sub = mc_confidence(model.suspect_sub, bag, mc.passes, derive_seed(mc.seed, "suspect"));
    const double high = sub.prob("high_vs_rest", "mel_high");
    const double inter = sub.prob("int_vs_rest", "mel_int");
    // Tie prefers the more severe read; thresholds still gate the label.
    if (high >= inter) {
      out.predicted = SpecimenClass::MelHigh;
      out.confidence = high;
    } else {
      out.predicted = SpecimenClass::MelInt;
      out.confidence = inter;
    }
  } else {
    sub = mc_confidence(model.rest_sub, bag, mc.passes, derive_seed(mc.seed, "rest"));
    const std::vector<double>& probs = sub.head(kRestHead).mean_probs;
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    out.predicted = kRestClasses[best];
    out.confidence = probs[best];
  }

  out.confidences.samples = mc.passes;
  out.confidences.seed = mc.seed;
  out.confidences.heads = up.heads;
  out.confidences.heads.insert(out.confidences.heads.end(), sub.heads.begin(),
                               sub.heads.end());
  return out;
}

ConfidenceVector infer_all_heads(const PdlsModel& model, const SpecimenBag& bag,
                                 const McConfig& mc) {
  model.validate();
  ConfidenceVector up =
      mc_confidence(model.upstream, bag, mc.passes, derive_seed(mc.seed, "upstream"));
  ConfidenceVector sus =
      mc_confidence(model.suspect_sub, bag, mc.passes, derive_seed(mc.seed, "suspect"));
  ConfidenceVector rest =
      mc_confidence(model.rest_sub, bag, mc.passes, derive_seed(mc.seed, "rest"));
  ConfidenceVector out;
  out.samples = mc.passes;
  out.seed = mc.seed;
  out.heads = std::move(up.heads);
  out.heads.insert(out.heads.end(), std::make_move_iterator(sus.heads.begin()),
                   std::make_move_iterator(sus.heads.end()));
  out.heads.insert(out.heads.end(), std::make_move_iterator(rest.heads.begin()),
                   std::make_move_iterator(rest.heads.end()));
  return out;
}

namespace {

FinalLabel apply_thresholds(Branch branch, SpecimenClass predicted, double confidence,
                            const ThresholdSet& thresholds) {
  if (branch == Branch::Suspect) {
    if (predicted == SpecimenClass::MelHigh) {
      const bool pass = confidence >= thresholds.accuracy_for(SpecimenClass::MelHigh) &&
                        confidence >= thresholds.ppv_mel_high;
      return {pass ? FinalClass::MelHigh : FinalClass::MelSuspect, false};
    }
    const bool pass = confidence >= thresholds.accuracy_for(SpecimenClass::MelInt);
    return {pass ? FinalClass::MelInt : FinalClass::MelSuspect, false};
  }
  return {to_final(predicted), confidence < thresholds.accuracy_for(predicted)};
}

} // namespace

Prediction infer_specimen(const PdlsModel& model, const SpecimenBag& bag, const McConfig& mc) {
  if (!model.thresholds.has_value())
    throw MissingThresholdsError("model has no calibrated thresholds");

  RawInference raw = infer_raw(model, bag, mc);
  Prediction pred;
  pred.specimen_id = raw.specimen_id;
  pred.branch = raw.branch;
  pred.confidences = std::move(raw.confidences);
  pred.upstream_suspect_confidence = raw.upstream_suspect_confidence;
  pred.final = apply_thresholds(raw.branch, raw.predicted, raw.confidence, *model.thresholds);
  return pred;
}

FinalLabel replay_final_label(const Prediction& pred, const ThresholdSet& thresholds) {
  const double suspect = pred.confidences.prob(kUpstreamHead, "suspect");
  const double rest = pred.confidences.prob(kUpstreamHead, "rest");
  const Branch branch = route(suspect, rest);
  if (branch == Branch::Suspect) {
    const double high = pred.confidences.prob("high_vs_rest", "mel_high");
    const double inter = pred.confidences.prob("int_vs_rest", "mel_int");
    const SpecimenClass predicted =
        high >= inter ? SpecimenClass::MelHigh : SpecimenClass::MelInt;
    return apply_thresholds(branch, predicted, std::max(high, inter), thresholds);
  }
  const std::vector<double>& probs = pred.confidences.head(kRestHead).mean_probs;
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return apply_thresholds(branch, kRestClasses[best], probs[best], thresholds);
}

namespace {

// Class-balanced draw: per-class quotas by largest remainder, then a seeded
// shuffle inside each class decides membership.
std::pair<std::vector<const SpecimenBag*>, std::vector<const SpecimenBag*>>
balanced_partition(const std::vector<SpecimenBag>& bags, int train_count, int val_count,
                   std::uint64_t seed) {
  std::vector<std::vector<const SpecimenBag*>> groups(kNumClasses);
  for (const SpecimenBag& b : bags) groups[int(b.label)].push_back(&b);
  Rng rng(derive_seed(seed, "finetune-split"));
  for (auto& g : groups) rng.shuffle(g);

  const std::size_t total = bags.size();
  auto take_quota = [&](const std::vector<std::size_t>& avail, int want) {
    std::vector<std::size_t> quota(kNumClasses, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t avail_total = 0;
    for (std::size_t a : avail) avail_total += a;
    if (avail_total < std::size_t(want))
      throw InvalidInputError("calibration set smaller than configured split");
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double exact = double(want) * double(avail[c]) / double(avail_total);
      quota[c] = std::min(std::size_t(exact), avail[c]);
      assigned += quota[c];
      remainders.push_back({exact - double(quota[c]), c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (const auto& [rem, c] : remainders) {
      if (assigned >= std::size_t(want)) break;
      if (quota[c] < avail[c]) {
        ++quota[c];
        ++assigned;
      }
    }
    // Remainder rounding can stall when fractional classes are exhausted;
    // spill the leftover into any class with headroom.
    for (std::size_t c = 0; c < kNumClasses && assigned < std::size_t(want); ++c) {
      while (quota[c] < avail[c] && assigned < std::size_t(want)) {
        ++quota[c];
        ++assigned;
      }
    }
    return quota;
  };

  std::vector<std::size_t> avail(kNumClasses);
  for (std::size_t c = 0; c < kNumClasses; ++c) avail[c] = groups[c].size();
  (void)total;
  std::vector<std::size_t> val_quota = take_quota(avail, val_count);
  for (std::size_t c = 0; c < kNumClasses; ++c) avail[c] -= val_quota[c];
  std::vector<std::size_t> train_quota = take_quota(avail, train_count);

  std::vector<const SpecimenBag*> train_part;
  std::vector<const SpecimenBag*> val_part;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t i = 0;
    for (; i < val_quota[c]; ++i) val_part.push_back(groups[c][i]);
    for (std::size_t j = 0; j < train_quota[c]; ++j) train_part.push_back(groups[c][i + j]);
  }
  return {std::move(train_part), std::move(val_part)};
}

} // namespace

PdlsModel finetune(const PdlsModel& model, const std::vector<SpecimenBag>& calibration_bags,
                   const FinetuneConfig& cfg) {
  model.validate();
  if (cfg.train_count < 1 || cfg.val_count < 1)
    throw InvalidInputError("finetune split counts must be positive");
  if (calibration_bags.size() < std::size_t(cfg.train_count + cfg.val_count))
    throw InvalidInputError(
        "calibration set smaller than configured split: need " +
        std::to_string(cfg.train_count + cfg.val_count) + ", have " +
        std::to_string(calibration_bags.size()));

  auto [train_ptrs, val_ptrs] =
      balanced_partition(calibration_bags, cfg.train_count, cfg.val_count, cfg.seed);
  std::vector<SpecimenBag> train;
  std::vector<SpecimenBag> val;
  train.reserve(train_ptrs.size());
  val.reserve(val_ptrs.size());
  for (const SpecimenBag* b : train_ptrs) train.push_back(*b);
  for (const SpecimenBag* b : val_ptrs) val.push_back(*b);

  PdlsModel tuned = model;
  FitConfig fit_cfg = cfg.fit;
  fit_cfg.seed = derive_seed(cfg.seed, "ft-upstream");
  fit(tuned.upstream, upstream_examples(train), upstream_examples(val), fit_cfg);
  fit_cfg.seed = derive_seed(cfg.seed, "ft-suspect");
  fit(tuned.suspect_sub, suspect_examples(train), suspect_examples(val), fit_cfg);
  std::vector<TrainExample> rest_train = rest_examples(train);
  std::vector<TrainExample> rest_val = rest_examples(val);
  fit_cfg.seed = derive_seed(cfg.seed, "ft-rest");
  fit(tuned.rest_sub, rest_train, rest_val, fit_cfg);

  // Color/preprocessing state stays as learned at the reference lab.
  tuned.thresholds = calibrate_all(tuned, val, cfg.targets, cfg.mc);
  return tuned;
}

} // namespace pdls
