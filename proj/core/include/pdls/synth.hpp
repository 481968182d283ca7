#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdls/imaging.hpp"
#include "pdls/matrix.hpp"
#include "pdls/mil.hpp"
#include "pdls/rng.hpp"
#include "pdls/taxonomy.hpp"

namespace pdls {

/// Class-conditional generator geometry. The melanocytic prototypes sit on
/// a line: mu_int and mu_high lie at distances delta and 2*delta from
/// mu_low along one fixed direction (renormalized to unit length), so
/// adjacent severities are the confusable ones.
struct PrototypeSet {
  std::size_t dim = 1024;
  std::array<std::vector<double>, kNumClasses> mu;
  std::vector<double> mu_bg;
  std::vector<double> direction; // melanocytic continuum axis
  double delta = 0.6;
  double sigma_e = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

PrototypeSet make_prototypes(std::size_t dim, double delta, double sigma_e,
                             std::uint64_t seed);

/// A "different lab": every prototype nudged by `magnitude` of Gaussian
/// drift and renormalized, with the continuum structure rebuilt so the
/// severity ordering survives the shift.
PrototypeSet shift_prototypes(const PrototypeSet& ref, double magnitude,
                              std::uint64_t seed);

struct GenParams {
  std::size_t n_min = 20;
  std::size_t n_max = 200;
  double frac_min = 0.05; // diagnostic-tile fraction range
  double frac_max = 0.40;

  void validate() const;
};

/// One bag: diagnostic tiles near the class prototype, the rest near the
/// shared background prototype. Diagnostic indices are stored as hidden
/// metadata for attention tests only.
SpecimenBag gen_specimen(SpecimenClass cls, const PrototypeSet& protos,
                         const GenParams& params, Rng& rng);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetConfig {
  std::array<std::size_t, kNumClasses> counts{};
  SplitFractions fractions;
  GenParams params;
  std::string lab_id = "lab_ref";
  std::string id_prefix = "spec";
  std::optional<Split> fixed_split; // overrides fractions when set
};

/// Stratified per-class splits, deterministic in the seed; per-specimen
/// sub-seeds keep generation order-independent.
std::vector<SpecimenBag> gen_dataset(const DatasetConfig& cfg, const PrototypeSet& protos,
                                     std::uint64_t seed);

// --- reviewer simulation -----------------------------------------------------

/// Row-stochastic 6x6 confusion kernel K(true -> assigned).
struct ReviewerKernel {
  Matrix k;

  void validate() const;
  double at(SpecimenClass truth, SpecimenClass assigned) const;
};

/// Errors off the diagonal split 80/20 toward adjacent/far severities at
/// the continuum ends; Intermediate splits evenly; non-melanocytic misses
/// read as Other (true Other splits across the carcinomas).
ReviewerKernel make_reviewer_kernel(double mel_low_diag, double mel_int_diag,
                                    double mel_high_diag, double non_mel_diag);

/// Diagonals 0.80/0.65/0.85 for Low/Intermediate/High and 0.95 elsewhere.
ReviewerKernel default_reviewer_kernel();
ReviewerKernel identity_reviewer_kernel();

std::vector<SpecimenClass> simulate_reviews(SpecimenClass truth, const ReviewerKernel& kernel,
                                            int n_reviewers, Rng& rng);

struct ReviewRecord {
  std::array<SpecimenClass, 3> first_three{};
  std::optional<std::array<SpecimenClass, 2>> extra_two;
};

struct ReviewedBag {
  SpecimenBag bag;
  std::optional<ReviewRecord> reviews; // nullopt: not melanocytic, not reviewed
};

/// Draws the three-reviewer panel per melanocytic bag (plus the two extra
/// reviewers whenever the panel lands 2-vs-1); per-specimen seeds derive
/// from the specimen id.
std::vector<ReviewedBag> simulate_dataset_reviews(const std::vector<SpecimenBag>& bags,
                                                  const ReviewerKernel& kernel,
                                                  std::uint64_t seed);

struct ConsensusSplit {
  std::vector<SpecimenBag> consensus;     // labels = consensus outcome
  std::vector<SpecimenBag> non_consensus; // labels = first reviewer's call
};

/// Applies the consensus rule per melanocytic bag; non-melanocytic bags
/// pass straight into the consensus set.
ConsensusSplit apply_consensus_filter(const std::vector<ReviewedBag>& bags);

// --- synthetic slides -----------------------------------------------------------

struct SlideOptions {
  bool ink = false;
  bool blur = false;
  std::size_t width = 1024;
  std::size_t height = 1024;
};

struct SyntheticSlide {
  SlideImage slide;
  Mask tissue; // generator ground truth
  Mask ink;
  Mask blur;
};

/// White canvas with pink/purple tissue blobs; optional saturated ink
/// strokes (blue, green or black) and an optional blurred right half.
SyntheticSlide gen_synthetic_slide(SpecimenClass cls, const SlideOptions& opts, Rng& rng);

} // namespace pdls
