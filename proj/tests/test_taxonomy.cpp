#include <doctest.h>

#include <algorithm>
#include <array>
#include <set>

#include "pdls/errors.hpp"
#include "pdls/rng.hpp"
#include "pdls/taxonomy.hpp"

using namespace pdls;

TEST_CASE("mpath scores map to severity classes") {
  CHECK(mpath_to_class(1) == SpecimenClass::MelLow);
  CHECK(mpath_to_class(2) == SpecimenClass::MelLow);
  CHECK(mpath_to_class(3) == SpecimenClass::MelInt);
  CHECK(mpath_to_class(4) == SpecimenClass::MelHigh);
  CHECK(mpath_to_class(5) == SpecimenClass::MelHigh);
  CHECK_THROWS_AS(mpath_to_class(0), InvalidInputError);
  CHECK_THROWS_AS(mpath_to_class(6), InvalidInputError);
  CHECK_THROWS_AS(mpath_to_class(-1), InvalidInputError);

  // Severity never decreases with the score.
  for (int s = 1; s < 5; ++s)
    CHECK(static_cast<int>(mpath_to_class(s)) <= static_cast<int>(mpath_to_class(s + 1)));
}

TEST_CASE("suspect grouping covers exactly Int and High") {
  CHECK(suspect_grouping(SpecimenClass::MelInt) == SuspectGroup::Suspect);
  CHECK(suspect_grouping(SpecimenClass::MelHigh) == SuspectGroup::Suspect);
  CHECK(suspect_grouping(SpecimenClass::MelLow) == SuspectGroup::Rest);
  CHECK(suspect_grouping(SpecimenClass::Basaloid) == SuspectGroup::Rest);
  CHECK(suspect_grouping(SpecimenClass::Squamous) == SuspectGroup::Rest);
  CHECK(suspect_grouping(SpecimenClass::Other) == SuspectGroup::Rest);
}

TEST_CASE("melanocytic predicate covers the three severities") {
  CHECK(is_melanocytic(SpecimenClass::MelLow));
  CHECK(is_melanocytic(SpecimenClass::MelInt));
  CHECK(is_melanocytic(SpecimenClass::MelHigh));
  CHECK_FALSE(is_melanocytic(SpecimenClass::Basaloid));
  CHECK_FALSE(is_melanocytic(SpecimenClass::Squamous));
  CHECK_FALSE(is_melanocytic(SpecimenClass::Other));
}

TEST_CASE("class ids round-trip") {
  for (auto c : kAllClasses) CHECK(class_from_id(class_id(c)) == c);
  CHECK(class_id(SpecimenClass::Basaloid) == "basaloid");
  CHECK(class_id(SpecimenClass::Squamous) == "squamous");
  CHECK(class_id(SpecimenClass::MelLow) == "mel_low");
  CHECK(class_id(SpecimenClass::MelInt) == "mel_int");
  CHECK(class_id(SpecimenClass::MelHigh) == "mel_high");
  CHECK(class_id(SpecimenClass::Other) == "other");
  CHECK_THROWS_AS(class_from_id("melanoma"), InvalidInputError);

  for (int i = 0; i < 7; ++i) {
    auto f = static_cast<FinalClass>(i);
    CHECK(final_class_from_id(final_class_id(f)) == f);
  }
  CHECK(final_class_id(FinalClass::MelSuspect) == "mel_suspect");
  CHECK(to_final(SpecimenClass::MelInt) == FinalClass::MelInt);
  CHECK(to_specimen_class(FinalClass::Squamous) == SpecimenClass::Squamous);
  CHECK_THROWS_AS(to_specimen_class(FinalClass::MelSuspect), InvalidInputError);
}

TEST_CASE("diagnosis vocabulary maps names to classes") {
  CHECK(diagnosis_to_class("Melanoma") == SpecimenClass::MelHigh);
  CHECK(diagnosis_to_class("Melanoma In Situ") == SpecimenClass::MelInt);
  CHECK(diagnosis_to_class("Blue Nevus") == SpecimenClass::MelLow);
  CHECK(diagnosis_to_class("Basal Cell Carcinoma") == SpecimenClass::Basaloid);
  CHECK(diagnosis_to_class("Squamous Cell Carcinoma") == SpecimenClass::Squamous);

  SUBCASE("matching is case-insensitive") {
    CHECK(diagnosis_to_class("melanoma") == SpecimenClass::MelHigh);
    CHECK(diagnosis_to_class("MELANOMA IN SITU") == SpecimenClass::MelInt);
    CHECK(diagnosis_to_class("blue nevus") == SpecimenClass::MelLow);
  }

  SUBCASE("unknown names are rejected") {
    CHECK_THROWS_AS(diagnosis_to_class("Lipoma"), InvalidInputError);
    CHECK_THROWS_AS(diagnosis_to_class(""), InvalidInputError);
  }

  SUBCASE("vocabulary is consistent with the mapper") {
    for (const auto& d : diagnosis_vocabulary()) CHECK(diagnosis_to_class(d.name) == d.cls);
    // Every class except Other carries at least one named diagnosis.
    for (auto c : kAllClasses) {
      auto names = diagnoses_for_class(c);
      if (c == SpecimenClass::Other)
        CHECK(names.empty());
      else
        CHECK(!names.empty());
    }
  }
}

namespace {

ConsensusDecision run_consensus(std::array<SpecimenClass, 3> first,
                                std::optional<std::array<SpecimenClass, 2>> extra) {
  return consensus(first, extra);
}

}  // namespace

TEST_CASE("consensus rule on the canonical panels") {
  const auto low = SpecimenClass::MelLow;
  const auto mid = SpecimenClass::MelInt;
  const auto high = SpecimenClass::MelHigh;

  SUBCASE("unanimous first panel accepts without extra reviews") {
    auto d = run_consensus({mid, mid, mid}, std::nullopt);
    CHECK(d.consensus());
    CHECK(*d.outcome == mid);
    CHECK(d.reviews_used == 3);
  }

  SUBCASE("2-of-3 majority confirmed by both extra reviewers") {
    auto d = run_consensus({mid, mid, high}, std::array<SpecimenClass, 2>{mid, mid});
    CHECK(d.consensus());
    CHECK(*d.outcome == mid);
    CHECK(d.reviews_used == 5);
  }

  SUBCASE("2-of-3 majority with split extra reviewers is excluded") {
    auto d = run_consensus({mid, mid, high}, std::array<SpecimenClass, 2>{mid, high});
    CHECK_FALSE(d.consensus());
    CHECK(d.reviews_used == 5);
  }

  SUBCASE("extras agreeing with each other but not the majority still exclude") {
    auto d = run_consensus({mid, mid, high}, std::array<SpecimenClass, 2>{high, high});
    CHECK_FALSE(d.consensus());
  }

  SUBCASE("three distinct reviews exclude without consulting the extras") {
    auto d = run_consensus({low, mid, high}, std::nullopt);
    CHECK_FALSE(d.consensus());
    CHECK(d.reviews_used == 3);
    // Extras, even unanimous ones, cannot rescue a three-way split.
    auto d2 = run_consensus({low, mid, high}, std::array<SpecimenClass, 2>{mid, mid});
    CHECK_FALSE(d2.consensus());
    CHECK(d2.reviews_used == 3);
  }

  SUBCASE("a 2-of-3 panel without the extra reviews cannot be resolved") {
    CHECK_THROWS_AS(run_consensus({mid, mid, high}, std::nullopt), IncompleteReviewError);
  }
}

TEST_CASE("consensus is invariant to the order of the first three reviews") {
  Rng rng(41);
  const std::array<SpecimenClass, 3> mel = {SpecimenClass::MelLow, SpecimenClass::MelInt,
                                            SpecimenClass::MelHigh};
  for (int trial = 0; trial < 200; ++trial) {
    std::array<SpecimenClass, 3> first{};
    for (auto& r : first) r = mel[rng.uniform_int(3)];
    std::array<SpecimenClass, 2> extra = {mel[rng.uniform_int(3)], mel[rng.uniform_int(3)]};

    std::array<std::size_t, 3> perm = {0, 1, 2};
    auto base = consensus(first, extra);
    do {
      std::array<SpecimenClass, 3> shuffled = {first[perm[0]], first[perm[1]], first[perm[2]]};
      CHECK(consensus(shuffled, extra) == base);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("consensus never accepts an outcome with fewer than three supporting votes") {
  Rng rng(42);
  const std::array<SpecimenClass, 3> mel = {SpecimenClass::MelLow, SpecimenClass::MelInt,
                                            SpecimenClass::MelHigh};
  for (int trial = 0; trial < 500; ++trial) {
    std::array<SpecimenClass, 3> first{};
    for (auto& r : first) r = mel[rng.uniform_int(3)];
    std::array<SpecimenClass, 2> extra = {mel[rng.uniform_int(3)], mel[rng.uniform_int(3)]};
    auto d = consensus(first, extra);
    if (!d.consensus()) continue;
    int votes = 0;
    for (auto r : first) votes += r == *d.outcome;
    if (d.reviews_used == 5)
      for (auto r : extra) votes += r == *d.outcome;
    CHECK(votes >= 3);
  }
}
