#pragma once

// Shared odds and ends for the unit tests: tiny dataset builders, temp
// files, and a few numeric utilities used by more than one test file.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "pdls/matrix.hpp"
#include "pdls/mil.hpp"
#include "pdls/rng.hpp"
#include "pdls/synth.hpp"

namespace testutil {

// A unique path under the system temp dir; removed (recursively) on scope
// exit so failed assertions don't leave litter behind.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      auto candidate = base / ("pdls_test_" + std::to_string(::getpid()) + "_" +
                               std::to_string(counter_++) + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path = candidate;
        return;
      }
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }

private:
  static inline int counter_ = 0;
};

inline pdls::Matrix random_matrix(std::size_t rows, std::size_t cols, pdls::Rng& rng,
                                  double scale = 1.0) {
  pdls::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) = scale * rng.normal();
  return m;
}

// Small well-separated two-class bag set for binary-head training tests.
// Class 0 bags carry tiles near +e0, class 1 bags near -e0, plus noise.
inline std::vector<pdls::SpecimenBag> separable_bags(std::size_t count_per_class,
                                                     std::size_t dim, std::uint64_t seed) {
  pdls::Rng rng(seed);
  std::vector<pdls::SpecimenBag> bags;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < count_per_class; ++i) {
      pdls::SpecimenBag bag;
      bag.specimen_id = "sep_" + std::to_string(c) + "_" + std::to_string(i);
      std::size_t n = 3 + rng.uniform_int(5);
      bag.tiles = pdls::Matrix(n, dim);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t d = 0; d < dim; ++d) bag.tiles.at(t, d) = 0.25 * rng.normal();
        bag.tiles.at(t, 0) += c == 0 ? 2.0 : -2.0;
      }
      bag.label = c == 0 ? pdls::SpecimenClass::MelHigh : pdls::SpecimenClass::Basaloid;
      bags.push_back(std::move(bag));
    }
  }
  return bags;
}

// Full six-class synthetic dataset at unit-test scale.
inline std::vector<pdls::SpecimenBag> small_dataset(std::size_t per_class, std::size_t dim,
                                                    std::uint64_t seed, double delta = 2.0,
                                                    double sigma_e = 0.2) {
  auto protos = pdls::make_prototypes(dim, delta, sigma_e, pdls::derive_seed(seed, "protos"));
  pdls::DatasetConfig cfg;
  cfg.counts.fill(per_class);
  cfg.params.n_min = 4;
  cfg.params.n_max = 12;
  return pdls::gen_dataset(cfg, protos, pdls::derive_seed(seed, "data"));
}

}  // namespace testutil
