#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdls/taxonomy.hpp"

namespace pdls {

/// Run configuration, one section per concern. Every field below is the
/// documented default; a config file only needs the keys it overrides.
/// Unknown sections or keys are rejected outright.
struct Config {
  struct Data {
    std::string manifest = "dataset.csv";
    std::string embeddings = "dataset.emb";
  } data;

  struct Train {
    std::vector<std::size_t> encoder_widths = {1024, 1024, 512, 512};
    std::size_t attention_dim = 256;
    double dropout = 0.5;
    double lr = 1e-4;
    int max_epochs = 100;
    int patience = 10;
    std::size_t bag_batch = 1;
    std::size_t finetune_train = 210;
    std::size_t finetune_val = 45;
  } train;

  struct Mc {
    int passes = 100;
  } mc;

  struct Thresholds {
    double accuracy = 0.90;
    double ppv = 0.60;
  } thresholds;

  struct Synth {
    std::size_t dim = 1024;
    std::array<std::size_t, kNumClasses> counts = {60, 60, 60, 60, 60, 60};
    std::size_t n_min = 20;
    std::size_t n_max = 200;
    double frac_min = 0.05;
    double frac_max = 0.40;
    double delta = 0.6;
    double sigma_e = 0.5;
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::string lab_id = "lab_ref";
    std::string id_prefix = "spec";
    double lab_shift = 0.0; // >0 drifts the prototypes (a "different lab")
    bool reviews = true;    // simulate the reviewer panel + consensus filter
    double kernel_mel_low = 0.80;
    double kernel_mel_int = 0.65;
    double kernel_mel_high = 0.85;
    double kernel_non_mel = 0.95;
  } synth;

  struct Qc {
    double blur_threshold = 0.0; // 0 disables the blur filter
    double ink_cutoff = 0.5;
    std::size_t embed_dim = 1024;
  } qc;
};

/// Parses TOML-style `key = value` lines under `[section]` headers.
/// Comments start with '#'. Strings are double-quoted; lists are
/// bracketed, comma-separated. Unknown keys raise usage errors.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);

/// Emits every key with its current value, grouped by section — loading
/// the output reproduces the config exactly.
std::string config_to_string(const Config& cfg);

} // namespace pdls
