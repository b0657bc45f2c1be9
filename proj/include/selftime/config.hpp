#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selftime/augment.hpp"

namespace selftime {

struct TrainConfig {
  int epochs = 400;
  int batch_size = 128;
  double lr_pretrain = 0.01;
  double lr_linear = 0.5;
  int K = 16;                 // augmented views per sample
  int C = 3;                  // temporal relation classes
  double piece_ratio = 0.2;   // L / T
  std::uint64_t seed = 0;
  int eval_epochs = 400;
  int trials = 10;            // linear classifiers per data split
  int splits = 5;             // random data splits
  int piece_pairs = 1;        // piece pairs per sample and step
  bool stratified_pieces = false;
  bool normalize = true;      // z-normalize series on load
  int jobs = 1;
  augment::AugmentationPolicy policy = augment::AugmentationPolicy::standard();

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// (C, L/T) pretext settings per benchmark dataset.
struct PretextPreset {
  std::string dataset;
  int classes;
  double piece_ratio;
};
const std::vector<PretextPreset>& pretext_presets();
std::optional<PretextPreset> find_preset(std::string_view dataset);

// Sets one flat key. Throws ConfigError on unknown keys or bad values.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

// Sets one parameter of an augmentation step (keys as in the `[kind]` sections).
void apply_step_setting(augment::Step& step, const std::string& key, const std::string& value);

// Flat `key = value` lines; `[kind]` sections (jitter, scaling, cutout,
// magnitude_warp, time_warp, window_slice, window_warp) list the augmentation
// policy in order and replace the default policy. `#` starts a comment.
// Keys not present in the text keep their value from `base`.
TrainConfig parse_config(std::string_view text, const TrainConfig& base = {});
TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base = {});
// Inverse of parse_config.
std::string format_config(const TrainConfig& cfg);

}  // namespace selftime
