#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/corruption.hpp"
#include "sepbn/data.hpp"
#include "sepbn/train.hpp"

namespace sepbn {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar10 | cifar100
  std::string root;                  // falls back to $SEPBN_DATA_ROOT
  SyntheticSpec synthetic;
  std::size_t train_subset = 0;      // 0 = all
  std::size_t test_subset = 0;
  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<Corruption> corruptions = all_corruptions();
  std::size_t corruption_samples = 0;  // 0 = whole test split
  bool compute_ce = false;
  std::string ce_baseline;  // checkpoint path
  double fourier_norm = 8.0;
  std::size_t fourier_samples = 200;
  std::vector<std::string> fourier_predictors{"main", "aux"};
  std::vector<int> lowpass_bandwidths{1, 2, 4, 6, 8, 12, 16, 20, 24, 28, 32};
  std::size_t lowpass_samples = 500;
  std::vector<AugmentPolicy> affinity_policies{
      AugmentPolicy::none(),          AugmentPolicy::flip(),     AugmentPolicy::flip_crop(),
      AugmentPolicy::cutout_preset(), AugmentPolicy::gaussian(), AugmentPolicy::rand_augment()};
  bool operator==(const EvalConfig&) const = default;
};

/// One experiment: data, model and training recipe, and evaluation settings.
/// Runtime settings (output directory, thread count) are kept apart so the
/// resolved config, and everything derived from it, does not depend on them.
struct ExperimentConfig {
  std::string preset = "standard";
  DataConfig data;
  TrainConfig train;
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  EvalConfig eval;
  bool operator==(const ExperimentConfig&) const = default;
};

constexpr const char* kDataRootEnv = "SEPBN_DATA_ROOT";

// Training presets: one per ablation row plus "clean" (no augmentation).
std::vector<std::string> train_preset_names();
// Applies the preset's policies, BN mode and dual flag on top of `config`.
void apply_train_preset(ExperimentConfig& config, const std::string& name);

// Builds a config from JSON. The preset (JSON "train.preset", overridden by
// `preset_override` when non-empty) is applied first and explicit keys win.
// Unknown keys and bad values raise ConfigError naming the JSON path.
ExperimentConfig parse_config(const std::string& json_text, const std::string& preset_override = "");
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& preset_override = "");
ExperimentConfig default_config(const std::string& preset = "standard");

// Fully explicit JSON for the config; parse_config(resolved_json(c)) == c.
std::string resolved_json(const ExperimentConfig& config);
// FNV-1a of resolved_json.
std::uint64_t config_digest(const ExperimentConfig& config);
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace sepbn
