#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/data.hpp"
#include "sepbn/network.hpp"

namespace sepbn {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 128;
  double lr = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  AugmentPolicy main_policy = AugmentPolicy::flip_crop();
  AugmentPolicy aux_policy = AugmentPolicy::rand_augment();
  // Single-branch mixing: when set (and dual is off) odd steps draw the main
  // batch through this policy instead of main_policy.
  std::optional<AugmentPolicy> alternate_policy;
  bool dual = false;
  bool decay_bn_and_bias = false;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepLog {
  std::uint64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss_main = 0.0;
  std::optional<double> loss_aux;
  double loss_total = 0.0;
};

// 0.5 * lr0 * (1 + cos(pi * t / total)); requires 0 <= t <= total, total > 0.
double cosine_lr(std::uint64_t t, std::uint64_t total, double lr0);

// g' = g + wd * theta; v = momentum * v + g'; theta -= lr * v.
void sgd_update(Param& param, double lr, double momentum, double weight_decay);
// Applies sgd_update to every parameter; weight decay only where Param::decay
// is set unless decay_all.
void sgd_update(std::span<const NamedParam> params, double lr, double momentum,
                double weight_decay, bool decay_all = false);

// Augmented, standardized batch for one branch. Augmentation randomness is
// keyed by (seed, epoch, image index, tag).
Tensor prepare_batch(const Dataset& ds, std::span<const std::size_t> indices,
                     const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                     StreamTag tag);

// The policy the main branch uses at `step` (honours alternate_policy).
const AugmentPolicy& main_policy_for_step(const TrainConfig& config, std::uint64_t step);

/// One separated-BatchNorm update. Both branch batches derive from the same
/// clean images; the main batch goes through the Main statistics and the
/// auxiliary batch through the Auxiliary ones, gradients of
/// (L_main + L_aux) / 2 are accumulated over the two backward passes and a
/// single SGD step follows. With dual off only the main branch runs and the
/// Auxiliary state is never touched.
StepLog dual_step(Network& net, const Dataset& train_set, std::span<const std::size_t> indices,
                  const TrainConfig& config, std::uint64_t epoch, std::uint64_t step, double lr);

struct TrainResult {
  Network net;
  std::vector<StepLog> log;
};

// Called after every finished epoch (1-based count).
using EpochCallback = std::function<void(int epochs_done, const Network& net)>;
using StepCallback = std::function<void(const StepLog& log)>;

TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const EpochCallback& on_epoch = {}, const StepCallback& on_step = {});

std::uint64_t steps_per_epoch(std::size_t n, int batch_size);

}  // namespace sepbn
