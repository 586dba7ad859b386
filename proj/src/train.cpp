#include "sepbn/train.hpp"

#include <cmath>
#include <numbers>

#include "sepbn/errors.hpp"
#include "sepbn/ops.hpp"

namespace sepbn {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  validate_policy(main_policy);
  validate_policy(aux_policy);
  if (alternate_policy) {
    validate_policy(*alternate_policy);
    if (dual) throw ConfigError("train.alternate_policy requires train.dual = false");
  }
  model.validate();
}

double cosine_lr(std::uint64_t t, std::uint64_t total, double lr0) {
  if (total == 0) throw ContractViolation("cosine_lr: total steps must be > 0");
  if (t > total) {
    throw ContractViolation("cosine_lr: step " + std::to_string(t) + " beyond total " +
                            std::to_string(total));
  }
  return 0.5 * lr0 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

void sgd_update(Param& param, double lr, double momentum, double weight_decay) {
  if (param.grad.shape() != param.value.shape() || param.velocity.shape() != param.value.shape()) {
    throw ContractViolation("sgd_update: value/grad/velocity shapes differ: " +
                            shape_string(param.value.shape()) + ", " +
                            shape_string(param.grad.shape()) + ", " +
                            shape_string(param.velocity.shape()));
  }
  const float lr_f = static_cast<float>(lr);
  const float mom = static_cast<float>(momentum);
  const float wd = static_cast<float>(weight_decay);
  float* theta = param.value.data();
  float* v = param.velocity.data();
  const float* g = param.grad.data();
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const float gd = g[i] + wd * theta[i];
    v[i] = mom * v[i] + gd;
    theta[i] -= lr_f * v[i];
  }
}

void sgd_update(std::span<const NamedParam> params, double lr, double momentum,
                double weight_decay, bool decay_all) {
  for (const auto& p : params) {
    sgd_update(*p.param, lr, momentum, (p.param->decay || decay_all) ? weight_decay : 0.0);
  }
}

Tensor prepare_batch(const Dataset& ds, std::span<const std::size_t> indices,
                     const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                     StreamTag tag) {
  Tensor raw = gather_images(ds, indices);
  std::vector<RngKey> keys;
  keys.reserve(indices.size());
  for (std::size_t i : indices) keys.push_back(RngKey{seed, epoch, i, tag});
  Tensor out = apply_policy(raw, policy, keys);
  ds.norm.apply(out);
  return out;
}

const AugmentPolicy& main_policy_for_step(const TrainConfig& config, std::uint64_t step) {
  if (config.alternate_policy && !config.dual && step % 2 == 1) return *config.alternate_policy;
  return config.main_policy;
}

namespace {

double branch_pass(Network& net, const Tensor& x, std::span<const int> labels, BranchId branch,
                   double weight) {
  ForwardCache cache;
  Tensor logits = net.forward_train(x, branch, &cache);
  CrossEntropy ce = softmax_cross_entropy(logits, labels);
  net.backward(cache, softmax_cross_entropy_backward(ce.probs, labels, weight));
  return ce.loss;
}

}  // namespace

StepLog dual_step(Network& net, const Dataset& train_set, std::span<const std::size_t> indices,
                  const TrainConfig& config, std::uint64_t epoch, std::uint64_t step, double lr) {
  const std::vector<int> labels = gather_labels(train_set, indices);
  StepLog log;
  log.step = step;
  log.epoch = static_cast<int>(epoch);
  log.lr = lr;

  net.zero_grad();
  const double weight = config.dual ? 0.5 : 1.0;
  const Tensor x_main = prepare_batch(train_set, indices, main_policy_for_step(config, step),
                                      config.seed, epoch, StreamTag::MainAugment);
  log.loss_main = branch_pass(net, x_main, labels, BranchId::Main, weight);
  if (config.dual) {
    const Tensor x_aux = prepare_batch(train_set, indices, config.aux_policy, config.seed, epoch,
                                       StreamTag::AuxAugment);
    log.loss_aux = branch_pass(net, x_aux, labels, BranchId::Auxiliary, weight);
    log.loss_total = (log.loss_main + *log.loss_aux) / 2.0;
  } else {
    log.loss_total = log.loss_main;
  }
  const auto params = net.parameters();
  sgd_update(params, lr, config.momentum, config.weight_decay, config.decay_bn_and_bias);
  return log;
}

std::uint64_t steps_per_epoch(std::size_t n, int batch_size) {
  return (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const EpochCallback& on_epoch,
                  const StepCallback& on_step) {
  config.validate();
  if (train_set.channels != config.model.in_channels || train_set.classes != config.model.classes) {
    throw ConfigError("dataset (" + std::to_string(train_set.channels) + " channels, " +
                      std::to_string(train_set.classes) + " classes) does not match the model (" +
                      std::to_string(config.model.in_channels) + " channels, " +
                      std::to_string(config.model.classes) + " classes)");
  }
  TrainResult result{Network::build(config.model, config.seed), {}};
  if (config.epochs == 0) return result;
  if (train_set.size() == 0) throw DataError("training split is empty");

  const std::uint64_t per_epoch = steps_per_epoch(train_set.size(), config.batch_size);
  const std::uint64_t total = per_epoch * static_cast<std::uint64_t>(config.epochs);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& idx : batches(train_set.size(), config.batch_size, epoch, config.seed)) {
      const double lr = cosine_lr(step, total, config.lr);
      StepLog log = dual_step(result.net, train_set, idx, config, epoch, step, lr);
      if (on_step) on_step(log);
      result.log.push_back(log);
      ++step;
    }
    if (on_epoch) on_epoch(epoch + 1, result.net);
  }
  return result;
}

}  // namespace sepbn
