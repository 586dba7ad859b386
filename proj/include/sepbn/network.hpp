#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sepbn/dual_bn.hpp"
#include "sepbn/tensor.hpp"

namespace sepbn {

struct ModelConfig {
  int depth = 10;  // 6n + 4
  int width = 1;   // widening factor k
  int in_channels = 3;
  int classes = 10;
  BnMode bn_mode = BnMode::FullySeparate;

  // Throws ConfigError unless depth = 6n+4 >= 10, width >= 1, channels and
  // classes positive.
  void validate() const;
  int blocks_per_group() const { return (depth - 4) / 6; }
  bool operator==(const ModelConfig&) const = default;
};

enum class Phase { Train, Eval };

struct ConvLayer {
  Param weight;  // OIHW
  int stride = 1;
  int pad = 0;
};

// Pre-activation residual block: BN-ReLU-conv, BN-ReLU-conv, with a 1x1
// projection shortcut taken from the first activation when width or stride
// changes.
struct PreActBlock {
  DualBatchNorm bn1;
  ConvLayer conv1;
  DualBatchNorm bn2;
  ConvLayer conv2;
  std::optional<ConvLayer> shortcut;
};

struct BlockCache {
  Tensor input;
  BnCache bn1;
  Tensor bn1_out;
  Tensor act1;
  BnCache bn2;
  Tensor bn2_out;
  Tensor act2;
};

// Activations recorded by a train-phase forward for the matching backward.
struct ForwardCache {
  BranchId branch = BranchId::Main;
  std::uint64_t network_id = 0;
  Tensor input;
  std::vector<BlockCache> blocks;
  Tensor trunk_out;
  BnCache final_bn;
  Tensor final_bn_out;
  Tensor final_act;
  Tensor pooled;
};

struct NamedParam {
  std::string name;
  Param* param;
};

struct NamedNorm {
  std::string name;
  DualBatchNorm* norm;
};

/// Small pre-activation WideResNet: 3x3 stem, three groups of widths
/// 16k/32k/64k (stride 2 entering groups 2 and 3), final BN-ReLU, global
/// average pool and a dense head. Every normalization is a DualBatchNorm, so
/// both branches traverse identical conv/dense weights.
class Network {
 public:
  Network() = default;
  static Network build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Train phase uses batch statistics of `branch` and updates its running
  // statistics; Eval phase uses the running statistics and changes nothing.
  Tensor forward(const Tensor& x, BranchId branch, Phase phase, ForwardCache* cache = nullptr);
  Tensor forward_train(const Tensor& x, BranchId branch, ForwardCache* cache = nullptr);
  Tensor forward_eval(const Tensor& x, BranchId branch) const;

  // Accumulates d(loss)/d(param) into every Param::grad reachable from the
  // cached branch. Parameters of the other branch are left untouched.
  void backward(const ForwardCache& cache, const Tensor& dlogits);

  void zero_grad();

  // Distinct trainable tensors with stable names (aliased BN storage appears
  // once).
  std::vector<NamedParam> parameters();
  std::vector<NamedNorm> norm_layers();
  std::size_t parameter_count() const;

  bool operator==(const Network& other) const;

 private:
  void check_input(const Tensor& x) const;

  ModelConfig config_;
  std::uint64_t id_ = 0;
  ConvLayer stem_;
  std::vector<PreActBlock> blocks_;
  DualBatchNorm final_bn_;
  Param head_w_;  // D x K
  Param head_b_;  // K
};

}  // namespace sepbn
