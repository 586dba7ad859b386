#include "sepbn/network.hpp"

#include <atomic>
#include <cmath>

#include "sepbn/errors.hpp"
#include "sepbn/ops.hpp"
#include "sepbn/rng.hpp"

namespace sepbn {

void ModelConfig::validate() const {
  if (depth < 10 || (depth - 4) % 6 != 0) {
    throw ConfigError("model depth must have the form 6n+4 with n >= 1, got " +
                      std::to_string(depth));
  }
  if (width < 1) throw ConfigError("model width must be >= 1, got " + std::to_string(width));
  if (in_channels < 1) throw ConfigError("model in_channels must be >= 1");
  if (classes < 2) throw ConfigError("model needs at least 2 classes");
}

namespace {

std::atomic<std::uint64_t> next_network_id{1};

Param he_normal(Shape shape, int fan_in, std::uint64_t seed, std::uint64_t index) {
  RngStream rng(seed, 0, index, StreamTag::Init);
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (auto& v : t.values()) v = static_cast<float>(stddev * rng.normal());
  return Param(std::move(t), true);
}

ConvLayer make_conv(int in_c, int out_c, int kernel, int stride, std::uint64_t seed,
                    std::uint64_t& index) {
  return ConvLayer{he_normal({out_c, in_c, kernel, kernel}, in_c * kernel * kernel, seed, index++),
                   stride, kernel / 2};
}

Tensor conv_forward(const ConvLayer& l, const Tensor& x) {
  return conv2d(x, l.weight.value, l.stride, l.pad);
}

// Accumulates the weight gradient and returns dx.
Tensor conv_backward(ConvLayer& l, const Tensor& x, const Tensor& dy) {
  Conv2dGrads g = conv2d_backward(x, l.weight.value, dy, l.stride, l.pad);
  add_inplace(l.weight.grad, g.dw);
  return std::move(g.dx);
}

void norm_params(std::vector<NamedParam>& out, const std::string& prefix, DualBatchNorm& bn) {
  const bool split = bn.gamma_slots().size() > 1;
  for (std::size_t i = 0; i < bn.gamma_slots().size(); ++i) {
    const std::string suffix = split ? (i == 0 ? ".main" : ".aux") : "";
    out.push_back({prefix + ".gamma" + suffix, &bn.gamma_slots()[i]});
    out.push_back({prefix + ".beta" + suffix, &bn.beta_slots()[i]});
  }
}

std::string block_name(std::size_t group, std::size_t block) {
  return "group" + std::to_string(group + 1) + ".block" + std::to_string(block);
}

}  // namespace

Network Network::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  net.id_ = next_network_id.fetch_add(1);
  std::uint64_t index = 0;
  const int base = 16;
  net.stem_ = make_conv(config.in_channels, base, 3, 1, seed, index);
  int in_c = base;
  const int n = config.blocks_per_group();
  for (int g = 0; g < 3; ++g) {
    const int out_c = base * (1 << g) * config.width;
    for (int b = 0; b < n; ++b) {
      const int stride = (g > 0 && b == 0) ? 2 : 1;
      PreActBlock blk;
      blk.bn1 = DualBatchNorm(in_c, config.bn_mode);
      blk.conv1 = make_conv(in_c, out_c, 3, stride, seed, index);
      blk.bn2 = DualBatchNorm(out_c, config.bn_mode);
      blk.conv2 = make_conv(out_c, out_c, 3, 1, seed, index);
      if (in_c != out_c || stride != 1) blk.shortcut = make_conv(in_c, out_c, 1, stride, seed, index);
      net.blocks_.push_back(std::move(blk));
      in_c = out_c;
    }
  }
  net.final_bn_ = DualBatchNorm(in_c, config.bn_mode);
  net.head_w_ = he_normal({in_c, config.classes}, in_c, seed, index++);
  net.head_b_ = Param(Tensor({config.classes}, 0.0f), false);
  return net;
}

void Network::check_input(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
    throw ContractViolation("network expects NCHW input with " +
                            std::to_string(config_.in_channels) + " channels, got " +
                            shape_string(x.shape()));
  }
}

Tensor Network::forward(const Tensor& x, BranchId branch, Phase phase, ForwardCache* cache) {
  if (phase == Phase::Eval) return forward_eval(x, branch);
  return forward_train(x, branch, cache);
}

Tensor Network::forward_train(const Tensor& x, BranchId branch, ForwardCache* cache) {
  check_input(x);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.branch = branch;
  c.network_id = id_;
  c.input = x;
  c.blocks.assign(blocks_.size(), BlockCache{});

  Tensor h = conv_forward(stem_, x);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    PreActBlock& blk = blocks_[i];
    BlockCache& bc = c.blocks[i];
    bc.bn1_out = blk.bn1.forward_train(h, branch, &bc.bn1);
    bc.act1 = relu(bc.bn1_out);
    Tensor y1 = conv_forward(blk.conv1, bc.act1);
    bc.bn2_out = blk.bn2.forward_train(y1, branch, &bc.bn2);
    bc.act2 = relu(bc.bn2_out);
    Tensor out = conv_forward(blk.conv2, bc.act2);
    if (blk.shortcut) {
      add_inplace(out, conv_forward(*blk.shortcut, bc.act1));
    } else {
      add_inplace(out, h);
    }
    bc.input = std::move(h);
    h = std::move(out);
  }
  c.final_bn_out = final_bn_.forward_train(h, branch, &c.final_bn);
  c.trunk_out = std::move(h);
  c.final_act = relu(c.final_bn_out);
  c.pooled = global_avg_pool(c.final_act);
  return dense(c.pooled, head_w_.value, head_b_.value);
}

Tensor Network::forward_eval(const Tensor& x, BranchId branch) const {
  check_input(x);
  Tensor h = conv_forward(stem_, x);
  for (const PreActBlock& blk : blocks_) {
    Tensor act1 = relu(blk.bn1.forward_eval(h, branch));
    Tensor act2 = relu(blk.bn2.forward_eval(conv_forward(blk.conv1, act1), branch));
    Tensor out = conv_forward(blk.conv2, act2);
    if (blk.shortcut) {
      add_inplace(out, conv_forward(*blk.shortcut, act1));
    } else {
      add_inplace(out, h);
    }
    h = std::move(out);
  }
  Tensor pooled = global_avg_pool(relu(final_bn_.forward_eval(h, branch)));
  return dense(pooled, head_w_.value, head_b_.value);
}

void Network::backward(const ForwardCache& cache, const Tensor& dlogits) {
  if (cache.network_id != id_ || cache.blocks.size() != blocks_.size() || cache.pooled.empty()) {
    throw ContractViolation("network backward called with a cache from a different forward");
  }
  if (dlogits.rank() != 2 || dlogits.dim(0) != cache.pooled.dim(0) ||
      dlogits.dim(1) != config_.classes) {
    throw ContractViolation("network backward: dlogits " + shape_string(dlogits.shape()) +
                            " does not match the cached batch");
  }
  const BranchId branch = cache.branch;

  DenseGrads head = dense_backward(cache.pooled, head_w_.value, dlogits);
  add_inplace(head_w_.grad, head.dw);
  add_inplace(head_b_.grad, head.db);
  Tensor d = global_avg_pool_backward(cache.final_act.shape(), head.dx);
  d = relu_backward(cache.final_bn_out, d);
  BnGrads fg = final_bn_.backward(cache.final_bn, d, branch);
  final_bn_.accumulate(fg, branch);
  d = std::move(fg.dx);

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    PreActBlock& blk = blocks_[i];
    const BlockCache& bc = cache.blocks[i];
    // d is the gradient w.r.t. the block output.
    Tensor da2 = conv_backward(blk.conv2, bc.act2, d);
    Tensor dbn2 = relu_backward(bc.bn2_out, da2);
    BnGrads g2 = blk.bn2.backward(bc.bn2, dbn2, branch);
    blk.bn2.accumulate(g2, branch);
    Tensor da1 = conv_backward(blk.conv1, bc.act1, g2.dx);
    Tensor dx_direct;
    if (blk.shortcut) {
      add_inplace(da1, conv_backward(*blk.shortcut, bc.act1, d));
    } else {
      dx_direct = std::move(d);
    }
    Tensor dbn1 = relu_backward(bc.bn1_out, da1);
    BnGrads g1 = blk.bn1.backward(bc.bn1, dbn1, branch);
    blk.bn1.accumulate(g1, branch);
    d = std::move(g1.dx);
    if (!dx_direct.empty()) add_inplace(d, dx_direct);
  }
  conv_backward(stem_, cache.input, d);
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.param->zero_grad();
}

std::vector<NamedParam> Network::parameters() {
  std::vector<NamedParam> out;
  out.push_back({"stem.conv", &stem_.weight});
  const int n = config_.blocks_per_group();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    PreActBlock& blk = blocks_[i];
    const std::string name = block_name(i / n, i % n);
    norm_params(out, name + ".bn1", blk.bn1);
    out.push_back({name + ".conv1", &blk.conv1.weight});
    norm_params(out, name + ".bn2", blk.bn2);
    out.push_back({name + ".conv2", &blk.conv2.weight});
    if (blk.shortcut) out.push_back({name + ".shortcut", &blk.shortcut->weight});
  }
  norm_params(out, "final.bn", final_bn_);
  out.push_back({"head.weight", &head_w_});
  out.push_back({"head.bias", &head_b_});
  return out;
}

std::vector<NamedNorm> Network::norm_layers() {
  std::vector<NamedNorm> out;
  const int n = config_.blocks_per_group();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string name = block_name(i / n, i % n);
    out.push_back({name + ".bn1", &blocks_[i].bn1});
    out.push_back({name + ".bn2", &blocks_[i].bn2});
  }
  out.push_back({"final.bn", &final_bn_});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : const_cast<Network*>(this)->parameters()) total += p.param->value.size();
  return total;
}

bool Network::operator==(const Network& other) const {
  if (!(config_ == other.config_) || blocks_.size() != other.blocks_.size()) return false;
  auto a = const_cast<Network*>(this)->parameters();
  auto b = const_cast<Network&>(other).parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].param->value != b[i].param->value) return false;
  }
  auto na = const_cast<Network*>(this)->norm_layers();
  auto nb = const_cast<Network&>(other).norm_layers();
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (na[i].norm->stat_slots() != nb[i].norm->stat_slots()) return false;
  }
  return true;
}

}  // namespace sepbn
