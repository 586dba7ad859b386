#include "sepbn/dual_bn.hpp"

#include <cmath>

#include "sepbn/errors.hpp"

namespace sepbn {

const char* branch_name(BranchId b) { return b == BranchId::Main ? "main" : "aux"; }

std::string bn_mode_name(BnMode mode) {
  switch (mode) {
    case BnMode::Single: return "single";
    case BnMode::SharedAffine: return "shared-affine";
    case BnMode::FullySeparate: return "fully-separate";
  }
  return "?";
}

BnMode parse_bn_mode(const std::string& name) {
  if (name == "single") return BnMode::Single;
  if (name == "shared-affine") return BnMode::SharedAffine;
  if (name == "fully-separate") return BnMode::FullySeparate;
  throw ConfigError("unknown bn mode '" + name +
                    "' (expected single, shared-affine or fully-separate)");
}

DualBatchNorm::DualBatchNorm(int channels, BnMode mode, float momentum, float eps)
    : channels_(channels), mode_(mode), momentum_(momentum), eps_(eps) {
  if (channels < 1) throw ContractViolation("DualBatchNorm needs at least one channel");
  if (!(momentum > 0.0f && momentum < 1.0f)) {
    throw ContractViolation("DualBatchNorm momentum must lie in (0, 1)");
  }
  if (!(eps > 0.0f)) throw ContractViolation("DualBatchNorm eps must be positive");
  const std::size_t affine = mode == BnMode::FullySeparate ? 2 : 1;
  const std::size_t stat = mode == BnMode::Single ? 1 : 2;
  for (std::size_t i = 0; i < affine; ++i) {
    gammas_.emplace_back(Tensor({channels}, 1.0f), false);
    betas_.emplace_back(Tensor({channels}, 0.0f), false);
  }
  for (std::size_t i = 0; i < stat; ++i) {
    stats_.push_back(RunningStats{std::vector<float>(channels, 0.0f),
                                  std::vector<float>(channels, 1.0f), 0});
  }
}

std::size_t DualBatchNorm::affine_slot(BranchId b) const {
  return mode_ == BnMode::FullySeparate ? static_cast<std::size_t>(b) : 0;
}

std::size_t DualBatchNorm::stats_slot(BranchId b) const {
  return mode_ == BnMode::Single ? 0 : static_cast<std::size_t>(b);
}

bool DualBatchNorm::operator==(const DualBatchNorm& other) const {
  if (channels_ != other.channels_ || mode_ != other.mode_ || momentum_ != other.momentum_ ||
      eps_ != other.eps_ || stats_ != other.stats_ || gammas_.size() != other.gammas_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < gammas_.size(); ++i) {
    if (gammas_[i].value != other.gammas_[i].value || betas_[i].value != other.betas_[i].value ||
        gammas_[i].grad != other.gammas_[i].grad || betas_[i].grad != other.betas_[i].grad) {
      return false;
    }
  }
  return true;
}

void DualBatchNorm::check_input(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw ContractViolation("batch norm expects NCHW input with " + std::to_string(channels_) +
                            " channels, got " + shape_string(x.shape()));
  }
}

Tensor DualBatchNorm::forward_train(const Tensor& x, BranchId branch, BnCache* cache) {
  check_input(x);
  const int n = x.dim(0), c = channels_;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  if (count < 2) {
    throw DegenerateBatchError("batch norm needs N*H*W >= 2 to form batch statistics, got " +
                               shape_string(x.shape()));
  }
  const Param& g = gamma(branch);
  const Param& bt = beta(branch);
  RunningStats& rs = stats(branch);

  Tensor y(x.shape());
  Tensor x_hat(x.shape());
  std::vector<float> inv_std(c);
  std::vector<double> batch_mean(c), batch_var(c);

#pragma omp parallel for schedule(static) if (c > 1)
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* src = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) sum += src[p];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* src = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = src[p] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps_));
    batch_mean[ch] = mean;
    batch_var[ch] = var;
    inv_std[ch] = static_cast<float>(istd);
    const float gv = g.value[ch], bv = bt.value[ch];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const float xh = static_cast<float>((x[off + p] - mean) * istd);
        x_hat[off + p] = xh;
        y[off + p] = gv * xh + bv;
      }
    }
  }

  const double m = momentum_;
  for (int ch = 0; ch < c; ++ch) {
    rs.mean[ch] = static_cast<float>((1.0 - m) * rs.mean[ch] + m * batch_mean[ch]);
    rs.var[ch] = static_cast<float>((1.0 - m) * rs.var[ch] + m * batch_var[ch]);
  }
  ++rs.updates;

  if (cache) {
    cache->branch = branch;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor DualBatchNorm::forward_eval(const Tensor& x, BranchId branch) const {
  check_input(x);
  const RunningStats& rs = stats(branch);
  if (rs.updates == 0) {
    throw UninitializedStatisticsError(std::string("batch norm branch '") + branch_name(branch) +
                                       "' has never been updated; run training first");
  }
  const Param& g = gamma(branch);
  const Param& bt = beta(branch);
  const int n = x.dim(0), c = channels_;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor y(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double istd = 1.0 / std::sqrt(static_cast<double>(rs.var[ch]) + eps_);
    const float scale = static_cast<float>(g.value[ch] * istd);
    const float shift = static_cast<float>(bt.value[ch] - rs.mean[ch] * g.value[ch] * istd);
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) y[off + p] = scale * x[off + p] + shift;
    }
  }
  return y;
}

BnGrads DualBatchNorm::backward(const BnCache& cache, const Tensor& dy, BranchId branch) const {
  if (cache.branch != branch) {
    throw ContractViolation(std::string("batch norm backward on branch '") + branch_name(branch) +
                            "' with a cache from branch '" + branch_name(cache.branch) + "'");
  }
  if (cache.x_hat.shape() != dy.shape() || static_cast<int>(cache.inv_std.size()) != channels_) {
    throw ContractViolation("batch norm backward: dy " + shape_string(dy.shape()) +
                            " does not match cached batch " + shape_string(cache.x_hat.shape()));
  }
  const int n = dy.dim(0), c = channels_;
  const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
  const double count = static_cast<double>(n) * static_cast<double>(plane);
  const Param& g = gamma(branch);

  BnGrads out{Tensor(dy.shape()), std::vector<float>(c), std::vector<float>(c)};
#pragma omp parallel for schedule(static) if (c > 1)
  for (int ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += dy[off + p];
        sum_dy_xhat += static_cast<double>(dy[off + p]) * cache.x_hat[off + p];
      }
    }
    out.dbeta[ch] = static_cast<float>(sum_dy);
    out.dgamma[ch] = static_cast<float>(sum_dy_xhat);
    // dx = gamma * inv_std / M * (M*dy - sum(dy) - x_hat * sum(dy*x_hat))
    const double k = static_cast<double>(g.value[ch]) * cache.inv_std[ch] / count;
    const double mean_dy = sum_dy;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        out.dx[off + p] = static_cast<float>(
            k * (count * dy[off + p] - mean_dy - cache.x_hat[off + p] * sum_dy_xhat));
      }
    }
  }
  return out;
}

void DualBatchNorm::accumulate(const BnGrads& grads, BranchId branch) {
  Param& g = gamma(branch);
  Param& b = beta(branch);
  for (int ch = 0; ch < channels_; ++ch) {
    g.grad[ch] += grads.dgamma[ch];
    b.grad[ch] += grads.dbeta[ch];
  }
}

}  // namespace sepbn
