#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sepbn/tensor.hpp"

namespace sepbn {

// Which set of BatchNorm statistics a batch is routed through. Main is the
// branch used for evaluation.
enum class BranchId : int { Main = 0, Auxiliary = 1 };

// How much of the BatchNorm state the two branches share:
//   Single         everything shared, the branch id is ignored
//   SharedAffine   one gamma/beta, per-branch running statistics
//   FullySeparate  nothing shared
enum class BnMode : int { Single = 0, SharedAffine = 1, FullySeparate = 2 };

const char* branch_name(BranchId b);
std::string bn_mode_name(BnMode mode);
BnMode parse_bn_mode(const std::string& name);

struct RunningStats {
  std::vector<float> mean;
  std::vector<float> var;
  std::uint64_t updates = 0;

  bool operator==(const RunningStats&) const = default;
};

// Values needed by the backward pass of one train-mode forward.
struct BnCache {
  BranchId branch = BranchId::Main;
  Tensor x_hat;
  std::vector<float> inv_std;
};

struct BnGrads {
  Tensor dx;
  std::vector<float> dgamma;
  std::vector<float> dbeta;
};

/// BatchNorm with two routable branches of statistics.
///
/// Storage is held in small slot vectors and each branch indexes into them,
/// so aliasing between branches follows from the mode and survives copies:
/// in Single mode both branches resolve to slot 0 for every quantity, in
/// SharedAffine mode only gamma/beta alias. Normalization and running-average
/// updates both use the biased batch variance.
class DualBatchNorm {
 public:
  DualBatchNorm() = default;
  DualBatchNorm(int channels, BnMode mode, float momentum = 0.1f, float eps = 1e-5f);

  int channels() const { return channels_; }
  BnMode mode() const { return mode_; }
  float momentum() const { return momentum_; }
  float eps() const { return eps_; }

  // y = gamma_b * (x - mean_batch) / sqrt(var_batch + eps) + beta_b, and the
  // branch's running statistics move towards the batch statistics.
  Tensor forward_train(const Tensor& x, BranchId branch, BnCache* cache = nullptr);

  // Uses the branch's running statistics; never mutates state.
  Tensor forward_eval(const Tensor& x, BranchId branch) const;

  // Full batch-coupled gradient. Does not touch the Param grads; the caller
  // accumulates dgamma/dbeta where it needs them.
  BnGrads backward(const BnCache& cache, const Tensor& dy, BranchId branch) const;

  // Adds dgamma/dbeta to the branch's Param grads.
  void accumulate(const BnGrads& grads, BranchId branch);

  Param& gamma(BranchId b) { return gammas_[affine_slot(b)]; }
  const Param& gamma(BranchId b) const { return gammas_[affine_slot(b)]; }
  Param& beta(BranchId b) { return betas_[affine_slot(b)]; }
  const Param& beta(BranchId b) const { return betas_[affine_slot(b)]; }
  RunningStats& stats(BranchId b) { return stats_[stats_slot(b)]; }
  const RunningStats& stats(BranchId b) const { return stats_[stats_slot(b)]; }

  // Distinct storage, in slot order.
  std::vector<Param>& gamma_slots() { return gammas_; }
  std::vector<Param>& beta_slots() { return betas_; }
  std::vector<RunningStats>& stat_slots() { return stats_; }
  const std::vector<RunningStats>& stat_slots() const { return stats_; }
  std::size_t affine_slot(BranchId b) const;
  std::size_t stats_slot(BranchId b) const;

  bool operator==(const DualBatchNorm& other) const;

 private:
  void check_input(const Tensor& x) const;

  int channels_ = 0;
  BnMode mode_ = BnMode::Single;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  std::vector<Param> gammas_;
  std::vector<Param> betas_;
  std::vector<RunningStats> stats_;
};

}  // namespace sepbn
