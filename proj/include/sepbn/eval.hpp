#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/corruption.hpp"
#include "sepbn/data.hpp"
#include "sepbn/network.hpp"

namespace sepbn {

/// A trained network together with the standardization it was trained with.
struct Model {
  Network net;
  Standardization norm;
};

// Which probabilities a prediction uses: one branch, or the convex blend
// (1 - lambda) * p_main + lambda * p_aux of post-softmax probabilities.
struct Predictor {
  enum class Kind { Main, Auxiliary, Blend };
  Kind kind = Kind::Main;
  double lambda = 0.0;

  static Predictor main() { return {Kind::Main, 0.0}; }
  static Predictor auxiliary() { return {Kind::Auxiliary, 1.0}; }
  // Throws ContractViolation unless lambda is in [0, 1].
  static Predictor blend(double lambda);

  // Blend endpoints reduce to the single branch.
  bool uses_main() const { return kind == Kind::Main || (kind == Kind::Blend && lambda < 1.0); }
  bool uses_aux() const { return kind == Kind::Auxiliary || (kind == Kind::Blend && lambda > 0.0); }
  // "main", "aux" or "lambda=<value>".
  std::string name() const;
  bool operator==(const Predictor&) const = default;
};

// Softmax outputs of both branches for one batch. A branch that no requested
// predictor needs is left empty.
struct BranchProbs {
  Tensor main;
  Tensor aux;
};

// Evaluates already-standardized NCHW input through the requested branches.
BranchProbs branch_probabilities(const Model& model, const Tensor& standardized, bool need_main,
                                 bool need_aux);
// Same for [0,1] pixel input; standardization is applied first.
BranchProbs pixel_probabilities(const Model& model, const Tensor& pixels, bool need_main,
                                bool need_aux);
Tensor combine(const BranchProbs& probs, const Predictor& predictor);

// (1 - lambda) * softmax(main) + lambda * softmax(aux) for a pixel-space
// batch. Throws ContractViolation unless lambda is in [0, 1].
Tensor interpolate_predict(const Model& model, const Tensor& pixels, double lambda);

// Row-wise argmax, ties to the lowest class index.
std::vector<int> argmax_rows(const Tensor& probs);
// Fraction of rows whose argmax equals the label.
double accuracy_from_probs(const Tensor& probs, std::span<const int> labels);
// Fraction of rows whose label is among the k largest entries (ties resolved
// toward lower class indices).
double topk_from_probs(const Tensor& probs, std::span<const int> labels, int k);

// Clean top-1 accuracy. Throws ContractViolation for an empty dataset.
double evaluate(const Model& model, const Dataset& ds, const Predictor& predictor);
double evaluate(const Model& model, const Dataset& ds, BranchId branch);
double evaluate_topk(const Model& model, const Dataset& ds, BranchId branch, int k);
// Predicted classes for every item.
std::vector<int> predict(const Model& model, const Dataset& ds, const Predictor& predictor);

// --- corruption error -------------------------------------------------------------

struct CorruptionReport {
  std::string predictor;
  std::vector<Corruption> corruptions;
  std::vector<std::array<double, kSeverities>> errors;  // E[c][s-1] in [0,1]
  std::vector<double> uce;                              // mean over severities
  double mean_uce = 0.0;
  std::vector<double> ce;  // empty unless a baseline was attached
  double mean_ce = 0.0;
  std::string provenance =
      "procedural corruption suite; comparable across models evaluated here, not to published "
      "benchmark numbers";
};

// Fills uce and mean_uce from errors.
void summarize(CorruptionReport& report);
// CE_c = sum_s E[c][s] / sum_s E_base[c][s]; NaN where the baseline sum is 0.
// mean_ce averages the finite entries. Throws ConfigError when the baseline
// lacks one of the report's corruptions.
void attach_baseline(CorruptionReport& report, const CorruptionReport& baseline);

// Corrupts every item under each (corruption, severity); image i draws from
// corruption_stream(seed, c, s, i). One report per predictor, all computed
// from the same corrupted inputs.
std::vector<CorruptionReport> corruption_suite(const Model& model, const Dataset& ds,
                                               const std::vector<Corruption>& corruptions,
                                               const std::vector<Predictor>& predictors,
                                               std::uint64_t seed);
CorruptionReport corruption_suite(const Model& model, const Dataset& ds,
                                  const std::vector<Corruption>& corruptions,
                                  const Predictor& predictor, std::uint64_t seed);

// --- Fourier sensitivity ------------------------------------------------------------

/// Error rate per grating frequency, stored in centered layout: row a holds
/// vertical frequency a - H/2, column b horizontal frequency b - W/2.
struct FourierMap {
  std::string predictor;
  int height = 0;
  int width = 0;
  double norm = 0.0;
  std::vector<double> errors;

  double at_index(int row, int col) const {
    return errors[static_cast<std::size_t>(row) * width + col];
  }
  double at_frequency(int fy, int fx) const;
};

// Sign (+1 or -1) applied to the grating for image `index` at the canonical
// cell (fy, fx).
float grating_sign(std::uint64_t seed, int fy, int fx, std::uint64_t index);

// For every frequency, adds sign * U to each channel of every standardized
// image, where U is the real grating of l2 norm r over H x W, and records the
// predictor's error rate. Cells (fy, fx) and (-fy, -fx) share one evaluation.
// Throws ContractViolation for r <= 0 or an empty dataset.
std::vector<FourierMap> fourier_sensitivity(const Model& model, const Dataset& ds, double r,
                                            const std::vector<Predictor>& predictors,
                                            std::uint64_t seed);
FourierMap fourier_sensitivity(const Model& model, const Dataset& ds, double r,
                               const Predictor& predictor, std::uint64_t seed);

// --- low-pass sweep -------------------------------------------------------------------

// Accuracy on the first `samples` items (0 = all) after low-pass filtering
// each image at every bandwidth.
std::vector<double> low_pass_sweep(const Model& model, const Dataset& ds,
                                   const std::vector<int>& bandwidths, const Predictor& predictor,
                                   std::size_t samples = 500);

// --- affinity -----------------------------------------------------------------------------

// 100 * (accuracy on policy-augmented items - clean accuracy), Main branch.
// Image i draws from RngStream(seed, 0, i, Affinity).
double affinity(const Model& clean_model, const Dataset& ds, const AugmentPolicy& policy,
                std::uint64_t seed);

}  // namespace sepbn
