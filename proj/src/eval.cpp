#include "sepbn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sepbn/errors.hpp"
#include "sepbn/ops.hpp"
#include "sepbn/spectral.hpp"

namespace sepbn {

namespace {

constexpr std::size_t kChunk = 250;

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractViolation("interpolation weight must lie in [0, 1], got " + std::to_string(lambda));
  }
}

void check_nonempty(const Dataset& ds) {
  if (ds.size() == 0) throw ContractViolation("evaluation on an empty dataset");
}

Tensor slice_rows(const Tensor& batch, std::size_t begin, std::size_t end) {
  Shape shape = batch.shape();
  const std::size_t per = batch.size() / static_cast<std::size_t>(shape[0]);
  shape[0] = static_cast<int>(end - begin);
  std::vector<float> values(batch.data() + begin * per, batch.data() + end * per);
  return Tensor(std::move(shape), std::move(values));
}

std::vector<std::size_t> range_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

// Counts argmax hits of every predictor over one batch.
void count_hits(const BranchProbs& probs, const std::vector<Predictor>& predictors,
                std::span<const int> labels, std::vector<std::size_t>& hits) {
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    const auto pred = argmax_rows(combine(probs, predictors[p]));
    for (std::size_t i = 0; i < pred.size(); ++i) hits[p] += pred[i] == labels[i] ? 1 : 0;
  }
}

bool needs_main(const std::vector<Predictor>& ps) {
  return std::any_of(ps.begin(), ps.end(), [](const Predictor& p) { return p.uses_main(); });
}
bool needs_aux(const std::vector<Predictor>& ps) {
  return std::any_of(ps.begin(), ps.end(), [](const Predictor& p) { return p.uses_aux(); });
}

}  // namespace

Predictor Predictor::blend(double lambda) {
  check_lambda(lambda);
  return {Kind::Blend, lambda};
}

std::string Predictor::name() const {
  switch (kind) {
    case Kind::Main: return "main";
    case Kind::Auxiliary: return "aux";
    case Kind::Blend: break;
  }
  std::ostringstream os;
  os << "lambda=" << lambda;
  return os.str();
}

BranchProbs branch_probabilities(const Model& model, const Tensor& standardized, bool need_main,
                                 bool need_aux) {
  BranchProbs out;
  if (need_main) out.main = softmax(model.net.forward_eval(standardized, BranchId::Main));
  if (need_aux) out.aux = softmax(model.net.forward_eval(standardized, BranchId::Auxiliary));
  return out;
}

BranchProbs pixel_probabilities(const Model& model, const Tensor& pixels, bool need_main,
                                bool need_aux) {
  Tensor x = pixels;
  model.norm.apply(x);
  return branch_probabilities(model, x, need_main, need_aux);
}

Tensor combine(const BranchProbs& probs, const Predictor& predictor) {
  switch (predictor.kind) {
    case Predictor::Kind::Main: return probs.main;
    case Predictor::Kind::Auxiliary: return probs.aux;
    case Predictor::Kind::Blend: break;
  }
  check_lambda(predictor.lambda);
  if (predictor.lambda == 0.0) return probs.main;
  if (predictor.lambda == 1.0) return probs.aux;
  if (probs.main.shape() != probs.aux.shape()) {
    throw ContractViolation("branch probability shapes differ: " + shape_string(probs.main.shape()) +
                            " vs " + shape_string(probs.aux.shape()));
  }
  Tensor out(probs.main.shape());
  const double l = predictor.lambda;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((1.0 - l) * probs.main[i] + l * probs.aux[i]);
  }
  return out;
}

Tensor interpolate_predict(const Model& model, const Tensor& pixels, double lambda) {
  check_lambda(lambda);
  return combine(pixel_probabilities(model, pixels, true, true), Predictor::blend(lambda));
}

std::vector<int> argmax_rows(const Tensor& probs) {
  const int n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = probs.data() + static_cast<std::size_t>(i) * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy_from_probs(const Tensor& probs, std::span<const int> labels) {
  const auto pred = argmax_rows(probs);
  if (pred.size() != labels.size()) throw ContractViolation("label count differs from batch size");
  if (pred.empty()) throw ContractViolation("accuracy of an empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double topk_from_probs(const Tensor& probs, std::span<const int> labels, int k) {
  const int n = probs.dim(0), classes = probs.dim(1);
  if (k < 1) throw ContractViolation("top-k requires k >= 1");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ContractViolation("label count differs from batch size");
  }
  std::size_t hits = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = probs.data() + static_cast<std::size_t>(i) * classes;
    const int y = labels[i];
    // Rank of the label: entries strictly greater, or equal at a lower index.
    int rank = 0;
    for (int j = 0; j < classes; ++j) {
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
    }
    hits += rank < k ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<int> predict(const Model& model, const Dataset& ds, const Predictor& predictor) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (std::size_t b = 0; b < ds.size(); b += kChunk) {
    const auto idx = range_indices(b, std::min(ds.size(), b + kChunk));
    const auto probs =
        pixel_probabilities(model, gather_images(ds, idx), predictor.uses_main(), predictor.uses_aux());
    const auto pred = argmax_rows(combine(probs, predictor));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double evaluate(const Model& model, const Dataset& ds, const Predictor& predictor) {
  check_nonempty(ds);
  const auto pred = predict(model, ds, predictor);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double evaluate(const Model& model, const Dataset& ds, BranchId branch) {
  return evaluate(model, ds, branch == BranchId::Main ? Predictor::main() : Predictor::auxiliary());
}

double evaluate_topk(const Model& model, const Dataset& ds, BranchId branch, int k) {
  check_nonempty(ds);
  const bool main = branch == BranchId::Main;
  double hits = 0.0;
  for (std::size_t b = 0; b < ds.size(); b += kChunk) {
    const auto idx = range_indices(b, std::min(ds.size(), b + kChunk));
    const auto probs = pixel_probabilities(model, gather_images(ds, idx), main, !main);
    hits += topk_from_probs(main ? probs.main : probs.aux, gather_labels(ds, idx), k) *
            static_cast<double>(idx.size());
  }
  return hits / static_cast<double>(ds.size());
}

// --- corruption error -------------------------------------------------------------

void summarize(CorruptionReport& report) {
  report.uce.assign(report.errors.size(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < report.errors.size(); ++c) {
    double sum = 0.0;
    for (double e : report.errors[c]) sum += e;
    report.uce[c] = sum / kSeverities;
    total += report.uce[c];
  }
  report.mean_uce = report.errors.empty() ? 0.0 : total / static_cast<double>(report.errors.size());
}

void attach_baseline(CorruptionReport& report, const CorruptionReport& baseline) {
  report.ce.assign(report.corruptions.size(), 0.0);
  double total = 0.0;
  std::size_t finite = 0;
  for (std::size_t c = 0; c < report.corruptions.size(); ++c) {
    const auto it = std::find(baseline.corruptions.begin(), baseline.corruptions.end(),
                              report.corruptions[c]);
    if (it == baseline.corruptions.end()) {
      throw ConfigError("CE baseline has no results for corruption '" +
                        corruption_name(report.corruptions[c]) + "'");
    }
    const auto& base = baseline.errors[static_cast<std::size_t>(it - baseline.corruptions.begin())];
    double num = 0.0, den = 0.0;
    for (int s = 0; s < kSeverities; ++s) {
      num += report.errors[c][s];
      den += base[s];
    }
    report.ce[c] = den > 0.0 ? num / den : std::nan("");
    if (std::isfinite(report.ce[c])) {
      total += report.ce[c];
      ++finite;
    }
  }
  report.mean_ce = finite > 0 ? total / static_cast<double>(finite) : std::nan("");
}

std::vector<CorruptionReport> corruption_suite(const Model& model, const Dataset& ds,
                                               const std::vector<Corruption>& corruptions,
                                               const std::vector<Predictor>& predictors,
                                               std::uint64_t seed) {
  check_nonempty(ds);
  std::vector<CorruptionReport> reports(predictors.size());
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    reports[p].predictor = predictors[p].name();
    reports[p].corruptions = corruptions;
    reports[p].errors.assign(corruptions.size(), {});
  }
  const bool need_main = needs_main(predictors), need_aux = needs_aux(predictors);
  for (std::size_t c = 0; c < corruptions.size(); ++c) {
    for (int s = 1; s <= kSeverities; ++s) {
      std::vector<std::size_t> hits(predictors.size(), 0);
      for (std::size_t b = 0; b < ds.size(); b += kChunk) {
        const auto idx = range_indices(b, std::min(ds.size(), b + kChunk));
        Tensor batch = gather_images(ds, idx);
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < idx.size(); ++i) {
          auto rng = corruption_stream(seed, corruptions[c], s, idx[i]);
          image_to_batch(corrupt(image_from_batch(batch, static_cast<int>(i)), corruptions[c], s, rng),
                         batch, static_cast<int>(i));
        }
        count_hits(pixel_probabilities(model, batch, need_main, need_aux), predictors,
                   gather_labels(ds, idx), hits);
      }
      for (std::size_t p = 0; p < predictors.size(); ++p) {
        reports[p].errors[c][s - 1] =
            1.0 - static_cast<double>(hits[p]) / static_cast<double>(ds.size());
      }
    }
  }
  for (auto& r : reports) summarize(r);
  return reports;
}

CorruptionReport corruption_suite(const Model& model, const Dataset& ds,
                                  const std::vector<Corruption>& corruptions,
                                  const Predictor& predictor, std::uint64_t seed) {
  return corruption_suite(model, ds, corruptions, std::vector<Predictor>{predictor}, seed).front();
}

// --- Fourier sensitivity ------------------------------------------------------------

double FourierMap::at_frequency(int fy, int fx) const {
  return at_index(centered_index(fy, height), centered_index(fx, width));
}

float grating_sign(std::uint64_t seed, int fy, int fx, std::uint64_t index) {
  // Cell id packs the centered frequencies into the epoch slot.
  const auto cell = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(fy)) << 32) |
                    static_cast<std::uint32_t>(fx);
  RngStream rng(seed, cell, index, StreamTag::Fourier);
  return rng.bernoulli(0.5) ? 1.0f : -1.0f;
}

std::vector<FourierMap> fourier_sensitivity(const Model& model, const Dataset& ds, double r,
                                            const std::vector<Predictor>& predictors,
                                            std::uint64_t seed) {
  if (!(r > 0.0)) throw ContractViolation("Fourier perturbation norm must be positive");
  check_nonempty(ds);
  const int h = ds.height, w = ds.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<FourierMap> maps(predictors.size());
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    maps[p] = {predictors[p].name(), h, w, r, std::vector<double>(plane, 0.0)};
  }

  const auto all = range_indices(0, ds.size());
  Tensor base = gather_images(ds, all);
  model.norm.apply(base);
  const bool need_main = needs_main(predictors), need_aux = needs_aux(predictors);

  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const int fy = row - h / 2, fx = col - w / 2;
      const int my = centered_index(mirror_frequency(fy, h), h);
      const int mx = centered_index(mirror_frequency(fx, w), w);
      // Evaluate each conjugate pair once, at its lower linear index.
      if (static_cast<std::size_t>(my) * w + mx < static_cast<std::size_t>(row) * w + col) continue;

      const auto grating = fourier_grating(h, w, fy, fx, r);
      std::vector<std::size_t> hits(predictors.size(), 0);
      for (std::size_t b = 0; b < ds.size(); b += kChunk) {
        const std::size_t e = std::min(ds.size(), b + kChunk);
        Tensor batch = slice_rows(base, b, e);
        for (std::size_t i = 0; i < e - b; ++i) {
          const float sign = grating_sign(seed, fy, fx, b + i);
          for (int c = 0; c < ds.channels; ++c) {
            float* px = batch.data() + (i * ds.channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) px[k] += static_cast<float>(sign * grating[k]);
          }
        }
        std::span<const int> labels(ds.labels.data() + b, e - b);
        count_hits(branch_probabilities(model, batch, need_main, need_aux), predictors, labels, hits);
      }
      for (std::size_t p = 0; p < predictors.size(); ++p) {
        const double err = 1.0 - static_cast<double>(hits[p]) / static_cast<double>(ds.size());
        maps[p].errors[static_cast<std::size_t>(row) * w + col] = err;
        maps[p].errors[static_cast<std::size_t>(my) * w + mx] = err;
      }
    }
  }
  return maps;
}

FourierMap fourier_sensitivity(const Model& model, const Dataset& ds, double r,
                               const Predictor& predictor, std::uint64_t seed) {
  return fourier_sensitivity(model, ds, r, std::vector<Predictor>{predictor}, seed).front();
}

// --- low-pass sweep -------------------------------------------------------------------

std::vector<double> low_pass_sweep(const Model& model, const Dataset& ds,
                                   const std::vector<int>& bandwidths, const Predictor& predictor,
                                   std::size_t samples) {
  const Dataset subset = ds.head(samples);
  check_nonempty(subset);
  const auto idx = range_indices(0, subset.size());
  const Tensor clean = gather_images(subset, idx);
  std::vector<double> out;
  out.reserve(bandwidths.size());
  for (int bandwidth : bandwidths) {
    Tensor batch = clean;
    // A band covering every frequency on both axes leaves the input untouched.
    const bool full = bandwidth >= ds.height && bandwidth >= ds.width;
    if (!full) {
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < idx.size(); ++i) {
        image_to_batch(low_pass(image_from_batch(clean, static_cast<int>(i)), bandwidth), batch,
                       static_cast<int>(i));
      }
    } else if (bandwidth > std::max(ds.height, ds.width)) {
      low_pass(subset.image_copy(0), bandwidth);  // raises the range error
    }
    std::vector<std::size_t> hits(1, 0);
    for (std::size_t b = 0; b < subset.size(); b += kChunk) {
      const std::size_t e = std::min(subset.size(), b + kChunk);
      std::span<const int> labels(subset.labels.data() + b, e - b);
      count_hits(pixel_probabilities(model, slice_rows(batch, b, e), predictor.uses_main(),
                                     predictor.uses_aux()),
                 {predictor}, labels, hits);
    }
    out.push_back(static_cast<double>(hits[0]) / static_cast<double>(subset.size()));
  }
  return out;
}

// --- affinity -----------------------------------------------------------------------------

double affinity(const Model& clean_model, const Dataset& ds, const AugmentPolicy& policy,
                std::uint64_t seed) {
  check_nonempty(ds);
  std::size_t clean_hits = 0, aug_hits = 0;
  for (std::size_t b = 0; b < ds.size(); b += kChunk) {
    const auto idx = range_indices(b, std::min(ds.size(), b + kChunk));
    const Tensor clean = gather_images(ds, idx);
    std::vector<RngKey> keys(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) keys[i] = {seed, 0, idx[i], StreamTag::Affinity};
    const Tensor augmented = apply_policy(clean, policy, keys);
    const auto labels = gather_labels(ds, idx);
    const auto p_clean = argmax_rows(pixel_probabilities(clean_model, clean, true, false).main);
    const auto p_aug = argmax_rows(pixel_probabilities(clean_model, augmented, true, false).main);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      clean_hits += p_clean[i] == labels[i] ? 1 : 0;
      aug_hits += p_aug[i] == labels[i] ? 1 : 0;
    }
  }
  const double n = static_cast<double>(ds.size());
  return 100.0 * (static_cast<double>(aug_hits) / n - static_cast<double>(clean_hits) / n);
}

}  // namespace sepbn
