#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "sepbn/errors.hpp"
#include "sepbn/eval.hpp"
#include "sepbn/ops.hpp"
#include "sepbn/spectral.hpp"

using namespace sepbn;

namespace {

struct Fixture {
  Dataset train;
  Dataset test;
  Model model;
};

// Untrained desk network on small synthetic images with both branches' running
// statistics warmed up on different augmentations so they disagree.
Fixture make_fixture(std::size_t n_test = 48, int size = 8, int classes = 4) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.n_train = 64;
  spec.n_test = n_test;
  spec.size = size;
  spec.seed = 5;
  auto [train, test] = synth_dataset(spec);
  ModelConfig mc;
  mc.classes = classes;
  mc.bn_mode = BnMode::FullySeparate;
  Fixture f{train, test, {Network::build(mc, 9), train.norm}};
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor clean = gather_images(train, idx);
  Tensor noisy = clean;
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = 1.0f - noisy[i];
  train.norm.apply(clean);
  train.norm.apply(noisy);
  f.model.net.forward_train(clean, BranchId::Main);
  f.model.net.forward_train(noisy, BranchId::Auxiliary);
  return f;
}

Dataset relabeled(Dataset ds, std::vector<int> labels) {
  ds.labels = std::move(labels);
  return ds;
}

double error_of(const Model& m, const Tensor& pixels, std::span<const int> labels, const Predictor& p) {
  return 1.0 - accuracy_from_probs(combine(pixel_probabilities(m, pixels, p.uses_main(), p.uses_aux()), p), labels);
}

}  // namespace

TEST_CASE("argmax, accuracy and top-k") {
  const Tensor probs({3, 3}, std::vector<float>{0.2f, 0.5f, 0.3f, 0.4f, 0.4f, 0.2f, 0.1f, 0.1f, 0.8f});
  CHECK(argmax_rows(probs) == std::vector<int>{1, 0, 2});
  const std::vector<int> labels = {1, 1, 0};
  CHECK(accuracy_from_probs(probs, labels) == doctest::Approx(1.0 / 3.0));
  // Row 1 ties classes 0/1 and top-1 picks 0. Row 2's label 0 ties class 1
  // for second place and wins on index order, so top-2 is perfect.
  CHECK(topk_from_probs(probs, labels, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(topk_from_probs(probs, labels, 2) == doctest::Approx(1.0));
  CHECK(topk_from_probs(probs, labels, 3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(accuracy_from_probs(probs, std::vector<int>{1, 1}), ContractViolation);
}

TEST_CASE("evaluate") {
  const Fixture f = make_fixture();
  const auto pred = predict(f.model, f.test, Predictor::main());
  CHECK(evaluate(f.model, relabeled(f.test, pred), BranchId::Main) == 1.0);
  CHECK(evaluate(f.model, f.test, BranchId::Main) == evaluate(f.model, f.test, BranchId::Main));
  CHECK(evaluate(f.model, f.test, Predictor::main()) == evaluate(f.model, f.test, BranchId::Main));
  CHECK(evaluate_topk(f.model, f.test, BranchId::Main, 4) == 1.0);
  CHECK_THROWS_AS(evaluate(f.model, f.test.head(0).select(std::vector<std::size_t>{}), BranchId::Main),
                  ContractViolation);

  Model fresh{Network::build(f.model.net.config(), 1), f.model.norm};
  CHECK_THROWS_AS(evaluate(fresh, f.test, BranchId::Main), UninitializedStatisticsError);
}

TEST_CASE("untrained network on random labels is at chance") {
  SyntheticSpec spec;
  spec.classes = 10;
  spec.n_train = 100;
  spec.n_test = 10000;
  spec.size = 8;
  spec.seed = 8;
  auto [train, test] = synth_dataset(spec);
  RngStream rng(4, 0, 0, StreamTag::Synthetic);
  for (auto& l : test.labels) l = static_cast<int>(rng.below(10));
  ModelConfig mc;
  mc.classes = 10;
  Model m{Network::build(mc, 2), train.norm};
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor x = gather_images(train, idx);
  train.norm.apply(x);
  m.net.forward_train(x, BranchId::Main);
  const double acc = evaluate(m, test, BranchId::Main);
  CHECK(acc >= 0.07);
  CHECK(acc <= 0.13);
}

TEST_CASE("lambda interpolation") {
  const Fixture f = make_fixture();
  std::vector<std::size_t> idx(f.test.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor pixels = gather_images(f.test, idx);

  CHECK(argmax_rows(interpolate_predict(f.model, pixels, 0.0)) == predict(f.model, f.test, Predictor::main()));
  CHECK(argmax_rows(interpolate_predict(f.model, pixels, 1.0)) == predict(f.model, f.test, Predictor::auxiliary()));
  CHECK(evaluate(f.model, f.test, Predictor::blend(0.0)) == evaluate(f.model, f.test, BranchId::Main));
  CHECK(evaluate(f.model, f.test, Predictor::blend(1.0)) == evaluate(f.model, f.test, BranchId::Auxiliary));

  const Tensor mid = interpolate_predict(f.model, pixels, 0.3);
  const BranchProbs both = pixel_probabilities(f.model, pixels, true, true);
  for (int i = 0; i < mid.dim(0); ++i) {
    double row = 0.0;
    for (int k = 0; k < mid.dim(1); ++k) {
      const std::size_t at = static_cast<std::size_t>(i) * mid.dim(1) + k;
      row += mid[at];
      CHECK(mid[at] == doctest::Approx(0.7 * both.main[at] + 0.3 * both.aux[at]).epsilon(1e-6));
    }
    CHECK(std::abs(row - 1.0) <= 1e-5);
  }

  BranchProbs hand{Tensor({1, 2}, std::vector<float>{0.8f, 0.2f}), Tensor({1, 2}, std::vector<float>{0.2f, 0.8f})};
  const Tensor half = combine(hand, Predictor::blend(0.5));
  CHECK(half[0] == doctest::Approx(0.5f));
  CHECK(half[1] == doctest::Approx(0.5f));

  CHECK_THROWS_AS(interpolate_predict(f.model, pixels, -0.1), ContractViolation);
  CHECK_THROWS_AS(interpolate_predict(f.model, pixels, 1.5), ContractViolation);
  CHECK_THROWS_AS(Predictor::blend(2.0), ContractViolation);
  CHECK(Predictor::blend(0.25).name() == "lambda=0.25");
  CHECK(Predictor::main().name() == "main");
  CHECK(Predictor::auxiliary().name() == "aux");
}

TEST_CASE("corruptions") {
  for (Corruption c : all_corruptions()) {
    CHECK(parse_corruption(corruption_name(c)) == c);
    const double p1 = corruption_parameter(c, 1), p5 = corruption_parameter(c, 5);
    const bool increasing = p5 > p1;
    for (int s = 1; s < kSeverities; ++s) {
      const double a = corruption_parameter(c, s), b = corruption_parameter(c, s + 1);
      CHECK((increasing ? b > a : b < a));
    }
    Image img(3, 16, 16);
    RngStream fill(1, 0, 0, StreamTag::Synthetic);
    for (auto& v : img.pixels) v = static_cast<float>(fill.uniform());
    for (int s = 1; s <= kSeverities; ++s) {
      RngStream r1 = corruption_stream(3, c, s, 7), r2 = corruption_stream(3, c, s, 7);
      const Image out = corrupt(img, c, s, r1);
      CHECK(out == corrupt(img, c, s, r2));
      CHECK(out.pixels.size() == img.pixels.size());
      for (float v : out.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
    RngStream r = corruption_stream(3, c, 1, 0);
    CHECK_THROWS_AS(corrupt(img, c, 0, r), ContractViolation);
    CHECK_THROWS_AS(corruption_parameter(c, 6), ContractViolation);
  }
  CHECK(all_corruptions().size() == 7);
  CHECK_THROWS_AS(parse_corruption("fog"), ConfigError);
}

TEST_CASE("corruption report arithmetic") {
  CorruptionReport r;
  r.corruptions = {Corruption::GaussianNoise, Corruption::Contrast};
  r.errors = {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.05, 0.0, 0.25, 0.5, 0.7}};
  summarize(r);
  CHECK(r.uce[0] == doctest::Approx(0.3));

  // Independent summation oracle.
  double mean = 0.0;
  for (const auto& row : r.errors) {
    long double s = 0.0L;
    for (double e : row) s += e;
    mean += static_cast<double>(s / 5.0L);
  }
  mean /= 2.0;
  CHECK(std::abs(r.mean_uce - mean) <= 1e-12);

  CorruptionReport self = r;
  attach_baseline(self, r);
  CHECK(self.ce == std::vector<double>{1.0, 1.0});
  CHECK(self.mean_ce == 1.0);

  CorruptionReport base = r;
  base.errors = {{0.2, 0.2, 0.2, 0.2, 0.2}, {0.0, 0.0, 0.0, 0.0, 0.0}};
  summarize(base);
  CorruptionReport other = r;
  attach_baseline(other, base);
  CHECK(std::abs(other.ce[0] - 1.5 / 1.0) <= 1e-12);
  CHECK(std::isnan(other.ce[1]));
  CHECK(other.mean_ce == doctest::Approx(1.5));

  CorruptionReport missing = r;
  missing.corruptions = {Corruption::GaussianNoise};
  missing.errors.resize(1);
  summarize(missing);
  CorruptionReport needs = r;
  CHECK_THROWS_AS(attach_baseline(needs, missing), ConfigError);
}

TEST_CASE("corruption suite") {
  const Fixture f = make_fixture(24);
  const std::vector<Corruption> cs = {Corruption::GaussianNoise, Corruption::Pixelate};
  const auto reports = corruption_suite(f.model, f.test, cs, {Predictor::main(), Predictor::blend(0.5)}, 77);
  REQUIRE(reports.size() == 2);
  CHECK(reports[1].predictor == "lambda=0.5");
  CHECK(reports[0].provenance.find("not to published") != std::string::npos);
  // Recompute one cell by hand.
  std::vector<std::size_t> idx(f.test.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor pixels = gather_images(f.test, idx);
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    RngStream rng = corruption_stream(77, Corruption::Pixelate, 3, i);
    image_to_batch(corrupt(f.test.image_copy(i), Corruption::Pixelate, 3, rng), pixels, static_cast<int>(i));
  }
  CHECK(reports[0].errors[1][2] == error_of(f.model, pixels, f.test.labels, Predictor::main()));
  CHECK(reports[1].errors[1][2] == error_of(f.model, pixels, f.test.labels, Predictor::blend(0.5)));
  for (const auto& rep : reports) {
    for (const auto& row : rep.errors) {
      for (double e : row) {
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
      }
    }
  }
  const auto single = corruption_suite(f.model, f.test, cs, Predictor::main(), 77);
  CHECK(single.errors == reports[0].errors);
}

TEST_CASE("fourier sensitivity") {
  const Fixture f = make_fixture(16);
  const FourierMap map = fourier_sensitivity(f.model, f.test, 8.0, Predictor::main(), 21);
  CHECK(map.height == 8);
  CHECK(map.width == 8);
  CHECK(map.errors.size() == 64);
  for (int fy = -4; fy < 4; ++fy) {
    for (int fx = -4; fx < 4; ++fx) {
      const double e = map.at_frequency(fy, fx);
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
      CHECK(e == map.at_frequency(mirror_frequency(fy, 8), mirror_frequency(fx, 8)));
    }
  }
  CHECK(map.at_index(4, 4) == map.at_frequency(0, 0));

  // DC cell: a constant shift of +-r/sqrt(HW) on every standardized pixel.
  std::vector<std::size_t> idx(f.test.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor x = gather_images(f.test, idx);
  f.model.norm.apply(x);
  const std::size_t per_image = x.size() / f.test.size();
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const float shift = grating_sign(21, 0, 0, i) * static_cast<float>(8.0 / 8.0);
    for (std::size_t j = 0; j < per_image; ++j) x[i * per_image + j] += shift;
  }
  const BranchProbs p = branch_probabilities(f.model, x, true, false);
  CHECK(map.at_frequency(0, 0) == doctest::Approx(1.0 - accuracy_from_probs(p.main, f.test.labels)));

  const auto maps = fourier_sensitivity(f.model, f.test, 8.0, {Predictor::main(), Predictor::auxiliary()}, 21);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0].errors == map.errors);
  CHECK(maps[1].predictor == "aux");
  CHECK_THROWS_AS(fourier_sensitivity(f.model, f.test, 0.0, Predictor::main(), 21), ContractViolation);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const float s = grating_sign(1, 2, 3, i);
    CHECK((s == 1.0f || s == -1.0f));
  }
}

TEST_CASE("low-pass sweep") {
  const Fixture f = make_fixture(20);
  const auto acc = low_pass_sweep(f.model, f.test, {8, 1, 4, 4, 8}, Predictor::main(), 0);
  REQUIRE(acc.size() == 5);
  CHECK(acc[0] == evaluate(f.model, f.test, BranchId::Main));
  CHECK(acc[0] == acc[4]);
  CHECK(acc[2] == acc[3]);
  const auto part = low_pass_sweep(f.model, f.test, {8}, Predictor::main(), 10);
  CHECK(part[0] == evaluate(f.model, f.test.head(10), BranchId::Main));
  CHECK_THROWS_AS(low_pass_sweep(f.model, f.test, {9}, Predictor::main(), 0), ContractViolation);
}

TEST_CASE("affinity") {
  const Fixture f = make_fixture(32, 16);
  CHECK(affinity(f.model, f.test, AugmentPolicy::none(), 3) == 0.0);
  const AugmentPolicy flip = AugmentPolicy::flip();
  std::vector<std::size_t> idx(f.test.size());
  std::vector<RngKey> keys;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = i;
    keys.push_back({3, 0, i, StreamTag::Affinity});
  }
  const Tensor aug = apply_policy(gather_images(f.test, idx), flip, keys);
  const double expected =
      100.0 * ((1.0 - error_of(f.model, aug, f.test.labels, Predictor::main())) - evaluate(f.model, f.test, BranchId::Main));
  CHECK(affinity(f.model, f.test, flip, 3) == doctest::Approx(expected).epsilon(1e-12));
}
