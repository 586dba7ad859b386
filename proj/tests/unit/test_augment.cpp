#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/errors.hpp"

using namespace sepbn;

namespace {

Image hand_2x2() {
  Image img(2, 2, 2);
  const float v[4] = {1, 2, 3, 4};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) img.at(c, i / 2, i % 2) = v[i] / 4.0f;
  }
  return img;
}

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Image img(c, h, w);
  RngStream rng(seed, 0, 0, StreamTag::Synthetic);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

bool in_unit_range(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

int count_zeros(const Image& img) {
  return static_cast<int>(std::count(img.pixels.begin(), img.pixels.end(), 0.0f));
}

}  // namespace

TEST_CASE("horizontal flip") {
  const Image img = hand_2x2();
  RngStream rng(1, 0, 0, StreamTag::MainAugment);
  CHECK(horizontal_flip(img, rng, 0.0) == img);
  CHECK(horizontal_flip(horizontal_flip(img, rng, 1.0), rng, 1.0) == img);
  const Image f = horizontal_flip(img, rng, 1.0);
  for (int c = 0; c < 2; ++c) {
    CHECK(f.at(c, 0, 0) == 2 / 4.0f);
    CHECK(f.at(c, 0, 1) == 1 / 4.0f);
    CHECK(f.at(c, 1, 0) == 4 / 4.0f);
    CHECK(f.at(c, 1, 1) == 3 / 4.0f);
  }
  // p = 0.5 flips about half the time.
  int flips = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream r(2, 0, i, StreamTag::MainAugment);
    flips += horizontal_flip(img, r) == f ? 1 : 0;
  }
  CHECK(flips > 900);
  CHECK(flips < 1100);
}

TEST_CASE("pad crop") {
  const Image img = random_image(3, 32, 32, 3);
  RngStream rng(1, 0, 0, StreamTag::MainAugment);
  CHECK(pad_crop(img, rng, 0) == img);
  CHECK(pad_crop_at(img, 4, 4, 4) == img);

  const Image ones(3, 32, 32, 1.0f);
  const Image shifted = pad_crop_at(ones, 4, 0, 0);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        CHECK(shifted.at(c, y, x) == (y < 4 || x < 4 ? 0.0f : 1.0f));
      }
    }
  }
  CHECK(count_zeros(shifted) == 3 * (32 * 32 - 28 * 28));

  for (std::uint64_t s = 0; s < 100; ++s) {
    RngStream r(s, 0, 0, StreamTag::MainAugment);
    const Image out = pad_crop(img, r, 4);
    CHECK(out.channels == 3);
    CHECK(out.height == 32);
    CHECK(out.width == 32);
  }
  CHECK_THROWS_AS(pad_crop(img, rng, -1), ContractViolation);
}

TEST_CASE("cutout") {
  const Image ones(3, 32, 32, 1.0f);
  RngStream rng(1, 0, 0, StreamTag::MainAugment);
  CHECK(cutout(ones, rng, 0) == ones);
  CHECK(count_zeros(cutout_at(ones, 16, 16, 16)) == 3 * 256);
  // Clipped at the corner: rows/cols 0..7 survive of the 16-wide square.
  CHECK(count_zeros(cutout_at(ones, 16, 0, 0)) == 3 * 64);
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream r(s, 0, 0, StreamTag::MainAugment);
    CHECK(count_zeros(cutout(ones, r, 64)) == 3 * 32 * 32);
  }
  // Only pixels inside the square change.
  const Image img = random_image(1, 10, 10, 4);
  const Image cut = cutout_at(img, 4, 5, 5);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      const bool inside = y >= 3 && y < 7 && x >= 3 && x < 7;
      CHECK(cut.at(0, y, x) == (inside ? 0.0f : img.at(0, y, x)));
    }
  }
  CHECK_THROWS_AS(cutout(ones, rng, -2), ContractViolation);
}

TEST_CASE("gaussian noise") {
  const Image gray(1, 100, 100, 0.5f);
  RngStream rng(9, 0, 0, StreamTag::MainAugment);
  CHECK(gaussian_noise(gray, rng, 0.0) == gray);
  const Image noisy = gaussian_noise(gray, rng, 0.2);
  CHECK(in_unit_range(noisy));
  double s = 0.0, ss = 0.0;
  for (float v : noisy.pixels) {
    s += v - 0.5;
    ss += (v - 0.5) * (v - 0.5);
  }
  const double n = static_cast<double>(noisy.pixels.size());
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  // Clamping at 2.5 sigma trims the spread only slightly.
  CHECK(std::abs(sd - 0.2) <= 0.02);
  CHECK(in_unit_range(gaussian_noise(Image(1, 8, 8, 0.99f), rng, 5.0)));
  CHECK_THROWS_AS(gaussian_noise(gray, rng, -0.1), ContractViolation);
}

TEST_CASE("geometric ops") {
  Image img(1, 2, 2);
  img.at(0, 0, 0) = 0.1f;
  img.at(0, 0, 1) = 0.2f;
  img.at(0, 1, 0) = 0.3f;
  img.at(0, 1, 1) = 0.4f;
  const Image r = rotate(img, 90.0);
  CHECK(r.at(0, 0, 0) == 0.2f);
  CHECK(r.at(0, 0, 1) == 0.4f);
  CHECK(r.at(0, 1, 0) == 0.1f);
  CHECK(r.at(0, 1, 1) == 0.3f);

  const Image big = random_image(3, 32, 32, 5);
  CHECK(rotate(big, 0.0) == big);
  CHECK(shear_x(big, 0.0) == big);
  CHECK(shear_y(big, 0.0) == big);
  CHECK(translate_x(big, 0.0) == big);
  CHECK(translate_y(big, 0.0) == big);
  CHECK(rotate(rotate(rotate(rotate(big, 90.0), 90.0), 90.0), 90.0) == big);

  const Image t = translate_x(big, 3.0);
  for (int y = 0; y < 32; ++y) {
    CHECK(t.at(0, y, 0) == 0.0f);
    CHECK(t.at(0, y, 10) == big.at(0, y, 7));
  }
}

TEST_CASE("colour ops") {
  const Image img = random_image(3, 8, 8, 6);
  CHECK(adjust_brightness(img, 1.0) == img);
  CHECK(adjust_contrast(img, 1.0) == img);
  const Image twice = invert(invert(img));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(twice.pixels[i] == doctest::Approx(img.pixels[i]));
  CHECK(invert(Image(1, 1, 1, 0.25f)).pixels[0] == 0.75f);
  CHECK(solarize(Image(1, 1, 2, 0.8f), 0.5).pixels[0] == doctest::Approx(0.2f));
  CHECK(solarize(Image(1, 1, 2, 0.3f), 0.5).pixels[0] == 0.3f);
  Image levels(1, 1, 256);
  for (int i = 0; i < 256; ++i) levels.pixels[i] = static_cast<float>(i) / 255.0f;
  CHECK(posterize(levels, 8) == levels);
  for (float v : posterize(img, 1).pixels) CHECK((v == 0.0f || v == doctest::Approx(128.0 / 255.0)));
  CHECK(in_unit_range(adjust_brightness(img, 1.9)));
  CHECK(in_unit_range(adjust_contrast(img, 1.9)));
  CHECK(in_unit_range(equalize(img)));
  // Autocontrast stretches each channel to span [0,1].
  const Image ac = autocontrast(img);
  for (int c = 0; c < 3; ++c) {
    float lo = 1.0f, hi = 0.0f;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        lo = std::min(lo, ac.at(c, y, x));
        hi = std::max(hi, ac.at(c, y, x));
      }
    }
    CHECK(lo == doctest::Approx(0.0f));
    CHECK(hi == doctest::Approx(1.0f));
  }
}

TEST_CASE("rand augment lite") {
  const Image img = random_image(3, 32, 32, 7);
  std::vector<RaOp> geometric;
  for (RaOp op : default_ra_pool()) {
    if (ra_op_is_geometric(op)) geometric.push_back(op);
  }
  CHECK(geometric.size() == 5);
  CHECK(default_ra_pool().size() == 12);
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream rng(s, 0, 0, StreamTag::AuxAugment);
    CHECK(rand_augment_lite(img, rng, 3, 0, geometric) == img);
  }
  RngStream a(42, 1, 2, StreamTag::AuxAugment), b(42, 1, 2, StreamTag::AuxAugment);
  const Image out = rand_augment_lite(img, a, 2, 9);
  CHECK(out == rand_augment_lite(img, b, 2, 9));
  CHECK(in_unit_range(out));
  for (RaOp op : default_ra_pool()) {
    CHECK(parse_ra_op(ra_op_name(op)) == op);
    RngStream r(1, 0, 0, StreamTag::AuxAugment);
    const Image o = apply_ra_op(img, op, 1.0, r);
    CHECK(in_unit_range(o));
    CHECK(o.pixels.size() == img.pixels.size());
  }
  CHECK_THROWS_AS(parse_ra_op("sharpness"), ConfigError);
  RngStream r(1, 0, 0, StreamTag::AuxAugment);
  CHECK_THROWS_AS(rand_augment_lite(img, r, 0, 9), ContractViolation);
  CHECK_THROWS_AS(rand_augment_lite(img, r, 2, 31), ContractViolation);
}

TEST_CASE("policies") {
  Tensor batch({4, 3, 32, 32});
  RngStream fill(3, 0, 0, StreamTag::Synthetic);
  for (auto& v : batch.values()) v = static_cast<float>(fill.uniform());
  std::vector<RngKey> keys;
  for (std::uint64_t i = 0; i < 4; ++i) keys.push_back({7, 1, 100 + i, StreamTag::MainAugment});

  CHECK(apply_policy(batch, AugmentPolicy::none(), keys) == batch);
  CHECK_THROWS_AS(apply_policy(batch, AugmentPolicy::flip(), std::span(keys).first(3)), ContractViolation);

  SUBCASE("cutout preset order") {
    const AugmentPolicy p = AugmentPolicy::cutout_preset();
    REQUIRE(p.steps.size() == 3);
    CHECK(p.steps[0].kind == AugmentStep::Kind::Flip);
    CHECK(p.steps[1].kind == AugmentStep::Kind::PadCrop);
    CHECK(p.steps[2].kind == AugmentStep::Kind::Cutout);
    CHECK(p.steps[2].size == 16);
  }
  SUBCASE("presets") {
    for (const auto& name : preset_policy_names()) {
      const AugmentPolicy p = preset_policy(name);
      CHECK(p.name == name);
      CHECK_NOTHROW(validate_policy(p));
    }
    CHECK(preset_policy("gaussian").steps.at(0).sigma == doctest::Approx(0.2));
    CHECK_THROWS_AS(preset_policy("mixup"), ConfigError);
    AugmentPolicy bad = AugmentPolicy::gaussian(-1.0);
    CHECK_THROWS_AS(validate_policy(bad), ConfigError);
  }
  SUBCASE("keyed by image index, not position") {
    const AugmentPolicy p = AugmentPolicy::rand_augment();
    const Tensor out = apply_policy(batch, p, keys);
    Tensor swapped(batch.shape());
    image_to_batch(image_from_batch(batch, 3), swapped, 0);
    image_to_batch(image_from_batch(batch, 1), swapped, 1);
    image_to_batch(image_from_batch(batch, 2), swapped, 2);
    image_to_batch(image_from_batch(batch, 0), swapped, 3);
    std::vector<RngKey> swapped_keys = {keys[3], keys[1], keys[2], keys[0]};
    const Tensor out2 = apply_policy(swapped, p, swapped_keys);
    CHECK(image_from_batch(out2, 0) == image_from_batch(out, 3));
    CHECK(image_from_batch(out2, 3) == image_from_batch(out, 0));
    CHECK(apply_policy(batch, p, keys) == out);
    for (float v : out.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}
