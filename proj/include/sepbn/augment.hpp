#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepbn/rng.hpp"
#include "sepbn/tensor.hpp"

namespace sepbn {

/// One CHW image in [0,1] pixel space.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

void clamp_unit(Image& img);

// --- basic ops ---------------------------------------------------------------

Image flip_horizontal(Image img);
// Mirrors with probability p.
Image horizontal_flip(Image img, RngStream& rng, double p = 0.5);

// Zero-pad by `pad` then take the H x W window whose top-left corner sits at
// (offset_y, offset_x) in padded coordinates, offsets in [0, 2*pad].
Image pad_crop_at(Image img, int pad, int offset_y, int offset_x);
Image pad_crop(Image img, RngStream& rng, int pad = 4);

// Zero a size x size square centered at (center_y, center_x), clipped.
Image cutout_at(Image img, int size, int center_y, int center_x);
Image cutout(Image img, RngStream& rng, int size = 16);

Image gaussian_noise(Image img, RngStream& rng, double sigma);

// --- RandAugment-style pool ----------------------------------------------------

enum class RaOp {
  Rotate,
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  Brightness,
  Contrast,
  Solarize,
  Posterize,
  Invert,
  Equalize,
  AutoContrast,
};

const std::vector<RaOp>& default_ra_pool();
std::string ra_op_name(RaOp op);
// Throws ConfigError for names outside the pool.
RaOp parse_ra_op(const std::string& name);
bool ra_op_is_geometric(RaOp op);

// Nearest-neighbour geometric transforms with zero fill. Positive angles rotate
// counterclockwise.
Image rotate(Image img, double degrees);
Image shear_x(Image img, double factor);
Image shear_y(Image img, double factor);
Image translate_x(Image img, double pixels);
Image translate_y(Image img, double pixels);
Image adjust_brightness(Image img, double factor);
Image adjust_contrast(Image img, double factor);
Image solarize(Image img, double threshold);
Image posterize(Image img, int bits);
Image invert(Image img);
Image equalize(Image img);
Image autocontrast(Image img);

// Applies `op` at `strength` in [0,1] of its maximum range; signed ops draw
// their direction from rng.
Image apply_ra_op(Image img, RaOp op, double strength, RngStream& rng);

// num_ops draws with replacement from pool, applied in draw order at
// magnitude/30 strength.
Image rand_augment_lite(Image img, RngStream& rng, int num_ops, int magnitude,
                        std::span<const RaOp> pool = default_ra_pool());

// --- policies ------------------------------------------------------------------

struct AugmentStep {
  enum class Kind { Flip, PadCrop, Cutout, Gaussian, RandAugment };
  Kind kind = Kind::Flip;
  double probability = 0.5;  // Flip
  int pad = 4;               // PadCrop
  int size = 16;             // Cutout
  double sigma = 0.2;        // Gaussian
  int num_ops = 2;           // RandAugment
  int magnitude = 9;         // RandAugment
  std::vector<RaOp> pool;    // RandAugment; empty = default pool

  bool operator==(const AugmentStep&) const = default;
};

std::string step_kind_name(AugmentStep::Kind kind);

/// Named, ordered chain of augment steps.
struct AugmentPolicy {
  std::string name = "none";
  std::vector<AugmentStep> steps;

  bool is_identity() const { return steps.empty(); }
  Image apply(Image img, RngStream& rng) const;
  bool operator==(const AugmentPolicy&) const = default;

  static AugmentPolicy none();
  static AugmentPolicy flip();
  static AugmentPolicy flip_crop();
  // Flip, then pad-crop, then cutout.
  static AugmentPolicy cutout_preset(int size = 16);
  static AugmentPolicy gaussian(double sigma = 0.2);
  // RandAugment ops followed by the default flip, crop and cutout.
  static AugmentPolicy rand_augment(int num_ops = 2, int magnitude = 9);
};

// Throws ConfigError for out-of-range step parameters.
void validate_policy(const AugmentPolicy& policy);

// Preset names: none, flip, flip-crop, cutout, gaussian, randaugment.
AugmentPolicy preset_policy(const std::string& name);
std::vector<std::string> preset_policy_names();

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t index = 0;
  StreamTag tag = StreamTag::MainAugment;
};

// Augments every image of an NCHW batch independently; image i draws from
// RngStream(keys[i]). The None policy returns the batch unchanged.
Tensor apply_policy(const Tensor& batch, const AugmentPolicy& policy, std::span<const RngKey> keys);

Image image_from_batch(const Tensor& batch, int n);
void image_to_batch(const Image& img, Tensor& batch, int n);

}  // namespace sepbn
