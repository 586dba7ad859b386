#include "sepbn/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sepbn/errors.hpp"

namespace sepbn {

void clamp_unit(Image& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Image flip_horizontal(Image img) {
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      float* row = &img.at(c, y, 0);
      std::reverse(row, row + img.width);
    }
  }
  return img;
}

Image horizontal_flip(Image img, RngStream& rng, double p) {
  if (rng.bernoulli(p)) return flip_horizontal(std::move(img));
  return img;
}

Image pad_crop_at(Image img, int pad, int offset_y, int offset_x) {
  if (pad < 0) throw ContractViolation("pad_crop: pad must be >= 0");
  if (pad == 0) return img;
  if (offset_y < 0 || offset_y > 2 * pad || offset_x < 0 || offset_x > 2 * pad) {
    throw ContractViolation("pad_crop: offset outside [0, 2*pad]");
  }
  Image out(img.channels, img.height, img.width, 0.0f);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      const int sy = y + offset_y - pad;
      if (sy < 0 || sy >= img.height) continue;
      for (int x = 0; x < img.width; ++x) {
        const int sx = x + offset_x - pad;
        if (sx < 0 || sx >= img.width) continue;
        out.at(c, y, x) = img.at(c, sy, sx);
      }
    }
  }
  return out;
}

Image pad_crop(Image img, RngStream& rng, int pad) {
  if (pad < 0) throw ContractViolation("pad_crop: pad must be >= 0");
  if (pad == 0) return img;
  const int oy = rng.range(0, 2 * pad);
  const int ox = rng.range(0, 2 * pad);
  return pad_crop_at(std::move(img), pad, oy, ox);
}

Image cutout_at(Image img, int size, int center_y, int center_x) {
  if (size < 0) throw ContractViolation("cutout: size must be >= 0");
  if (size == 0) return img;
  const int y0 = std::max(0, center_y - size / 2);
  const int y1 = std::min(img.height, center_y - size / 2 + size);
  const int x0 = std::max(0, center_x - size / 2);
  const int x1 = std::min(img.width, center_x - size / 2 + size);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) img.at(c, y, x) = 0.0f;
    }
  }
  return img;
}

Image cutout(Image img, RngStream& rng, int size) {
  if (size < 0) throw ContractViolation("cutout: size must be >= 0");
  if (size == 0) return img;
  const int cy = rng.range(0, img.height - 1);
  const int cx = rng.range(0, img.width - 1);
  return cutout_at(std::move(img), size, cy, cx);
}

Image gaussian_noise(Image img, RngStream& rng, double sigma) {
  if (sigma < 0.0) throw ContractViolation("gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return img;
  for (auto& v : img.pixels) v = static_cast<float>(v + sigma * rng.normal());
  clamp_unit(img);
  return img;
}

// --- geometric -----------------------------------------------------------------

namespace {

// out(c, y, x) = img(c, round(src_y), round(src_x)) or 0 outside.
template <typename Map>
Image remap(const Image& img, Map map) {
  Image out(img.channels, img.height, img.width, 0.0f);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto [fy, fx] = map(static_cast<double>(y), static_cast<double>(x));
      const int sy = static_cast<int>(std::floor(fy + 0.5));
      const int sx = static_cast<int>(std::floor(fx + 0.5));
      if (sy < 0 || sy >= img.height || sx < 0 || sx >= img.width) continue;
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, sy, sx);
    }
  }
  return out;
}

int quantize(float v) {
  return std::clamp(static_cast<int>(std::floor(v * 255.0f + 0.5f)), 0, 255);
}

}  // namespace

Image rotate(Image img, double degrees) {
  if (degrees == 0.0) return img;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  return remap(img, [&](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{cy + sn * dx + cs * dy, cx + cs * dx - sn * dy};
  });
}

Image shear_x(Image img, double factor) {
  if (factor == 0.0) return img;
  const double cy = (img.height - 1) / 2.0;
  return remap(img, [&](double y, double x) { return std::pair{y, x + factor * (y - cy)}; });
}

Image shear_y(Image img, double factor) {
  if (factor == 0.0) return img;
  const double cx = (img.width - 1) / 2.0;
  return remap(img, [&](double y, double x) { return std::pair{y + factor * (x - cx), x}; });
}

Image translate_x(Image img, double pixels) {
  if (pixels == 0.0) return img;
  return remap(img, [&](double y, double x) { return std::pair{y, x - pixels}; });
}

Image translate_y(Image img, double pixels) {
  if (pixels == 0.0) return img;
  return remap(img, [&](double y, double x) { return std::pair{y - pixels, x}; });
}

Image adjust_brightness(Image img, double factor) {
  for (auto& v : img.pixels) v = static_cast<float>(v * factor);
  clamp_unit(img);
  return img;
}

Image adjust_contrast(Image img, double factor) {
  double mean = 0.0;
  for (float v : img.pixels) mean += v;
  if (!img.pixels.empty()) mean /= static_cast<double>(img.pixels.size());
  for (auto& v : img.pixels) v = static_cast<float>(mean + factor * (v - mean));
  clamp_unit(img);
  return img;
}

Image solarize(Image img, double threshold) {
  for (auto& v : img.pixels) {
    if (v > threshold) v = 1.0f - v;
  }
  return img;
}

Image posterize(Image img, int bits) {
  bits = std::clamp(bits, 1, 8);
  const int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
  for (auto& v : img.pixels) v = static_cast<float>(quantize(v) & mask) / 255.0f;
  return img;
}

Image invert(Image img) {
  for (auto& v : img.pixels) v = 1.0f - v;
  return img;
}

Image equalize(Image img) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    float* px = img.pixels.data() + c * plane;
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < plane; ++i) ++hist[quantize(px[i])];
    std::array<std::size_t, 256> cdf{};
    std::size_t run = 0, cdf_min = 0;
    for (int b = 0; b < 256; ++b) {
      run += hist[b];
      cdf[b] = run;
      if (cdf_min == 0 && run > 0) cdf_min = run;
    }
    if (plane == cdf_min) continue;  // single intensity level
    const double denom = static_cast<double>(plane - cdf_min);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t cnt = cdf[quantize(px[i])];
      px[i] = static_cast<float>(static_cast<double>(cnt - cdf_min) / denom);
    }
  }
  return img;
}

Image autocontrast(Image img) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    float* px = img.pixels.data() + c * plane;
    const auto [lo, hi] = std::minmax_element(px, px + plane);
    const float l = *lo, h = *hi;
    if (h <= l) continue;
    for (std::size_t i = 0; i < plane; ++i) px[i] = (px[i] - l) / (h - l);
  }
  clamp_unit(img);
  return img;
}

// --- RandAugment pool ------------------------------------------------------------

const std::vector<RaOp>& default_ra_pool() {
  static const std::vector<RaOp> pool{
      RaOp::Rotate,     RaOp::ShearX,   RaOp::ShearY,    RaOp::TranslateX,
      RaOp::TranslateY, RaOp::Brightness, RaOp::Contrast, RaOp::Solarize,
      RaOp::Posterize,  RaOp::Invert,   RaOp::Equalize,  RaOp::AutoContrast};
  return pool;
}

std::string ra_op_name(RaOp op) {
  switch (op) {
    case RaOp::Rotate: return "rotate";
    case RaOp::ShearX: return "shear-x";
    case RaOp::ShearY: return "shear-y";
    case RaOp::TranslateX: return "translate-x";
    case RaOp::TranslateY: return "translate-y";
    case RaOp::Brightness: return "brightness";
    case RaOp::Contrast: return "contrast";
    case RaOp::Solarize: return "solarize";
    case RaOp::Posterize: return "posterize";
    case RaOp::Invert: return "invert";
    case RaOp::Equalize: return "equalize";
    case RaOp::AutoContrast: return "autocontrast";
  }
  return "?";
}

RaOp parse_ra_op(const std::string& name) {
  for (RaOp op : default_ra_pool()) {
    if (ra_op_name(op) == name) return op;
  }
  throw ConfigError("unknown RandAugment op '" + name + "'");
}

bool ra_op_is_geometric(RaOp op) {
  switch (op) {
    case RaOp::Rotate:
    case RaOp::ShearX:
    case RaOp::ShearY:
    case RaOp::TranslateX:
    case RaOp::TranslateY: return true;
    default: return false;
  }
}

namespace {

constexpr double kMaxRotateDegrees = 30.0;
constexpr double kMaxShear = 0.3;
constexpr double kMaxTranslateFraction = 0.3;
constexpr double kMaxEnhance = 0.9;

}  // namespace

Image apply_ra_op(Image img, RaOp op, double strength, RngStream& rng) {
  strength = std::clamp(strength, 0.0, 1.0);
  // Every op consumes exactly one sign draw so streams stay aligned.
  const double sign = rng.bernoulli(0.5) ? -1.0 : 1.0;
  switch (op) {
    case RaOp::Rotate: return rotate(std::move(img), sign * strength * kMaxRotateDegrees);
    case RaOp::ShearX: return shear_x(std::move(img), sign * strength * kMaxShear);
    case RaOp::ShearY: return shear_y(std::move(img), sign * strength * kMaxShear);
    case RaOp::TranslateX:
      return translate_x(std::move(img), sign * strength * kMaxTranslateFraction * img.width);
    case RaOp::TranslateY:
      return translate_y(std::move(img), sign * strength * kMaxTranslateFraction * img.height);
    case RaOp::Brightness:
      return adjust_brightness(std::move(img), 1.0 + sign * strength * kMaxEnhance);
    case RaOp::Contrast:
      return adjust_contrast(std::move(img), 1.0 + sign * strength * kMaxEnhance);
    case RaOp::Solarize: return solarize(std::move(img), 1.0 - strength);
    case RaOp::Posterize:
      return posterize(std::move(img), 8 - static_cast<int>(std::lround(4.0 * strength)));
    case RaOp::Invert: return invert(std::move(img));
    case RaOp::Equalize: return equalize(std::move(img));
    case RaOp::AutoContrast: return autocontrast(std::move(img));
  }
  return img;
}

Image rand_augment_lite(Image img, RngStream& rng, int num_ops, int magnitude,
                        std::span<const RaOp> pool) {
  if (num_ops < 1) throw ContractViolation("rand_augment_lite: num_ops must be >= 1");
  if (magnitude < 0 || magnitude > 30) {
    throw ContractViolation("rand_augment_lite: magnitude must lie in [0, 30]");
  }
  if (pool.empty()) throw ConfigError("rand_augment_lite: empty op pool");
  const double strength = magnitude / 30.0;
  for (int i = 0; i < num_ops; ++i) {
    const RaOp op = pool[rng.below(pool.size())];
    img = apply_ra_op(std::move(img), op, strength, rng);
  }
  return img;
}

// --- policies --------------------------------------------------------------------

std::string step_kind_name(AugmentStep::Kind kind) {
  switch (kind) {
    case AugmentStep::Kind::Flip: return "flip";
    case AugmentStep::Kind::PadCrop: return "pad-crop";
    case AugmentStep::Kind::Cutout: return "cutout";
    case AugmentStep::Kind::Gaussian: return "gaussian";
    case AugmentStep::Kind::RandAugment: return "randaugment";
  }
  return "?";
}

Image AugmentPolicy::apply(Image img, RngStream& rng) const {
  for (const auto& s : steps) {
    switch (s.kind) {
      case AugmentStep::Kind::Flip: img = horizontal_flip(std::move(img), rng, s.probability); break;
      case AugmentStep::Kind::PadCrop: img = pad_crop(std::move(img), rng, s.pad); break;
      case AugmentStep::Kind::Cutout: img = cutout(std::move(img), rng, s.size); break;
      case AugmentStep::Kind::Gaussian: img = gaussian_noise(std::move(img), rng, s.sigma); break;
      case AugmentStep::Kind::RandAugment:
        if (s.pool.empty()) {
          img = rand_augment_lite(std::move(img), rng, s.num_ops, s.magnitude);
        } else {
          img = rand_augment_lite(std::move(img), rng, s.num_ops, s.magnitude, s.pool);
        }
        break;
    }
  }
  return img;
}

namespace {

AugmentStep make_step(AugmentStep::Kind kind) {
  AugmentStep s;
  s.kind = kind;
  return s;
}
AugmentStep flip_step() { return make_step(AugmentStep::Kind::Flip); }
AugmentStep crop_step() { return make_step(AugmentStep::Kind::PadCrop); }
AugmentStep cutout_step(int size) {
  auto s = make_step(AugmentStep::Kind::Cutout);
  s.size = size;
  return s;
}

}  // namespace

AugmentPolicy AugmentPolicy::none() { return {"none", {}}; }
AugmentPolicy AugmentPolicy::flip() { return {"flip", {flip_step()}}; }
AugmentPolicy AugmentPolicy::flip_crop() { return {"flip-crop", {flip_step(), crop_step()}}; }
AugmentPolicy AugmentPolicy::cutout_preset(int size) {
  return {"cutout", {flip_step(), crop_step(), cutout_step(size)}};
}
AugmentPolicy AugmentPolicy::gaussian(double sigma) {
  auto s = make_step(AugmentStep::Kind::Gaussian);
  s.sigma = sigma;
  return {"gaussian", {s}};
}
AugmentPolicy AugmentPolicy::rand_augment(int num_ops, int magnitude) {
  auto ra = make_step(AugmentStep::Kind::RandAugment);
  ra.num_ops = num_ops;
  ra.magnitude = magnitude;
  return {"randaugment", {ra, flip_step(), crop_step(), cutout_step(16)}};
}

AugmentPolicy preset_policy(const std::string& name) {
  if (name == "none") return AugmentPolicy::none();
  if (name == "flip") return AugmentPolicy::flip();
  if (name == "flip-crop") return AugmentPolicy::flip_crop();
  if (name == "cutout") return AugmentPolicy::cutout_preset();
  if (name == "gaussian") return AugmentPolicy::gaussian();
  if (name == "randaugment") return AugmentPolicy::rand_augment();
  throw ConfigError("unknown augment policy '" + name + "'");
}

std::vector<std::string> preset_policy_names() {
  return {"none", "flip", "flip-crop", "cutout", "gaussian", "randaugment"};
}

void validate_policy(const AugmentPolicy& policy) {
  for (const auto& s : policy.steps) {
    const std::string where = "policy '" + policy.name + "' step " + step_kind_name(s.kind);
    switch (s.kind) {
      case AugmentStep::Kind::Flip:
        if (!(s.probability >= 0.0 && s.probability <= 1.0)) {
          throw ConfigError(where + ": probability must lie in [0, 1]");
        }
        break;
      case AugmentStep::Kind::PadCrop:
        if (s.pad < 0) throw ConfigError(where + ": pad must be >= 0");
        break;
      case AugmentStep::Kind::Cutout:
        if (s.size < 0) throw ConfigError(where + ": size must be >= 0");
        break;
      case AugmentStep::Kind::Gaussian:
        if (!(s.sigma >= 0.0)) throw ConfigError(where + ": sigma must be >= 0");
        break;
      case AugmentStep::Kind::RandAugment:
        if (s.num_ops < 1) throw ConfigError(where + ": num_ops must be >= 1");
        if (s.magnitude < 0 || s.magnitude > 30) {
          throw ConfigError(where + ": magnitude must lie in [0, 30]");
        }
        break;
    }
  }
}

Image image_from_batch(const Tensor& batch, int n) {
  Image img(batch.dim(1), batch.dim(2), batch.dim(3));
  const std::size_t sz = img.pixels.size();
  std::copy_n(batch.data() + static_cast<std::size_t>(n) * sz, sz, img.pixels.data());
  return img;
}

void image_to_batch(const Image& img, Tensor& batch, int n) {
  const std::size_t sz = img.pixels.size();
  std::copy_n(img.pixels.data(), sz, batch.data() + static_cast<std::size_t>(n) * sz);
}

Tensor apply_policy(const Tensor& batch, const AugmentPolicy& policy,
                    std::span<const RngKey> keys) {
  if (batch.rank() != 4) {
    throw ContractViolation("apply_policy expects an NCHW batch, got " +
                            shape_string(batch.shape()));
  }
  if (static_cast<int>(keys.size()) != batch.dim(0)) {
    throw ContractViolation("apply_policy: " + std::to_string(keys.size()) + " rng keys for " +
                            std::to_string(batch.dim(0)) + " images");
  }
  if (policy.is_identity()) return batch;
  validate_policy(policy);
  Tensor out(batch.shape());
  const int n = batch.dim(0);
#pragma omp parallel for schedule(dynamic, 8) if (n > 1)
  for (int i = 0; i < n; ++i) {
    const RngKey& k = keys[i];
    RngStream rng(k.seed, k.epoch, k.index, k.tag);
    image_to_batch(policy.apply(image_from_batch(batch, i), rng), out, i);
  }
  return out;
}

}  // namespace sepbn
