#include "sepbn/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "sepbn/errors.hpp"

namespace sepbn {

namespace {

struct Table {
  Corruption kind;
  const char* name;
  std::array<double, kSeverities> params;
};

const std::array<Table, 7> kTables{{
    {Corruption::GaussianNoise, "gaussian_noise", {0.04, 0.06, 0.08, 0.09, 0.10}},
    {Corruption::ShotNoise, "shot_noise", {500.0, 250.0, 100.0, 75.0, 50.0}},
    {Corruption::ImpulseNoise, "impulse_noise", {0.01, 0.02, 0.03, 0.05, 0.07}},
    {Corruption::GaussianBlur, "gaussian_blur", {0.4, 0.6, 0.7, 0.8, 1.0}},
    {Corruption::Brightness, "brightness", {0.1, 0.2, 0.3, 0.4, 0.5}},
    {Corruption::Contrast, "contrast", {0.75, 0.5, 0.4, 0.3, 0.15}},
    {Corruption::Pixelate, "pixelate", {0.95, 0.9, 0.85, 0.75, 0.65}},
}};

const Table& table(Corruption c) {
  for (const auto& t : kTables) {
    if (t.kind == c) return t;
  }
  throw ContractViolation("unknown corruption");
}

Image blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  // Reflect padding (edge pixel not repeated).
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image tmp(img.channels, img.height, img.width);
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * img.at(c, y, reflect(x + i, img.width));
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(c, reflect(y + i, img.height), x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image pixelate(const Image& img, double scale) {
  const int sh = std::max(1, static_cast<int>(img.height * scale));
  const int sw = std::max(1, static_cast<int>(img.width * scale));
  // Box-average down to sh x sw, then nearest upsample.
  Image small(img.channels, sh, sw);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < sh; ++y) {
      const int y0 = y * img.height / sh, y1 = std::max(y0 + 1, (y + 1) * img.height / sh);
      for (int x = 0; x < sw; ++x) {
        const int x0 = x * img.width / sw, x1 = std::max(x0 + 1, (x + 1) * img.width / sw);
        double acc = 0.0;
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) acc += img.at(c, yy, xx);
        }
        small.at(c, y, x) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
      }
    }
  }
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        out.at(c, y, x) = small.at(c, y * sh / img.height, x * sw / img.width);
      }
    }
  }
  return out;
}

}  // namespace

const std::vector<Corruption>& all_corruptions() {
  static const std::vector<Corruption> all{
      Corruption::GaussianNoise, Corruption::ShotNoise, Corruption::ImpulseNoise,
      Corruption::GaussianBlur,  Corruption::Brightness, Corruption::Contrast,
      Corruption::Pixelate};
  return all;
}

std::string corruption_name(Corruption c) { return table(c).name; }

Corruption parse_corruption(const std::string& name) {
  for (const auto& t : kTables) {
    if (name == t.name) return t.kind;
  }
  throw ConfigError("unknown corruption '" + name + "'");
}

double corruption_parameter(Corruption c, int severity) {
  if (severity < 1 || severity > kSeverities) {
    throw ContractViolation("corruption severity must lie in 1..5, got " + std::to_string(severity));
  }
  return table(c).params[severity - 1];
}

RngStream corruption_stream(std::uint64_t seed, Corruption c, int severity, std::uint64_t index) {
  const std::uint64_t lane = static_cast<std::uint64_t>(c) * 16 + static_cast<std::uint64_t>(severity);
  return RngStream(seed, lane, index, StreamTag::Corruption);
}

Image corrupt(Image img, Corruption c, int severity, RngStream& rng) {
  const double p = corruption_parameter(c, severity);
  switch (c) {
    case Corruption::GaussianNoise:
      for (auto& v : img.pixels) v = static_cast<float>(v + p * rng.normal());
      break;
    case Corruption::ShotNoise:
      for (auto& v : img.pixels) {
        v = static_cast<float>(static_cast<double>(rng.poisson(std::max(0.0f, v) * p)) / p);
      }
      break;
    case Corruption::ImpulseNoise:
      for (auto& v : img.pixels) {
        if (rng.uniform() < p) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
      }
      break;
    case Corruption::GaussianBlur: img = blur(img, p); break;
    case Corruption::Brightness:
      for (auto& v : img.pixels) v = static_cast<float>(v + p);
      break;
    case Corruption::Contrast: {
      double mean = 0.0;
      for (float v : img.pixels) mean += v;
      mean /= static_cast<double>(img.pixels.size());
      for (auto& v : img.pixels) v = static_cast<float>(mean + p * (v - mean));
      break;
    }
    case Corruption::Pixelate: img = pixelate(img, p); break;
  }
  clamp_unit(img);
  return img;
}

}  // namespace sepbn
