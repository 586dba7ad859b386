#include "sepbn/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sepbn/errors.hpp"

namespace sepbn {

namespace {

using cd = std::complex<double>;

std::vector<cd> twiddles(int n, double sign) {
  std::vector<cd> t(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      // (k*j) mod n keeps the angle small and exact.
      const double angle = sign * 2.0 * std::numbers::pi * ((k * j) % n) / n;
      t[static_cast<std::size_t>(k) * n + j] = cd(std::cos(angle), std::sin(angle));
    }
  }
  return t;
}

// Transform rows then columns with the given sign (-1 forward, +1 inverse).
std::vector<cd> transform(std::vector<cd> data, int h, int w, double sign) {
  const auto tw = twiddles(w, sign);
  const auto th = twiddles(h, sign);
  std::vector<cd> tmp(data.size());
  for (int y = 0; y < h; ++y) {
    for (int k = 0; k < w; ++k) {
      cd acc = 0.0;
      for (int x = 0; x < w; ++x) {
        acc += data[static_cast<std::size_t>(y) * w + x] * tw[static_cast<std::size_t>(k) * w + x];
      }
      tmp[static_cast<std::size_t>(y) * w + k] = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int k = 0; k < h; ++k) {
      cd acc = 0.0;
      for (int y = 0; y < h; ++y) {
        acc += tmp[static_cast<std::size_t>(y) * w + x] * th[static_cast<std::size_t>(k) * h + y];
      }
      data[static_cast<std::size_t>(k) * w + x] = acc;
    }
  }
  return data;
}

void check_bandwidth(const Image& img, int bandwidth) {
  const int limit = std::max(img.height, img.width);
  if (bandwidth < 1 || bandwidth > limit) {
    throw ContractViolation("low pass bandwidth " + std::to_string(bandwidth) +
                            " outside [1, " + std::to_string(limit) + "]");
  }
}

std::vector<cd> channel_spectrum(const Image& img, int c) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<double> px(plane);
  for (std::size_t i = 0; i < plane; ++i) px[i] = img.pixels[c * plane + i];
  return dft2(px, img.height, img.width);
}

}  // namespace

std::vector<cd> dft2(std::span<const double> plane, int height, int width) {
  if (plane.size() != static_cast<std::size_t>(height) * width) {
    throw ContractViolation("dft2: plane size does not match H x W");
  }
  std::vector<cd> data(plane.begin(), plane.end());
  return transform(std::move(data), height, width, -1.0);
}

std::vector<cd> idft2(std::span<const cd> spectrum, int height, int width) {
  if (spectrum.size() != static_cast<std::size_t>(height) * width) {
    throw ContractViolation("idft2: spectrum size does not match H x W");
  }
  auto out = transform(std::vector<cd>(spectrum.begin(), spectrum.end()), height, width, 1.0);
  const double scale = 1.0 / (static_cast<double>(height) * width);
  for (auto& v : out) v *= scale;
  return out;
}

int signed_frequency(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

int centered_index(int f, int n) { return f + n / 2; }

int mirror_frequency(int f, int n) {
  int m = -f;
  const int lo = -(n / 2);
  const int hi = lo + n - 1;
  if (m < lo) m += n;
  if (m > hi) m -= n;
  return m;
}

bool in_band(int f, int bandwidth) {
  if (bandwidth % 2 == 0) return f >= -bandwidth / 2 && f <= bandwidth / 2 - 1;
  return f >= -(bandwidth - 1) / 2 && f <= (bandwidth - 1) / 2;
}

Image low_pass(const Image& img, int bandwidth) {
  check_bandwidth(img, bandwidth);
  Image out(img.channels, img.height, img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    auto spec = channel_spectrum(img, c);
    for (int ky = 0; ky < img.height; ++ky) {
      const bool row_in = in_band(signed_frequency(ky, img.height), bandwidth);
      for (int kx = 0; kx < img.width; ++kx) {
        if (!row_in || !in_band(signed_frequency(kx, img.width), bandwidth)) {
          spec[static_cast<std::size_t>(ky) * img.width + kx] = 0.0;
        }
      }
    }
    const auto back = idft2(spec, img.height, img.width);
    for (std::size_t i = 0; i < plane; ++i) out.pixels[c * plane + i] = static_cast<float>(back[i].real());
  }
  return out;
}

double retained_energy(const Image& img, int bandwidth) {
  check_bandwidth(img, bandwidth);
  double energy = 0.0;
  for (int c = 0; c < img.channels; ++c) {
    const auto spec = channel_spectrum(img, c);
    for (int ky = 0; ky < img.height; ++ky) {
      if (!in_band(signed_frequency(ky, img.height), bandwidth)) continue;
      for (int kx = 0; kx < img.width; ++kx) {
        if (!in_band(signed_frequency(kx, img.width), bandwidth)) continue;
        energy += std::norm(spec[static_cast<std::size_t>(ky) * img.width + kx]);
      }
    }
  }
  return energy;
}

std::vector<double> fourier_grating(int height, int width, int fy, int fx, double norm) {
  if (!(norm > 0.0)) throw ContractViolation("fourier grating norm must be > 0");
  std::vector<double> g(static_cast<std::size_t>(height) * width);
  double sq = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Reduce the phase modulo 1 before scaling to keep it exact for large indices.
      const long num = static_cast<long>(fy) * y * width + static_cast<long>(fx) * x * height;
      const long den = static_cast<long>(height) * width;
      const long r = ((num % den) + den) % den;
      const double v = std::cos(2.0 * std::numbers::pi * static_cast<double>(r) / den);
      g[static_cast<std::size_t>(y) * width + x] = v;
      sq += v * v;
    }
  }
  const double scale = norm / std::sqrt(sq);
  for (auto& v : g) v *= scale;
  return g;
}

}  // namespace sepbn
