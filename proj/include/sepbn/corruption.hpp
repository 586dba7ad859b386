#pragma once

#include <array>
#include <string>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/rng.hpp"

namespace sepbn {

// Procedural subset of the common-corruption families, five severities each.
enum class Corruption {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  GaussianBlur,
  Brightness,
  Contrast,
  Pixelate,
};

constexpr int kSeverities = 5;

const std::vector<Corruption>& all_corruptions();
std::string corruption_name(Corruption c);
Corruption parse_corruption(const std::string& name);

// Per-severity parameter (severity in 1..5). Strictly monotone in severity:
// increasing for gaussian_noise (sigma), impulse_noise (amount),
// gaussian_blur (sigma) and brightness (shift); decreasing for shot_noise
// (photon count), contrast (factor) and pixelate (scale).
double corruption_parameter(Corruption c, int severity);

// Applies the corruption in [0,1] pixel space; output is clamped to [0,1].
Image corrupt(Image img, Corruption c, int severity, RngStream& rng);

// Stream used for image `index` under (corruption, severity).
RngStream corruption_stream(std::uint64_t seed, Corruption c, int severity, std::uint64_t index);

}  // namespace sepbn
