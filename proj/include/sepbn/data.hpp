#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sepbn/augment.hpp"
#include "sepbn/tensor.hpp"

namespace sepbn {

// Per-channel (x - mean) / std applied right before the network.
struct Standardization {
  std::vector<float> mean;
  std::vector<float> std;

  static Standardization identity(int channels);
  // Computed over every pixel of the given images (64-bit accumulation).
  static Standardization from_images(std::span<const float> images, int channels, int plane);
  void apply(Tensor& nchw) const;
  bool operator==(const Standardization&) const = default;
};

/// Images in [0,1], N x C x H x W, with labels in [0, classes).
struct Dataset {
  int channels = 3;
  int height = 32;
  int width = 32;
  int classes = 10;
  std::string split;
  std::vector<float> images;
  std::vector<int> labels;
  std::vector<int> coarse_labels;  // CIFAR-100 only; empty otherwise
  Standardization norm;  // always from the training split

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<const float> image(std::size_t i) const {
    return {images.data() + i * image_size(), image_size()};
  }
  Image image_copy(std::size_t i) const;
  // First min(n, size()) items; n == 0 keeps everything.
  Dataset head(std::size_t n) const;
  // Items at the given indices, in order.
  Dataset select(std::span<const std::size_t> indices) const;
};

// Raw (unstandardized) NCHW tensor for the given items, plus their labels.
Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);

// --- CIFAR binary format --------------------------------------------------------

// CIFAR-10 records are 1 label byte + 3072 pixel bytes; CIFAR-100 records
// carry a coarse and a fine label byte first (the fine label is used).
enum class CifarLayout { Cifar10, Cifar100 };

std::size_t cifar_record_size(CifarLayout layout);

// Parses one batch file's bytes. `name` is used in error messages.
Dataset parse_cifar_batch(std::span<const std::uint8_t> bytes, CifarLayout layout,
                          const std::string& name, std::size_t expected_records = 0);
// Inverse of parse_cifar_batch (pixels rounded back to u8).
std::vector<std::uint8_t> encode_cifar_batch(const Dataset& ds, CifarLayout layout);

// data_batch_1..5.bin and test_batch.bin; standardization from the train split.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& directory);
// train.bin and test.bin.
std::pair<Dataset, Dataset> load_cifar100(const std::filesystem::path& directory);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// --- synthetic -------------------------------------------------------------------

struct SyntheticSpec {
  int classes = 4;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  int size = 32;
  std::uint64_t seed = 0;
  double noise = 0.08;
  bool operator==(const SyntheticSpec&) const = default;
};

// Class k is a fixed pattern (oriented bars at a class-specific frequency and
// a disk at a class-specific position and tint), jittered by a small random
// shift and gain plus Gaussian pixel noise. Labels are balanced.
std::pair<Dataset, Dataset> synth_dataset(const SyntheticSpec& spec);
// Noise-free pattern for class k, used by tests.
Image synthetic_pattern(int k, int classes, int size);

// --- batching ---------------------------------------------------------------------

// Permutation of [0, n) for (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);
// Consecutive slices of the epoch permutation; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch, std::uint64_t seed);

}  // namespace sepbn
