#include "sepbn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "sepbn/errors.hpp"
#include "sepbn/rng.hpp"

namespace sepbn {

Standardization Standardization::identity(int channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

Standardization Standardization::from_images(std::span<const float> images, int channels,
                                             int plane) {
  const std::size_t per_image = static_cast<std::size_t>(channels) * plane;
  if (per_image == 0 || images.size() % per_image != 0) {
    throw ContractViolation("standardization: image buffer size is not a multiple of C*H*W");
  }
  const std::size_t n = images.size() / per_image;
  if (n == 0) return identity(channels);
  Standardization s{std::vector<float>(channels), std::vector<float>(channels)};
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* px = images.data() + i * per_image + static_cast<std::size_t>(c) * plane;
      for (int p = 0; p < plane; ++p) sum += px[p];
    }
    const double count = static_cast<double>(n) * plane;
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* px = images.data() + i * per_image + static_cast<std::size_t>(c) * plane;
      for (int p = 0; p < plane; ++p) {
        const double d = px[p] - mean;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / count);
    s.mean[c] = static_cast<float>(mean);
    s.std[c] = static_cast<float>(sd > 1e-12 ? sd : 1.0);
  }
  return s;
}

void Standardization::apply(Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != static_cast<int>(mean.size())) {
    throw ContractViolation("standardization for " + std::to_string(mean.size()) +
                            " channels applied to batch " + shape_string(batch.shape()));
  }
  const int n = batch.dim(0), c = batch.dim(1);
  const std::size_t plane = static_cast<std::size_t>(batch.dim(2)) * batch.dim(3);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      float* px = batch.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      const float m = mean[ch];
      const float inv = 1.0f / std[ch];
      for (std::size_t p = 0; p < plane; ++p) px[p] = (px[p] - m) * inv;
    }
  }
}

Image Dataset::image_copy(std::size_t i) const {
  Image img(channels, height, width);
  const auto src = image(i);
  std::copy(src.begin(), src.end(), img.pixels.begin());
  return img;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  Dataset out = *this;
  out.labels.resize(n);
  if (!out.coarse_labels.empty()) out.coarse_labels.resize(n);
  out.images.resize(n * image_size());
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset out = *this;
  out.labels.clear();
  out.coarse_labels.clear();
  out.images.clear();
  out.labels.reserve(indices.size());
  out.images.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractViolation("dataset index out of range");
    out.labels.push_back(labels[i]);
    if (!coarse_labels.empty()) out.coarse_labels.push_back(coarse_labels[i]);
    const auto src = image(i);
    out.images.insert(out.images.end(), src.begin(), src.end());
  }
  return out;
}

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractViolation("gather_images: empty index list");
  Tensor t({static_cast<int>(indices.size()), ds.channels, ds.height, ds.width});
  const std::size_t sz = ds.image_size();
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= ds.size()) throw ContractViolation("gather_images: index out of range");
    const auto src = ds.image(indices[j]);
    std::copy(src.begin(), src.end(), t.data() + j * sz);
  }
  return t;
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(ds.labels.at(i));
  return out;
}

// --- CIFAR --------------------------------------------------------------------------

namespace {

constexpr int kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarBatchRecords = 10000;

}  // namespace

std::size_t cifar_record_size(CifarLayout layout) {
  return (layout == CifarLayout::Cifar10 ? 1 : 2) + kCifarPixels;
}

Dataset parse_cifar_batch(std::span<const std::uint8_t> bytes, CifarLayout layout,
                          const std::string& name, std::size_t expected_records) {
  const std::size_t rec = cifar_record_size(layout);
  const int classes = layout == CifarLayout::Cifar10 ? 10 : 100;
  if (expected_records != 0 && bytes.size() != expected_records * rec) {
    throw DataError(name + ": expected " + std::to_string(expected_records * rec) +
                    " bytes (" + std::to_string(expected_records) + " records of " +
                    std::to_string(rec) + "), found " + std::to_string(bytes.size()) +
                    "; data ends at byte offset " + std::to_string(bytes.size()));
  }
  if (bytes.size() % rec != 0) {
    throw DataError(name + ": size " + std::to_string(bytes.size()) +
                    " is not a multiple of the record size " + std::to_string(rec) +
                    "; truncated record starts at byte offset " +
                    std::to_string(bytes.size() / rec * rec));
  }
  const std::size_t n = bytes.size() / rec;
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = kCifarSide;
  ds.classes = classes;
  ds.labels.resize(n);
  ds.images.resize(n * kCifarPixels);
  const std::size_t label_offset = layout == CifarLayout::Cifar10 ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* r = bytes.data() + i * rec;
    const int label = r[label_offset];
    if (label >= classes) {
      throw DataError(name + ": label " + std::to_string(label) + " > " +
                      std::to_string(classes - 1) + " in record " + std::to_string(i) +
                      " at byte offset " + std::to_string(i * rec + label_offset));
    }
    ds.labels[i] = label;
    if (layout == CifarLayout::Cifar100) ds.coarse_labels.push_back(r[0]);
    const std::uint8_t* px = r + rec - kCifarPixels;
    float* dst = ds.images.data() + i * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) dst[p] = static_cast<float>(px[p]) / 255.0f;
  }
  ds.norm = Standardization::identity(3);
  return ds;
}

std::vector<std::uint8_t> encode_cifar_batch(const Dataset& ds, CifarLayout layout) {
  if (ds.channels != 3 || ds.height != kCifarSide || ds.width != kCifarSide) {
    throw ContractViolation("encode_cifar_batch needs 3x32x32 images");
  }
  const std::size_t rec = cifar_record_size(layout);
  std::vector<std::uint8_t> out(ds.size() * rec, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::uint8_t* r = out.data() + i * rec;
    if (layout == CifarLayout::Cifar10) {
      r[0] = static_cast<std::uint8_t>(ds.labels[i]);
    } else {
      r[0] = ds.coarse_labels.empty() ? 0 : static_cast<std::uint8_t>(ds.coarse_labels[i]);
      r[1] = static_cast<std::uint8_t>(ds.labels[i]);
    }
    const auto src = ds.image(i);
    std::uint8_t* px = r + rec - kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      px[p] = static_cast<std::uint8_t>(
          std::clamp(std::lround(static_cast<double>(src[p]) * 255.0), 0L, 255L));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw DataError("failed reading " + path.string());
  }
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

namespace {

void append(Dataset& dst, const Dataset& src) {
  dst.images.insert(dst.images.end(), src.images.begin(), src.images.end());
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
  dst.coarse_labels.insert(dst.coarse_labels.end(), src.coarse_labels.begin(), src.coarse_labels.end());
}

std::pair<Dataset, Dataset> load_cifar(const std::filesystem::path& dir, CifarLayout layout,
                                       const std::vector<std::string>& train_files,
                                       std::size_t train_records, const std::string& test_file) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory " + dir.string() + " does not exist");
  }
  Dataset train;
  for (const auto& f : train_files) {
    const auto path = dir / f;
    Dataset part = parse_cifar_batch(read_file(path), layout, path.string(), train_records);
    if (train.labels.empty()) {
      train = std::move(part);
    } else {
      append(train, part);
    }
  }
  const auto test_path = dir / test_file;
  Dataset test = parse_cifar_batch(read_file(test_path), layout, test_path.string(), kCifarBatchRecords);
  train.split = "train";
  test.split = "test";
  train.norm = Standardization::from_images(train.images, 3, kCifarSide * kCifarSide);
  test.norm = train.norm;
  return {std::move(train), std::move(test)};
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& directory) {
  std::vector<std::string> files;
  for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
  return load_cifar(directory, CifarLayout::Cifar10, files, kCifarBatchRecords, "test_batch.bin");
}

std::pair<Dataset, Dataset> load_cifar100(const std::filesystem::path& directory) {
  return load_cifar(directory, CifarLayout::Cifar100, {"train.bin"}, 5 * kCifarBatchRecords,
                    "test.bin");
}

// --- synthetic -------------------------------------------------------------------

namespace {

// Pattern value for class k at continuous position (y, x).
void pattern_pixel(int k, int classes, int size, double y, double x, float* out_rgb) {
  const double s = size;
  const double freq = 2.0 + 2.0 * (k / 2);
  const double t = (k % 2 == 0) ? y : x;
  const double bars = 0.5 + 0.22 * std::cos(2.0 * std::numbers::pi * freq * t / s + 0.7 * k);
  const double angle = 2.0 * std::numbers::pi * k / classes;
  const double cy = s / 2.0 + 0.28 * s * std::sin(angle);
  const double cx = s / 2.0 + 0.28 * s * std::cos(angle);
  const double r = 0.16 * s;
  const bool inside = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
  for (int c = 0; c < 3; ++c) {
    double v = bars;
    if (inside) v += 0.35 * std::cos(angle + 2.0 * std::numbers::pi * c / 3.0);
    out_rgb[c] = static_cast<float>(v);
  }
}

Dataset make_split(const SyntheticSpec& spec, std::size_t n, std::uint64_t split_id,
                   const char* name) {
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = spec.size;
  ds.classes = spec.classes;
  ds.split = name;
  ds.labels.resize(n);
  ds.images.resize(n * ds.image_size());
  const std::size_t plane = static_cast<std::size_t>(spec.size) * spec.size;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(spec.seed, split_id, i, StreamTag::Synthetic);
    const int k = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    ds.labels[i] = k;
    const int dy = rng.range(-2, 2);
    const int dx = rng.range(-2, 2);
    const double gain = rng.uniform(0.85, 1.15);
    float* img = ds.images.data() + i * ds.image_size();
    float rgb[3];
    for (int y = 0; y < spec.size; ++y) {
      for (int x = 0; x < spec.size; ++x) {
        pattern_pixel(k, spec.classes, spec.size, y - dy, x - dx, rgb);
        for (int c = 0; c < 3; ++c) {
          const double v = 0.5 + gain * (rgb[c] - 0.5) + spec.noise * rng.normal();
          img[c * plane + static_cast<std::size_t>(y) * spec.size + x] =
              static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return ds;
}

}  // namespace

Image synthetic_pattern(int k, int classes, int size) {
  Image img(3, size, size);
  float rgb[3];
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      pattern_pixel(k, classes, size, y, x, rgb);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(rgb[c], 0.0f, 1.0f);
    }
  }
  return img;
}

std::pair<Dataset, Dataset> synth_dataset(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ContractViolation("synth_dataset needs at least 2 classes");
  if (spec.size < 4) throw ContractViolation("synth_dataset image size must be >= 4");
  Dataset train = make_split(spec, spec.n_train, 0, "train");
  Dataset test = make_split(spec, spec.n_test, 1, "test");
  train.norm = Standardization::from_images(train.images, 3, spec.size * spec.size);
  test.norm = train.norm;
  return {std::move(train), std::move(test)};
}

// --- batching ---------------------------------------------------------------------

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  RngStream rng(seed, epoch, 0, StreamTag::Shuffle);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch, std::uint64_t seed) {
  if (batch_size < 1) throw ContractViolation("batch size must be >= 1");
  const auto perm = epoch_permutation(n, seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

}  // namespace sepbn
