#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "sepbn/data.hpp"
#include "sepbn/errors.hpp"
#include "test_support.hpp"

using namespace sepbn;
using sepbn::testing::scratch_dir;

namespace {

std::vector<std::uint8_t> random_records(std::size_t n, CifarLayout layout, std::uint64_t seed) {
  const std::size_t rec = cifar_record_size(layout);
  std::vector<std::uint8_t> bytes(n * rec);
  RngStream rng(seed, 0, 0, StreamTag::Synthetic);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < rec; ++j) bytes[i * rec + j] = static_cast<std::uint8_t>(rng.below(256));
    if (layout == CifarLayout::Cifar10) {
      bytes[i * rec] = static_cast<std::uint8_t>(rng.below(10));
    } else {
      bytes[i * rec] = static_cast<std::uint8_t>(rng.below(20));
      bytes[i * rec + 1] = static_cast<std::uint8_t>(rng.below(100));
    }
  }
  return bytes;
}

template <class F>
std::string error_message(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("cifar record decoding") {
  CHECK(cifar_record_size(CifarLayout::Cifar10) == 3073);
  CHECK(cifar_record_size(CifarLayout::Cifar100) == 3074);

  std::vector<std::uint8_t> rec(3073, 0);
  rec[0] = 7;
  rec[1] = 255;              // red (0,0)
  rec[1 + 1023] = 51;        // red (31,31)
  rec[1 + 1024 + 32] = 102;  // green (1,0)
  rec[1 + 2048 + 5] = 204;   // blue (0,5)
  const Dataset ds = parse_cifar_batch(rec, CifarLayout::Cifar10, "one");
  REQUIRE(ds.size() == 1);
  CHECK(ds.labels[0] == 7);
  CHECK(ds.classes == 10);
  const Image img = ds.image_copy(0);
  CHECK(img.at(0, 0, 0) == 1.0f);
  CHECK(img.at(0, 31, 31) == 51.0f / 255.0f);
  CHECK(img.at(1, 1, 0) == 102.0f / 255.0f);
  CHECK(img.at(2, 0, 5) == 204.0f / 255.0f);
  CHECK(img.at(1, 0, 0) == 0.0f);
}

TEST_CASE("cifar round trip is byte exact") {
  for (CifarLayout layout : {CifarLayout::Cifar10, CifarLayout::Cifar100}) {
    const auto bytes = random_records(20, layout, 3);
    const Dataset ds = parse_cifar_batch(bytes, layout, "rt", 20);
    CHECK(encode_cifar_batch(ds, layout) == bytes);
  }
  const auto bytes = random_records(3, CifarLayout::Cifar100, 4);
  const Dataset ds = parse_cifar_batch(bytes, CifarLayout::Cifar100, "fine");
  CHECK(ds.labels[1] == bytes[3074 + 1]);
  CHECK(ds.classes == 100);
}

TEST_CASE("cifar format errors are located") {
  auto bytes = random_records(4, CifarLayout::Cifar10, 5);
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 100);
    const auto msg = error_message([&] { parse_cifar_batch(bytes, CifarLayout::Cifar10, "data_batch_1.bin"); });
    CHECK(msg.find("data_batch_1.bin") != std::string::npos);
    CHECK(msg.find("byte offset 9219") != std::string::npos);
  }
  SUBCASE("wrong record count") {
    const auto msg = error_message([&] { parse_cifar_batch(bytes, CifarLayout::Cifar10, "test_batch.bin", 10000); });
    CHECK(msg.find("test_batch.bin") != std::string::npos);
    CHECK(msg.find("30730000") != std::string::npos);
  }
  SUBCASE("label out of range") {
    bytes[2 * 3073] = 10;
    const auto msg = error_message([&] { parse_cifar_batch(bytes, CifarLayout::Cifar10, "x.bin"); });
    CHECK(msg.find("record 2") != std::string::npos);
    CHECK(msg.find("byte offset 6146") != std::string::npos);
  }
}

TEST_CASE("cifar directory errors") {
  const auto dir = scratch_dir("data_dir");
  CHECK_THROWS_AS(load_cifar10(dir / "absent"), DataError);
  const auto msg = error_message([&] { load_cifar10(dir); });
  CHECK(msg.find("data_batch_1.bin") != std::string::npos);
  write_file(dir / "data_batch_1.bin", random_records(3, CifarLayout::Cifar10, 1));
  const auto msg2 = error_message([&] { load_cifar10(dir); });
  CHECK(msg2.find("data_batch_1.bin") != std::string::npos);
  CHECK(msg2.find("expected 30730000 bytes") != std::string::npos);
  CHECK_THROWS_AS(load_cifar100(dir), DataError);
}

TEST_CASE("standardization") {
  SyntheticSpec spec;
  spec.n_train = 200;
  spec.n_test = 10;
  spec.size = 16;
  auto [train, test] = synth_dataset(spec);
  CHECK(test.norm == train.norm);
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor x = gather_images(train, idx);
  train.norm.apply(x);
  const int plane = 16 * 16;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (int p = 0; p < plane; ++p) {
        const double v = x[(i * 3 + c) * plane + p];
        s += v;
        ss += v * v;
      }
    }
    const double n = static_cast<double>(train.size()) * plane;
    CHECK(std::abs(s / n) <= 1e-4);
    CHECK(std::abs(std::sqrt(ss / n - (s / n) * (s / n)) - 1.0) <= 1e-3);
  }
  Tensor id = x;
  Standardization::identity(3).apply(id);
  CHECK(id == x);
}

TEST_CASE("synthetic dataset") {
  SyntheticSpec spec;
  spec.n_train = 400;
  spec.n_test = 100;
  spec.seed = 12;
  const auto [a_train, a_test] = synth_dataset(spec);
  const auto [b_train, b_test] = synth_dataset(spec);
  CHECK(a_train.images == b_train.images);
  CHECK(a_test.labels == b_test.labels);
  CHECK(a_train.split == "train");
  CHECK(a_test.split == "test");
  for (float v : a_train.images) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  std::vector<int> counts(4, 0);
  for (int l : a_train.labels) ++counts.at(static_cast<std::size_t>(l));
  for (int c : counts) CHECK(c == 100);

  spec.seed = 13;
  CHECK(synth_dataset(spec).first.images != a_train.images);

  // Class-mean images are far apart relative to the pixel noise.
  const std::size_t d = a_train.image_size();
  std::vector<std::vector<double>> mean(4, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < a_train.size(); ++i) {
    auto& m = mean[static_cast<std::size_t>(a_train.labels[i])];
    const auto img = a_train.image(i);
    for (std::size_t j = 0; j < d; ++j) m[j] += img[j] / 100.0;
  }
  for (int p = 0; p < 4; ++p) {
    for (int q = p + 1; q < 4; ++q) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += (mean[p][j] - mean[q][j]) * (mean[p][j] - mean[q][j]);
      CHECK(std::sqrt(dist) >= 5.0 * spec.noise);
    }
  }
  for (int k = 0; k < 4; ++k) CHECK(synthetic_pattern(k, 4, 32).pixels.size() == d);

  spec.n_train = 0;
  const auto [empty, test] = synth_dataset(spec);
  CHECK(empty.size() == 0);
  CHECK(test.size() == 100);
  spec.classes = 1;
  CHECK_THROWS_AS(synth_dataset(spec), ContractViolation);
}

TEST_CASE("batching") {
  const auto perm = epoch_permutation(50, 3, 1);
  CHECK(perm == epoch_permutation(50, 3, 1));
  CHECK(perm != epoch_permutation(50, 3, 2));
  CHECK(std::set<std::size_t>(perm.begin(), perm.end()).size() == 50);

  const auto one = batches(50, 50, 0, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == epoch_permutation(50, 3, 0));

  const auto b = batches(50, 16, 4, 3);
  REQUIRE(b.size() == 4);
  CHECK(b.back().size() == 2);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  CHECK_THROWS_AS(batches(50, 0, 0, 3), ContractViolation);
}

TEST_CASE("dataset views") {
  SyntheticSpec spec;
  spec.n_train = 12;
  spec.n_test = 4;
  spec.size = 8;
  const Dataset ds = synth_dataset(spec).first;
  const Dataset h = ds.head(5);
  CHECK(h.size() == 5);
  CHECK(ds.head(0).size() == 12);
  CHECK(ds.head(100).size() == 12);
  const std::vector<std::size_t> pick = {7, 2};
  const Dataset s = ds.select(pick);
  CHECK(s.labels == std::vector<int>{ds.labels[7], ds.labels[2]});
  CHECK(s.image_copy(0) == ds.image_copy(7));
  CHECK(gather_labels(ds, pick) == s.labels);
  CHECK_THROWS_AS(gather_images(ds, std::vector<std::size_t>{99}), ContractViolation);
}
