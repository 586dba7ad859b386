#include <doctest.h>

#include <cmath>

#include "sepbn/dual_bn.hpp"
#include "sepbn/errors.hpp"
#include "sepbn/gradcheck.hpp"
#include "test_support.hpp"

using namespace sepbn;
using sepbn::testing::random_tensor;
using sepbn::testing::weighted_sum;
using sepbn::testing::with_values;

namespace {

const BnMode kModes[] = {BnMode::Single, BnMode::SharedAffine, BnMode::FullySeparate};

void set_affine(DualBatchNorm& bn, BranchId b, float gamma, float beta) {
  bn.gamma(b).value.fill(gamma);
  bn.beta(b).value.fill(beta);
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (BnMode m : kModes) CHECK(parse_bn_mode(bn_mode_name(m)) == m);
  CHECK_THROWS_AS(parse_bn_mode("shared"), ConfigError);
}

TEST_CASE("initial state") {
  DualBatchNorm bn(3, BnMode::FullySeparate);
  for (BranchId b : {BranchId::Main, BranchId::Auxiliary}) {
    for (int c = 0; c < 3; ++c) {
      CHECK(bn.gamma(b).value[c] == 1.0f);
      CHECK(bn.beta(b).value[c] == 0.0f);
      CHECK(bn.stats(b).mean[c] == 0.0f);
      CHECK(bn.stats(b).var[c] == 1.0f);
    }
    CHECK_FALSE(bn.gamma(b).decay);
    CHECK_FALSE(bn.beta(b).decay);
  }
  CHECK(bn.momentum() == doctest::Approx(0.1f));
  CHECK(bn.eps() == doctest::Approx(1e-5f));
}

TEST_CASE("storage layout per mode") {
  DualBatchNorm single(2, BnMode::Single), shared(2, BnMode::SharedAffine), separate(2, BnMode::FullySeparate);
  CHECK(single.gamma_slots().size() == 1);
  CHECK(single.stat_slots().size() == 1);
  CHECK(shared.gamma_slots().size() == 1);
  CHECK(shared.stat_slots().size() == 2);
  CHECK(separate.gamma_slots().size() == 2);
  CHECK(separate.stat_slots().size() == 2);
}

TEST_CASE("train forward hand examples") {
  SUBCASE("constant batch maps to beta") {
    for (BnMode m : kModes) {
      DualBatchNorm bn(2, m);
      set_affine(bn, BranchId::Auxiliary, 1.5f, 0.25f);
      const Tensor y = bn.forward_train(Tensor({3, 2, 2, 2}, 7.0f), BranchId::Auxiliary);
      for (float v : y.values()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
    }
  }
  SUBCASE("two values") {
    DualBatchNorm bn(1, BnMode::Single);
    const Tensor y = bn.forward_train(Tensor({2, 1, 1, 1}, std::vector<float>{0, 2}), BranchId::Main);
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0] == doctest::Approx(-expected).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(expected).epsilon(1e-6));
    // Running stats move by momentum towards (mean 1, biased var 1).
    CHECK(bn.stats(BranchId::Main).mean[0] == doctest::Approx(0.1f));
    CHECK(bn.stats(BranchId::Main).var[0] == doctest::Approx(1.0f));
    CHECK(bn.stats(BranchId::Main).updates == 1);
  }
}

TEST_CASE("train forward errors") {
  DualBatchNorm bn(2, BnMode::FullySeparate);
  CHECK_THROWS_AS(bn.forward_train(Tensor({1, 2, 1, 1}), BranchId::Main), DegenerateBatchError);
  CHECK_THROWS_AS(bn.forward_train(Tensor({2, 3, 2, 2}), BranchId::Main), ContractViolation);
  CHECK_NOTHROW(bn.forward_train(Tensor({1, 2, 1, 2}), BranchId::Main));
}

TEST_CASE("normalized output has zero mean and unit variance") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    DualBatchNorm bn(3, BnMode::FullySeparate);
    const Tensor x = random_tensor({4, 3, 5, 5}, seed, -3.0, 7.0);
    const Tensor y = bn.forward_train(x, BranchId::Main);
    for (int c = 0; c < 3; ++c) {
      double s = 0.0, ss = 0.0;
      int n = 0;
      for (int i = 0; i < 4; ++i) {
        for (int h = 0; h < 5; ++h) {
          for (int w = 0; w < 5; ++w) {
            s += y.at(i, c, h, w);
            ss += static_cast<double>(y.at(i, c, h, w)) * y.at(i, c, h, w);
            ++n;
          }
        }
      }
      const double mean = s / n;
      CHECK(std::abs(mean) <= 1e-4);
      CHECK(std::abs(ss / n - mean * mean - 1.0) <= 1e-3);
    }
  }
}

TEST_CASE("eval forward") {
  SUBCASE("identity statistics") {
    DualBatchNorm bn(1, BnMode::Single);
    bn.stats(BranchId::Main).updates = 1;
    const Tensor x = random_tensor({2, 1, 2, 2}, 4);
    const Tensor y = bn.forward_eval(x, BranchId::Main);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-5));
  }
  SUBCASE("hand formula") {
    DualBatchNorm bn(1, BnMode::FullySeparate);
    auto& st = bn.stats(BranchId::Auxiliary);
    st.mean[0] = 5.0f;
    st.var[0] = 4.0f;
    st.updates = 3;
    set_affine(bn, BranchId::Auxiliary, 2.0f, 1.0f);
    const Tensor y = bn.forward_eval(Tensor({1, 1, 1, 1}, 7.0f), BranchId::Auxiliary);
    CHECK(y[0] == doctest::Approx(2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 1.0).epsilon(1e-6));
    CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-5));
  }
  SUBCASE("uninitialized branch") {
    DualBatchNorm bn(1, BnMode::FullySeparate);
    CHECK_THROWS_AS(bn.forward_eval(Tensor({1, 1, 1, 1}), BranchId::Main), UninitializedStatisticsError);
    bn.forward_train(Tensor({2, 1, 1, 1}, std::vector<float>{0, 1}), BranchId::Main);
    CHECK_NOTHROW(bn.forward_eval(Tensor({1, 1, 1, 1}), BranchId::Main));
    CHECK_THROWS_AS(bn.forward_eval(Tensor({1, 1, 1, 1}), BranchId::Auxiliary), UninitializedStatisticsError);
  }
  SUBCASE("purity") {
    DualBatchNorm bn(2, BnMode::SharedAffine);
    bn.forward_train(random_tensor({3, 2, 2, 2}, 5), BranchId::Main);
    const DualBatchNorm before = bn;
    const Tensor x = random_tensor({2, 2, 2, 2}, 6);
    const Tensor y1 = bn.forward_eval(x, BranchId::Main);
    const Tensor y2 = bn.forward_eval(x, BranchId::Main);
    CHECK(y1 == y2);
    CHECK(bn == before);
  }
}

TEST_CASE("branch isolation and aliasing") {
  const Tensor x = random_tensor({4, 2, 3, 3}, 7);
  SUBCASE("fully separate: main step leaves auxiliary storage untouched") {
    DualBatchNorm bn(2, BnMode::FullySeparate);
    const Param g_aux = bn.gamma(BranchId::Auxiliary), b_aux = bn.beta(BranchId::Auxiliary);
    const RunningStats s_aux = bn.stats(BranchId::Auxiliary);
    BnCache cache;
    const Tensor y = bn.forward_train(x, BranchId::Main, &cache);
    bn.accumulate(bn.backward(cache, y, BranchId::Main), BranchId::Main);
    CHECK(bn.gamma(BranchId::Auxiliary).value == g_aux.value);
    CHECK(bn.gamma(BranchId::Auxiliary).grad == g_aux.grad);
    CHECK(bn.beta(BranchId::Auxiliary).grad == b_aux.grad);
    CHECK(bn.stats(BranchId::Auxiliary) == s_aux);
    CHECK(bn.stats(BranchId::Main).updates == 1);
  }
  SUBCASE("single: branches alias every quantity") {
    DualBatchNorm a(2, BnMode::Single), b(2, BnMode::Single);
    CHECK(a.forward_train(x, BranchId::Main) == b.forward_train(x, BranchId::Auxiliary));
    CHECK(a.stats(BranchId::Auxiliary) == a.stats(BranchId::Main));
    CHECK(a.stats(BranchId::Auxiliary).updates == 1);
    a.gamma(BranchId::Main).value.fill(3.0f);
    CHECK(a.gamma(BranchId::Auxiliary).value[1] == 3.0f);
  }
  SUBCASE("shared affine: gamma/beta shared, statistics separate") {
    DualBatchNorm bn(2, BnMode::SharedAffine);
    bn.forward_train(x, BranchId::Main);
    CHECK(bn.stats(BranchId::Auxiliary).updates == 0);
    bn.gamma(BranchId::Auxiliary).value.fill(0.5f);
    CHECK(bn.gamma(BranchId::Main).value == bn.gamma(BranchId::Auxiliary).value);
    CHECK(bn.beta(BranchId::Main).value == bn.beta(BranchId::Auxiliary).value);
    bn.forward_train(random_tensor({4, 2, 3, 3}, 8, 2.0, 4.0), BranchId::Auxiliary);
    CHECK(bn.stats(BranchId::Main).mean != bn.stats(BranchId::Auxiliary).mean);
  }
  SUBCASE("aliasing survives copies") {
    DualBatchNorm bn(2, BnMode::Single);
    DualBatchNorm copy = bn;
    copy.forward_train(x, BranchId::Auxiliary);
    CHECK(copy.stats(BranchId::Main).updates == 1);
    CHECK(bn.stats(BranchId::Main).updates == 0);
  }
}

TEST_CASE("backward hand cases") {
  DualBatchNorm bn(2, BnMode::FullySeparate);
  BnCache cache;
  const Tensor x = random_tensor({3, 2, 2, 2}, 9);
  bn.forward_train(x, BranchId::Auxiliary, &cache);
  SUBCASE("zero upstream gradient") {
    const auto g = bn.backward(cache, Tensor(x.shape()), BranchId::Auxiliary);
    for (float v : g.dx.values()) CHECK(v == 0.0f);
    for (float v : g.dgamma) CHECK(v == 0.0f);
    for (float v : g.dbeta) CHECK(v == 0.0f);
  }
  SUBCASE("zero gamma blocks dx") {
    bn.gamma(BranchId::Auxiliary).value.fill(0.0f);
    const auto g = bn.backward(cache, random_tensor(x.shape(), 10), BranchId::Auxiliary);
    for (float v : g.dx.values()) CHECK(v == 0.0f);
    bool any = false;
    for (float v : g.dgamma) any = any || v != 0.0f;
    CHECK(any);
  }
  SUBCASE("branch mismatch") {
    CHECK_THROWS_AS(bn.backward(cache, Tensor(x.shape()), BranchId::Main), ContractViolation);
  }
}

TEST_CASE("backward passes the finite-difference oracle in every mode") {
  for (BnMode mode : kModes) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      for (BranchId branch : {BranchId::Main, BranchId::Auxiliary}) {
        DualBatchNorm bn(3, mode);
        bn.gamma(branch).value = random_tensor({3}, seed + 100, 0.5, 1.5);
        bn.beta(branch).value = random_tensor({3}, seed + 200);
        // Narrow inputs keep float rounding in the output well below the
        // signal of a 1e-3 step.
        const Tensor x = random_tensor({4, 3, 2, 2}, seed, -0.5, 0.5);
        const Tensor r = random_tensor(x.shape(), seed + 1);
        BnCache cache;
        DualBatchNorm work = bn;
        work.forward_train(x, branch, &cache);
        const auto g = work.backward(cache, r, branch);

        auto loss_x = [&](std::span<const float> v) {
          DualBatchNorm b = bn;
          return weighted_sum(b.forward_train(with_values(x, v), branch), r);
        };
        auto loss_gamma = [&](std::span<const float> v) {
          DualBatchNorm b = bn;
          b.gamma(branch).value = with_values(b.gamma(branch).value, v);
          return weighted_sum(b.forward_train(x, branch), r);
        };
        auto loss_beta = [&](std::span<const float> v) {
          DualBatchNorm b = bn;
          b.beta(branch).value = with_values(b.beta(branch).value, v);
          return weighted_sum(b.forward_train(x, branch), r);
        };
        const auto gv = bn.gamma(branch).value.values();
        const auto bv = bn.beta(branch).value.values();
        CHECK(finite_difference_check(loss_x, {x.values().begin(), x.values().end()}, g.dx.values()).max_rel_error <= 1e-2);
        CHECK(finite_difference_check(loss_gamma, {gv.begin(), gv.end()}, g.dgamma).max_rel_error <= 1e-2);
        CHECK(finite_difference_check(loss_beta, {bv.begin(), bv.end()}, g.dbeta).max_rel_error <= 1e-2);
      }
    }
  }
}

TEST_CASE("running statistics converge under a stationary distribution") {
  DualBatchNorm bn(3, BnMode::FullySeparate);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    Tensor x({32, 3, 4, 4});
    RngStream rng(77, i, 0, StreamTag::Synthetic);
    for (auto& v : x.values()) v = static_cast<float>(rng.normal());
    bn.forward_train(x, BranchId::Auxiliary);
  }
  const auto& st = bn.stats(BranchId::Auxiliary);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(st.mean[c]) <= 0.05);
    CHECK(std::abs(st.var[c] - 1.0) <= 0.1);
    CHECK(st.var[c] >= 0.0f);
  }
  CHECK(st.updates == 1000);
  CHECK(bn.stats(BranchId::Main).updates == 0);
}
