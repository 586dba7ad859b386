#include <doctest.h>

#include <omp.h>

#include "sepbn/kernels.hpp"
#include "test_support.hpp"

using namespace sepbn;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  const Tensor t = testing::random_tensor({static_cast<int>(n)}, seed);
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TEST_CASE("gemm matches the reference on ragged shapes") {
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 5, 7}, {4, 64, 9}, {9, 70, 33}, {17, 129, 5}, {64, 16, 300}}) {
    const auto a = random_vec(static_cast<std::size_t>(m) * k, m * 7 + k);
    const auto b = random_vec(static_cast<std::size_t>(k) * n, n * 13 + k);
    std::vector<float> c(static_cast<std::size_t>(m) * n, 99.0f), ref(c.size());
    kernels::gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    reference::gemm(m, n, k, a.data(), b.data(), ref.data());
    CHECK(testing::max_abs_diff(c, ref) <= 1e-4);

    // Accumulate adds on top of the existing values.
    std::vector<float> acc(c.size(), 1.0f);
    kernels::gemm(m, n, k, a.data(), k, b.data(), n, acc.data(), n, true);
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(acc[i] == doctest::Approx(ref[i] + 1.0f).epsilon(1e-4));
  }
}

TEST_CASE("gemm respects leading dimensions") {
  const int m = 5, n = 6, k = 4, lda = 9, ldb = 11, ldc = 8;
  const auto a = random_vec(static_cast<std::size_t>(m) * lda, 1);
  const auto b = random_vec(static_cast<std::size_t>(k) * ldb, 2);
  std::vector<float> c(static_cast<std::size_t>(m) * ldc, -5.0f);
  kernels::gemm(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, false);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(a[i * lda + p]) * b[p * ldb + j];
      CHECK(c[i * ldc + j] == doctest::Approx(s).epsilon(1e-5));
    }
    for (int j = n; j < ldc; ++j) CHECK(c[i * ldc + j] == -5.0f);
  }
}

TEST_CASE("im2col and col2im are adjoint") {
  // <im2col(x), y> == <x, col2im(y)> for any x, y.
  for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}, {2, 0}, {3, 2}}) {
    const int c = 2, h = 7, w = 6, kh = 3, kw = 3;
    const int oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    const std::size_t cols = static_cast<std::size_t>(c) * kh * kw * oh * ow;
    const auto x = random_vec(static_cast<std::size_t>(c) * h * w, stride * 10 + pad);
    const auto y = random_vec(cols, stride * 20 + pad);
    std::vector<float> col(cols), back(x.size(), 0.0f);
    kernels::im2col(x.data(), c, h, w, kh, kw, stride, pad, oh, ow, col.data());
    kernels::col2im(y.data(), c, h, w, kh, kw, stride, pad, oh, ow, back.data());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cols; ++i) lhs += static_cast<double>(col[i]) * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));

  }
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  const int n = 6, c = 5, h = 9, w = 9, oc = 7;
  const auto x = random_vec(static_cast<std::size_t>(n) * c * h * w, 3);
  const auto wt = random_vec(static_cast<std::size_t>(oc) * c * 9, 4);
  const auto dy = random_vec(static_cast<std::size_t>(n) * oc * 5 * 5, 5);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<float> y(static_cast<std::size_t>(n) * oc * 5 * 5), dx(x.size()), dw(wt.size());
    kernels::conv2d_forward(x.data(), n, c, h, w, wt.data(), oc, 3, 3, 2, 1, y.data());
    kernels::conv2d_backward(x.data(), n, c, h, w, wt.data(), oc, 3, 3, 2, 1, dy.data(), dx.data(), dw.data());
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    return y;
  };
  const auto one = run(1);
  const auto three = run(3);
  const auto four = run(4);
  omp_set_num_threads(1);
  CHECK(one == three);
  CHECK(one == four);
}
