#include "sepbn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace sepbn::kernels {

namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 64;

// 4 rows of C against a fixed-width column panel; accumulators stay in registers.
template <int Width>
void micro_4xw(int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
               bool accumulate) {
  float acc0[Width], acc1[Width], acc2[Width], acc3[Width];
  if (accumulate) {
    for (int j = 0; j < Width; ++j) {
      acc0[j] = c[j];
      acc1[j] = c[ldc + j];
      acc2[j] = c[2 * ldc + j];
      acc3[j] = c[3 * ldc + j];
    }
  } else {
    for (int j = 0; j < Width; ++j) acc0[j] = acc1[j] = acc2[j] = acc3[j] = 0.0f;
  }
  for (int p = 0; p < k; ++p) {
    const float a0 = a[p];
    const float a1 = a[lda + p];
    const float a2 = a[2 * lda + p];
    const float a3 = a[3 * lda + p];
    const float* brow = b + static_cast<std::size_t>(p) * ldb;
#pragma omp simd
    for (int j = 0; j < Width; ++j) {
      const float bv = brow[j];
      acc0[j] += a0 * bv;
      acc1[j] += a1 * bv;
      acc2[j] += a2 * bv;
      acc3[j] += a3 * bv;
    }
  }
  for (int j = 0; j < Width; ++j) {
    c[j] = acc0[j];
    c[ldc + j] = acc1[j];
    c[2 * ldc + j] = acc2[j];
    c[3 * ldc + j] = acc3[j];
  }
}

// Generic single-row fallback for ragged edges.
void row_kernel(int n, int k, const float* a, const float* b, int ldb, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + n, 0.0f);
  for (int p = 0; p < k; ++p) {
    const float av = a[p];
    const float* brow = b + static_cast<std::size_t>(p) * ldb;
#pragma omp simd
    for (int j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

void gemm_row_block(int rows, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  if (rows == kRowBlock) {
    int j0 = 0;
    for (; j0 + kColBlock <= n; j0 += kColBlock) {
      micro_4xw<kColBlock>(k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
    }
    for (; j0 + 16 <= n; j0 += 16) {
      micro_4xw<16>(k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
    }
    if (j0 < n) {
      for (int r = 0; r < rows; ++r) {
        row_kernel(n - j0, k, a + static_cast<std::size_t>(r) * lda, b + j0, ldb,
                   c + static_cast<std::size_t>(r) * ldc + j0, accumulate);
      }
    }
    return;
  }
  for (int r = 0; r < rows; ++r) {
    row_kernel(n, k, a + static_cast<std::size_t>(r) * lda, b, ldb,
               c + static_cast<std::size_t>(r) * ldc, accumulate);
  }
}

// Output columns [lo, hi) whose input column ox * stride - pad + kx is inside [0, width).
inline void valid_range(int out_w, int width, int stride, int pad, int kx, int& lo, int& hi) {
  const int first = pad - kx;  // ox * stride >= first
  lo = first > 0 ? (first + stride - 1) / stride : 0;
  const int last = width - 1 + pad - kx;  // ox * stride <= last
  hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill(c + static_cast<std::size_t>(i) * ldc,
                                            c + static_cast<std::size_t>(i) * ldc + n, 0.0f);
    }
    return;
  }
  const int blocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static) if (blocks > 1 && !omp_in_parallel())
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - i0);
    gemm_row_block(rows, n, k, a + static_cast<std::size_t>(i0) * lda, lda, b, ldb,
                   c + static_cast<std::size_t>(i0) * ldc, ldc, accumulate);
  }
}


void im2col(const float* img, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, float* col) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* src = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* dst = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        int lo, hi;
        valid_range(out_w, width, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* drow = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(drow, drow + out_w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * width - pad + kx;
          std::fill(drow, drow + lo, 0.0f);
          if (stride == 1) {
            std::copy(srow + lo, srow + hi, drow + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * stride];
          }
          std::fill(drow + hi, drow + out_w, 0.0f);
        }
      }
    }
  }
}

void col2im(const float* col, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, float* img) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* dst = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* src = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * plane;
        int lo, hi;
        valid_range(out_w, width, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * width - pad + kx;
          const float* srow = src + static_cast<std::size_t>(oy) * out_w;
          if (stride == 1) {
#pragma omp simd
            for (int ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * stride] += srow[ox];
          }
        }
      }
    }
  }
}

void conv2d_forward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                    int kh, int kw, int stride, int pad, float* y) {
  const int out_h = (h + 2 * pad - kh) / stride + 1;
  const int out_w = (w + 2 * pad - kw) / stride + 1;
  const int kdim = c * kh * kw;
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_stride = static_cast<std::size_t>(c) * h * w;
  const std::size_t out_stride = static_cast<std::size_t>(out_c) * plane;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

#pragma omp parallel if (n > 1)
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const float* src = x + i * in_stride;
      if (!pointwise) {
        im2col(src, c, h, w, kh, kw, stride, pad, out_h, out_w, col.data());
        src = col.data();
      }
      gemm(out_c, static_cast<int>(plane), kdim, weight, kdim, src, static_cast<int>(plane),
           y + i * out_stride, static_cast<int>(plane), false);
    }
  }
}

void conv2d_backward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                     int kh, int kw, int stride, int pad, const float* dy, float* dx, float* dw) {
  const int out_h = (h + 2 * pad - kh) / stride + 1;
  const int out_w = (w + 2 * pad - kw) / stride + 1;
  const int kdim = c * kh * kw;
  const int plane = out_h * out_w;
  const std::size_t in_stride = static_cast<std::size_t>(c) * h * w;
  const std::size_t out_stride = static_cast<std::size_t>(out_c) * plane;

  // Transposed weights [kdim, out_c] for the input gradient.
  std::vector<float> wt(static_cast<std::size_t>(kdim) * out_c);
  for (int o = 0; o < out_c; ++o) {
    for (int p = 0; p < kdim; ++p) {
      wt[static_cast<std::size_t>(p) * out_c + o] = weight[static_cast<std::size_t>(o) * kdim + p];
    }
  }

  if (dx != nullptr) {
#pragma omp parallel if (n > 1)
    {
      std::vector<float> col(static_cast<std::size_t>(kdim) * plane);
#pragma omp for schedule(static)
      for (int i = 0; i < n; ++i) {
        gemm(kdim, plane, out_c, wt.data(), out_c, dy + i * out_stride, plane, col.data(), plane,
             false);
        float* dst = dx + i * in_stride;
        std::fill(dst, dst + in_stride, 0.0f);
        col2im(col.data(), c, h, w, kh, kw, stride, pad, out_h, out_w, dst);
      }
    }
  }

  if (dw != nullptr) {
    // dW^T [kdim, out_c] = sum_i col_i [kdim, plane] * dy_i^T [plane, out_c]. Images are
    // accumulated in order; gemm parallelizes over rows of dW^T.
    std::vector<float> col(static_cast<std::size_t>(kdim) * plane);
    std::vector<float> dyt(static_cast<std::size_t>(plane) * out_c);
    std::vector<float> dwt(static_cast<std::size_t>(kdim) * out_c);
    for (int i = 0; i < n; ++i) {
      im2col(x + i * in_stride, c, h, w, kh, kw, stride, pad, out_h, out_w, col.data());
      const float* g = dy + i * out_stride;
      for (int o = 0; o < out_c; ++o) {
        for (int p = 0; p < plane; ++p) dyt[static_cast<std::size_t>(p) * out_c + o] = g[static_cast<std::size_t>(o) * plane + p];
      }
      gemm(kdim, out_c, plane, col.data(), plane, dyt.data(), out_c, dwt.data(), out_c, i > 0);
    }
    for (int o = 0; o < out_c; ++o) {
      for (int p = 0; p < kdim; ++p) {
        dw[static_cast<std::size_t>(o) * kdim + p] = n > 0 ? dwt[static_cast<std::size_t>(p) * out_c + o] : 0.0f;
      }
    }
  }
}

}  // namespace sepbn::kernels
