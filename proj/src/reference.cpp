#include <cstddef>

#include "sepbn/kernels.hpp"

namespace sepbn::reference {

void gemm(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[static_cast<std::size_t>(i) * k + p]) *
               b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = static_cast<float>(acc);
    }
  }
}

void conv2d_forward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                    int kh, int kw, int stride, int pad, float* y) {
  const int out_h = (h + 2 * pad - kh) / stride + 1;
  const int out_w = (w + 2 * pad - kw) / stride + 1;
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_c; ++o) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(
                           x[((static_cast<std::size_t>(i) * c + ch) * h + iy) * w + ix]) *
                       weight[((static_cast<std::size_t>(o) * c + ch) * kh + ky) * kw + kx];
              }
            }
          }
          y[((static_cast<std::size_t>(i) * out_c + o) * out_h + oy) * out_w + ox] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_backward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                     int kh, int kw, int stride, int pad, const float* dy, float* dx, float* dw) {
  const int out_h = (h + 2 * pad - kh) / stride + 1;
  const int out_w = (w + 2 * pad - kw) / stride + 1;
  const std::size_t in_size = static_cast<std::size_t>(n) * c * h * w;
  const std::size_t w_size = static_cast<std::size_t>(out_c) * c * kh * kw;
  if (dx) {
    for (std::size_t i = 0; i < in_size; ++i) dx[i] = 0.0f;
  }
  if (dw) {
    for (std::size_t i = 0; i < w_size; ++i) dw[i] = 0.0f;
  }
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_c; ++o) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const float g = dy[((static_cast<std::size_t>(i) * out_c + o) * out_h + oy) * out_w + ox];
          for (int ch = 0; ch < c; ++ch) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const std::size_t xi = ((static_cast<std::size_t>(i) * c + ch) * h + iy) * w + ix;
                const std::size_t wi = ((static_cast<std::size_t>(o) * c + ch) * kh + ky) * kw + kx;
                if (dx) dx[xi] += g * weight[wi];
                if (dw) dw[wi] += g * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace sepbn::reference
