#pragma once

#include <cstddef>

// Low-level float kernels. The parallel versions split work over output rows
// or images only, so every output element is reduced in a fixed order and the
// result does not depend on the OpenMP thread count.

namespace sepbn::kernels {

// C[M,N] (+)= A[M,K] * B[K,N], all row-major with explicit leading dims.
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate);

// Unfold one CHW image into [C*KH*KW, HO*WO] columns (zero padding).
void im2col(const float* img, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, float* col);

// Scatter-add columns back to an image; inverse layout of im2col.
void col2im(const float* col, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, float* img);

// NCHW convolution (cross-correlation) forward and backward, OpenMP over images.
void conv2d_forward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                    int kh, int kw, int stride, int pad, float* y);
void conv2d_backward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                     int kh, int kw, int stride, int pad, const float* dy, float* dx, float* dw);

}  // namespace sepbn::kernels

namespace sepbn::reference {

// Serial direct-loop versions kept as test oracles and benchmark baselines.
void gemm(int m, int n, int k, const float* a, const float* b, float* c);

void conv2d_forward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                    int kh, int kw, int stride, int pad, float* y);
void conv2d_backward(const float* x, int n, int c, int h, int w, const float* weight, int out_c,
                     int kh, int kw, int stride, int pad, const float* dy, float* dx, float* dw);

}  // namespace sepbn::reference
