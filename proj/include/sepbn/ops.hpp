#pragma once

#include <span>

#include "sepbn/tensor.hpp"

// Layer operations with paired hand-derived backward passes. All functions are
// pure: they read their inputs and return fresh tensors.

namespace sepbn {

int conv_output_size(int input, int kernel, int stride, int pad);

// x: NCHW, w: OIHW. Cross-correlation.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

struct Conv2dGrads {
  Tensor dx;
  Tensor dw;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride,
                            int pad);

// x: N x D, w: D x K, b: K.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

Tensor relu(const Tensor& x);
// Gradient mask uses x > 0, so the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// NCHW -> N x C spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
  double loss = 0.0;  // mean over the batch
  Tensor probs;
};
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
// dlogits = dloss * (probs - onehot) / N
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels,
                                      double dloss = 1.0);

}  // namespace sepbn
