#include "sepbn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepbn/errors.hpp"
#include "sepbn/kernels.hpp"

namespace sepbn {

int conv_output_size(int input, int kernel, int stride, int pad) {
  return (input + 2 * pad - kernel) / stride + 1;
}

namespace {

void check_conv(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ContractViolation("conv2d expects NCHW input and OIHW kernel, got " +
                            shape_string(x.shape()) + " and " + shape_string(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw ContractViolation("conv2d channel mismatch: input " + shape_string(x.shape()) +
                            " vs kernel " + shape_string(w.shape()));
  }
  if (stride < 1 || pad < 0) {
    throw ContractViolation("conv2d needs stride >= 1 and pad >= 0");
  }
  if (x.dim(2) + 2 * pad < w.dim(2) || x.dim(3) + 2 * pad < w.dim(3)) {
    throw ContractViolation("conv2d kernel " + shape_string(w.shape()) +
                            " does not fit padded input " + shape_string(x.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_conv(x, w, stride, pad);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int out_c = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  Tensor y({n, out_c, conv_output_size(h, kh, stride, pad), conv_output_size(wd, kw, stride, pad)});
  kernels::conv2d_forward(x.data(), n, c, h, wd, w.data(), out_c, kh, kw, stride, pad, y.data());
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride,
                            int pad) {
  check_conv(x, w, stride, pad);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int out_c = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Shape expected{n, out_c, conv_output_size(h, kh, stride, pad),
                       conv_output_size(wd, kw, stride, pad)};
  if (dy.shape() != expected) {
    throw ContractViolation("conv2d_backward: dy shape " + shape_string(dy.shape()) +
                            " does not match output shape " + shape_string(expected));
  }
  Conv2dGrads g{Tensor(x.shape()), Tensor(w.shape())};
  kernels::conv2d_backward(x.data(), n, c, h, wd, w.data(), out_c, kh, kw, stride, pad, dy.data(),
                           g.dx.data(), g.dw.data());
  return g;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
      w.dim(1) != b.dim(0)) {
    throw ContractViolation("dense: incompatible shapes x" + shape_string(x.shape()) + " w" +
                            shape_string(w.shape()) + " b" + shape_string(b.shape()));
  }
  const int n = x.dim(0), d = x.dim(1), k = w.dim(1);
  Tensor y({n, k});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) y[static_cast<std::size_t>(i) * k + j] = b[j];
  }
  kernels::gemm(n, k, d, x.data(), d, w.data(), k, y.data(), k, true);
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || dy.rank() != 2 ||
      dy.dim(0) != x.dim(0) || dy.dim(1) != w.dim(1)) {
    throw ContractViolation("dense_backward: incompatible shapes x" + shape_string(x.shape()) +
                            " w" + shape_string(w.shape()) + " dy" + shape_string(dy.shape()));
  }
  const int n = x.dim(0), d = x.dim(1), k = w.dim(1);
  DenseGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({k})};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const float gv = dy[static_cast<std::size_t>(i) * k + j];
      g.db[j] += gv;
    }
  }
  // dx = dy * w^T
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < d; ++p) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) {
        acc += static_cast<double>(dy[static_cast<std::size_t>(i) * k + j]) *
               w[static_cast<std::size_t>(p) * k + j];
      }
      g.dx[static_cast<std::size_t>(i) * d + p] = static_cast<float>(acc);
    }
  }
  // dw = x^T * dy
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < d; ++p) {
      const float xv = x[static_cast<std::size_t>(i) * d + p];
      float* row = g.dw.data() + static_cast<std::size_t>(p) * k;
      const float* grow = dy.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) row[j] += xv * grow[j];
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.shape() != dy.shape()) {
    throw ContractViolation("relu_backward: shape mismatch " + shape_string(x.shape()) + " vs " +
                            shape_string(dy.shape()));
  }
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) {
    throw ContractViolation("global_avg_pool expects NCHW, got " + shape_string(x.shape()));
  }
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float* src = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      y[static_cast<std::size_t>(i) * c + ch] = static_cast<float>(acc / static_cast<double>(plane));
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy) {
  if (input_shape.size() != 4 || dy.rank() != 2 || dy.dim(0) != input_shape[0] ||
      dy.dim(1) != input_shape[1]) {
    throw ContractViolation("global_avg_pool_backward: dy " + shape_string(dy.shape()) +
                            " incompatible with input " + shape_string(input_shape));
  }
  const int n = input_shape[0], c = input_shape[1];
  const std::size_t plane = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
  const float scale = 1.0f / static_cast<float>(plane);
  Tensor dx(input_shape);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float g = dy[static_cast<std::size_t>(i) * c + ch] * scale;
      float* dst = dx.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      std::fill(dst, dst + plane, g);
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ContractViolation("softmax expects N x K logits, got " + shape_string(logits.shape()));
  }
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor probs(logits.shape());
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<std::size_t>(i) * k;
    float* out = probs.data() + static_cast<std::size_t>(i) * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j]) - mx);
    for (int j = 0; j < k; ++j) {
      out[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / total);
    }
  }
  return probs;
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ContractViolation("cross entropy expects N x K logits, got " +
                            shape_string(logits.shape()));
  }
  if (static_cast<int>(labels.size()) != logits.dim(0)) {
    throw ContractViolation("cross entropy: " + std::to_string(labels.size()) +
                            " labels for logits " + shape_string(logits.shape()));
  }
  const int k = logits.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ContractViolation("cross entropy: label " + std::to_string(labels[i]) + " at index " +
                              std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const int n = logits.dim(0), k = logits.dim(1);
  CrossEntropy out{0.0, softmax(logits)};
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<std::size_t>(i) * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    // -log p_y = log(sum exp(l - mx)) - (l_y - mx)
    total += std::log(z) - (static_cast<double>(row[labels[i]]) - mx);
  }
  out.loss = total / n;
  return out;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels,
                                      double dloss) {
  check_labels(probs, labels);
  const int n = probs.dim(0), k = probs.dim(1);
  Tensor d = probs;
  for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i) * k + labels[i]] -= 1.0f;
  const float scale = static_cast<float>(dloss / n);
  for (auto& v : d.values()) v *= scale;
  return d;
}

}  // namespace sepbn
