#include "sepbn/tensor.hpp"

#include <malloc.h>

#include <cmath>
#include <sstream>

#include "sepbn/errors.hpp"

namespace sepbn {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

// Activations are allocated and freed every step. Serving them from the heap
// instead of fresh mmap regions avoids paying page faults on every tensor.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

void check_dims(const Shape& shape) {
  if (shape.empty()) throw ContractViolation("tensor shape must have at least one dimension");
  for (int d : shape) {
    if (d < 1) throw ContractViolation("tensor dimension < 1 in shape " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_dims(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
  }
}

void Tensor::fill(float value) {
  for (auto& v : data_) v = value;
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Param::Param(Tensor v, bool apply_decay)
    : value(std::move(v)), grad(value.shape()), velocity(value.shape()), decay(apply_decay) {}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw ContractViolation("add: shape mismatch " + shape_string(dst.shape()) + " vs " +
                            shape_string(src.shape()));
  }
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void add_scaled_inplace(Tensor& dst, const Tensor& src, float scale) {
  if (dst.shape() != src.shape()) {
    throw ContractViolation("add_scaled: shape mismatch " + shape_string(dst.shape()) + " vs " +
                            shape_string(src.shape()));
  }
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

bool all_finite(const Tensor& t) {
  for (float v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace sepbn
