#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sepbn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compare an analytic gradient against central finite differences.
///
/// `f` is evaluated at `point` with one coordinate moved by +h and -h. The
/// perturbed coordinate is stored in float, so the divisor is the actual
/// float step taken rather than 2h; all differencing happens in double.
/// Relative error per element is |a-b| / max(|a|, |b|, 1e-6). Coordinates for
/// which `include` returns false are skipped (e.g. ReLU kinks).
///
/// Throws OracleFailure naming the index if f or the gradient is non-finite.
GradCheckReport finite_difference_check(
    const std::function<double(std::span<const float>)>& f, std::vector<float> point,
    std::span<const float> analytic, double h = 1e-3,
    const std::function<bool(std::size_t)>& include = {});

}  // namespace sepbn
