#include "sepbn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepbn/errors.hpp"

namespace sepbn {

GradCheckReport finite_difference_check(const std::function<double(std::span<const float>)>& f,
                                        std::vector<float> point, std::span<const float> analytic,
                                        double h, const std::function<bool(std::size_t)>& include) {
  if (analytic.size() != point.size()) {
    throw ContractViolation("finite_difference_check: gradient has " +
                            std::to_string(analytic.size()) + " entries for a point of size " +
                            std::to_string(point.size()));
  }
  GradCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (include && !include(i)) continue;
    const float original = point[i];
    const float plus = static_cast<float>(original + h);
    const float minus = static_cast<float>(original - h);
    point[i] = plus;
    const double f_plus = f(point);
    point[i] = minus;
    const double f_minus = f(point);
    point[i] = original;

    const double step = static_cast<double>(plus) - static_cast<double>(minus);
    const double numeric = (f_plus - f_minus) / step;
    const double a = analytic[i];
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus) || !std::isfinite(numeric) ||
        !std::isfinite(a)) {
      throw OracleFailure("finite_difference_check: non-finite value at index " +
                          std::to_string(i));
    }
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error || report.checked == 0) {
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_index = i;
      }
    }
    ++report.checked;
  }
  return report;
}

}  // namespace sepbn
