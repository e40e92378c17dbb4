#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "acs/matrix.hpp"
#include "acs/params.hpp"

namespace acs {

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares `gradient(point)` with central differences of the scalar
/// function `f` at `point`; returns the maximum relative error over entries.
inline double finite_diff_check(const std::function<double(const Matrix&)>& f,
                                const std::function<Matrix(const Matrix&)>& gradient,
                                const Matrix& point, double eps = 1e-5) {
  const Matrix analytic = gradient(point);
  Matrix::require_same_shape(analytic, point, "finite_diff_check");
  Matrix probe = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double fp = f(probe);
    probe[i] = point[i] - eps;
    const double fm = f(probe);
    probe[i] = point[i];
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

/// Same check over every entry of every tensor in a parameter store.
/// `backward` must fill the store's gradients (after zeroing them itself).
inline double finite_diff_check(ParamStore& store, const std::function<double()>& loss,
                                const std::function<void()>& backward, double eps = 1e-5) {
  store.zero_grad();
  backward();
  double worst = 0.0;
  for (auto& p : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double fp = loss();
      p.value[i] = orig - eps;
      const double fm = loss();
      p.value[i] = orig;
      worst = std::max(worst, relative_error(p.grad[i], (fp - fm) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace acs
