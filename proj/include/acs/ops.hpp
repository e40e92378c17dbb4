#pragma once

// Forward/backward pairs for the handful of layers the model needs. Every
// backward takes the upstream gradient dy and returns the gradient with
// respect to the op input; parameter gradients are accumulated (+=) into the
// caller-provided matrices so that shared parameters sum naturally.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "acs/errors.hpp"
#include "acs/matrix.hpp"

namespace acs {

// ---------------------------------------------------------------- affine

/// y(:,t) = W x(:,t) + b for every column t.
inline Matrix affine_forward(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  if (weight.cols() != x.rows() || bias.rows() != weight.rows() || bias.cols() != 1) {
    throw DimensionError("affine_forward: weight " + weight.shape() + ", bias " + bias.shape() +
                         ", input " + x.shape());
  }
  const std::size_t out = weight.rows(), in = x.rows(), T = x.cols();
  Matrix y(out, T);
  for (std::size_t o = 0; o < out; ++o) {
    auto yr = y.row_span(o);
    std::fill(yr.begin(), yr.end(), bias(o, 0));
    for (std::size_t i = 0; i < in; ++i) {
      const double w = weight(o, i);
      if (w == 0.0) continue;
      auto xr = x.row_span(i);
      for (std::size_t t = 0; t < T; ++t) yr[t] += w * xr[t];
    }
  }
  return y;
}

inline Matrix affine_backward(const Matrix& x, const Matrix& weight, const Matrix& dy,
                              Matrix& dweight, Matrix& dbias) {
  const std::size_t out = weight.rows(), in = x.rows(), T = x.cols();
  Matrix dx(in, T);
  for (std::size_t o = 0; o < out; ++o) {
    auto dyr = dy.row_span(o);
    double db = 0.0;
    for (double v : dyr) db += v;
    dbias(o, 0) += db;
    for (std::size_t i = 0; i < in; ++i) {
      auto xr = x.row_span(i);
      auto dxr = dx.row_span(i);
      const double w = weight(o, i);
      double dw = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        dw += dyr[t] * xr[t];
        dxr[t] += w * dyr[t];
      }
      dweight(o, i) += dw;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- sigmoid

/// Logistic function, clamped to the open interval (0, 1) so that saturated
/// inputs never produce exact 0 or 1.
inline double sigmoid(double x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, lo, hi);
}

inline Matrix sigmoid(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

/// Takes the forward output y.
inline Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
  return dx;
}

// ---------------------------------------------------------------- relu

inline Matrix relu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

/// Subgradient at exactly 0 is 0.
inline Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------- conv1d

/// Temporal convolution, stride 1, symmetric zero padding of (k-1)/2.
/// `kernel` is C_out x (C_in * k) with tap j of input channel i stored at
/// column i*k + j; tap j reads x(:, t + j - (k-1)/2).
inline Matrix conv1d_forward(const Matrix& x, const Matrix& kernel, const Matrix& bias,
                             std::size_t k) {
  if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  const std::size_t cin = x.rows(), T = x.cols(), cout = kernel.rows();
  if (kernel.cols() != cin * k || bias.rows() != cout || bias.cols() != 1) {
    throw DimensionError("conv1d_forward: kernel " + kernel.shape() + " (k=" +
                         std::to_string(k) + "), bias " + bias.shape() + ", input " + x.shape());
  }
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto TT = static_cast<std::ptrdiff_t>(T);
  Matrix y(cout, T);
  for (std::size_t o = 0; o < cout; ++o) {
    auto yr = y.row_span(o);
    std::fill(yr.begin(), yr.end(), bias(o, 0));
    for (std::size_t i = 0; i < cin; ++i) {
      auto xr = x.row_span(i);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = kernel(o, i * k + j);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(TT, TT - shift);
        for (std::ptrdiff_t t = t0; t < t1; ++t) yr[t] += w * xr[t + shift];
      }
    }
  }
  return y;
}

inline Matrix conv1d_backward(const Matrix& x, const Matrix& kernel, std::size_t k,
                              const Matrix& dy, Matrix& dkernel, Matrix& dbias) {
  const std::size_t cin = x.rows(), T = x.cols(), cout = kernel.rows();
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto TT = static_cast<std::ptrdiff_t>(T);
  Matrix dx(cin, T);
  for (std::size_t o = 0; o < cout; ++o) {
    auto dyr = dy.row_span(o);
    double db = 0.0;
    for (double v : dyr) db += v;
    dbias(o, 0) += db;
    for (std::size_t i = 0; i < cin; ++i) {
      auto xr = x.row_span(i);
      auto dxr = dx.row_span(i);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = kernel(o, i * k + j);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(TT, TT - shift);
        double dw = 0.0;
        for (std::ptrdiff_t t = t0; t < t1; ++t) {
          dw += dyr[t] * xr[t + shift];
          dxr[t + shift] += w * dyr[t];
        }
        dkernel(o, i * k + j) += dw;
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- softmax

/// Column-wise softmax, stabilised by subtracting each column's maximum.
inline Matrix softmax_columns(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.cols(); ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < x.rows(); ++r) mx = std::max(mx, x(r, t));
    double z = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      y(r, t) = std::exp(x(r, t) - mx);
      z += y(r, t);
    }
    for (std::size_t r = 0; r < x.rows(); ++r) y(r, t) /= z;
  }
  return y;
}

inline Matrix softmax_columns_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t t = 0; t < y.cols(); ++t) {
    double dot = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r) dot += y(r, t) * dy(r, t);
    for (std::size_t r = 0; r < y.rows(); ++r) dx(r, t) = y(r, t) * (dy(r, t) - dot);
  }
  return dx;
}

// ---------------------------------------------------------------- l2 normalize

inline constexpr double kNormEpsilon = 1e-12;

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Unit-norm copy of v; a vector with norm <= 1e-12 is returned unchanged.
inline std::vector<double> l2_normalize(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  const double n = l2_norm(v);
  if (n <= kNormEpsilon) return out;
  for (double& x : out) x /= n;
  return out;
}

/// Gradient through l2_normalize; zero for (near-)zero inputs.
inline std::vector<double> l2_normalize_backward(std::span<const double> v,
                                                 std::span<const double> dy) {
  std::vector<double> dx(v.size(), 0.0);
  const double n = l2_norm(v);
  if (n <= kNormEpsilon) return dx;
  double dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * dy[i];
  dot /= n;  // y . dy
  for (std::size_t i = 0; i < v.size(); ++i) dx[i] = (dy[i] - (v[i] / n) * dot) / n;
  return dx;
}

}  // namespace acs
