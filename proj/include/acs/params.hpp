#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/rng.hpp"

namespace acs {

/// A learnable tensor with its gradient and adaptive-moment state.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  long long steps = 0;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        moment1(value.rows(), value.cols()),
        moment2(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Named parameters in insertion order.
class ParamStore {
 public:
  ParamTensor& add(std::string name, Matrix value) {
    if (index_.contains(name)) throw ConfigError("ParamStore: duplicate parameter " + name);
    index_.emplace(name, params_.size());
    params_.emplace_back(std::move(name), std::move(value));
    return params_.back();
  }

  ParamTensor& at(const std::string& name) { return params_[lookup(name)]; }
  const ParamTensor& at(const std::string& name) const { return params_[lookup(name)]; }
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: no parameter named " + name);
    return it->second;
  }

  std::vector<ParamTensor> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected adaptive-moment update of a single tensor.
inline void adam_step(ParamTensor& p, const AdamConfig& cfg) {
  ++p.steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.steps));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    p.moment1[i] = cfg.beta1 * p.moment1[i] + (1.0 - cfg.beta1) * g;
    p.moment2[i] = cfg.beta2 * p.moment2[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = p.moment1[i] / c1;
    const double vhat = p.moment2[i] / c2;
    p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

inline void adam_step(ParamStore& store, const AdamConfig& cfg = {}) {
  for (auto& p : store) adam_step(p, cfg);
}

/// Gaussian init with std = gain / sqrt(fan_in).
inline Matrix random_weight(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng,
                            double gain = 1.0) {
  Matrix m(rows, cols);
  const double std = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : m.values()) v = std * normal(rng);
  return m;
}

}  // namespace acs
