#pragma once

#include "volrig/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace volrig::nn {

template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept in double.
template <class T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    for (const auto& p : params_)
      if (!p.tensor.has_grad()) throw std::logic_error("adam_step: parameter '" + p.name + "' has no gradient");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto values = params_[k].tensor.mutable_values();
      const auto grad = params_[k].tensor.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        values[i] = static_cast<T>(values[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace volrig::nn
