#pragma once

#include <cmath>
#include <vector>

#include "ctcbench/nn/tensor.hpp"

namespace ctcbench::nn {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay: theta <- theta * (1 - lr*wd), then the
/// bias-corrected Adam step. Buffers and frozen parameters are skipped.
template <typename T>
class AdamW {
public:
  AdamW(ParamStore<T>& store, AdamWOptions opts) : store_(store), opts_(opts) {
    for (auto& p : store_.all()) {
      m_.emplace_back(p.buffer ? 0 : p.numel(), 0.0);
      v_.emplace_back(p.buffer ? 0 : p.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t_);
    std::size_t k = 0;
    for (auto& p : store_.all()) {
      auto& m = m_[k];
      auto& v = v_[k];
      ++k;
      if (p.buffer || !p.trainable) continue;
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double g = p.grad[i];
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        double theta = p.value[i];
        theta *= 1.0 - opts_.lr * opts_.weight_decay;
        theta -= opts_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
        p.value[i] = static_cast<T>(theta);
      }
    }
  }

  long steps() const noexcept { return t_; }

private:
  ParamStore<T>& store_;
  AdamWOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace ctcbench::nn
