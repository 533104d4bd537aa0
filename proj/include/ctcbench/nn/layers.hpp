#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ctcbench/core/rng.hpp"
#include "ctcbench/nn/tensor.hpp"

namespace ctcbench::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 2-D convolution without bias. Weight layout [out][in][k][k].
template <typename T>
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in_c, int out_c, int kernel,
         int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
    weight_ = store.add(name + ".weight", {out_c, in_c, kernel, kernel});
  }

  /// Kaiming-normal, fan-out mode.
  void init(Rng& rng) {
    const double sd = std::sqrt(2.0 / (out_c_ * k_ * k_));
    for (auto& v : weight_->value) v = static_cast<T>(rng.normal(0.0, sd));
  }

  int out_size(int in) const noexcept { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (train) {
      in_shape_ = {x.c, x.n, x.h, x.w};
      if (pointwise()) cached_input_ = x.data;
    }
    return run(x, train && !pointwise() ? &cols_ : nullptr);
  }

  Tensor<T> forward_eval(const Tensor<T>& x) const { return run(x, nullptr); }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int ckk = in_c_ * k_ * k_;
    const auto np = static_cast<Eigen::Index>(dy.slab());
    Eigen::Map<const RowMat<T>> w(weight_->value.data(), out_c_, ckk);
    Eigen::Map<const RowMat<T>> g(dy.data.data(), out_c_, np);
    Eigen::Map<RowMat<T>> dw(weight_->grad.data(), out_c_, ckk);
    const T* col = pointwise() ? cached_input_.data() : cols_.data();
    Eigen::Map<const RowMat<T>> c(col, ckk, np);
    if (weight_->trainable) dw.noalias() += g * c.transpose();

    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    if (pointwise()) {
      Eigen::Map<RowMat<T>> dcol(dx.data.data(), ckk, np);
      dcol.noalias() = w.transpose() * g;
    } else {
      std::vector<T> dcol_buf(static_cast<std::size_t>(ckk) * np);
      Eigen::Map<RowMat<T>> dcol(dcol_buf.data(), ckk, np);
      dcol.noalias() = w.transpose() * g;
      col2im(dcol_buf, dx, dy.h, dy.w);
    }
    return dx;
  }

  Param<T>* weight() const noexcept { return weight_; }

private:
  bool pointwise() const noexcept { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  Tensor<T> run(const Tensor<T>& x, std::vector<T>* keep) const {
    const int oh = out_size(x.h), ow = out_size(x.w);
    Tensor<T> y(out_c_, x.n, oh, ow);
    const int ckk = in_c_ * k_ * k_;
    const auto np = static_cast<Eigen::Index>(y.slab());
    Eigen::Map<const RowMat<T>> w(weight_->value.data(), out_c_, ckk);
    Eigen::Map<RowMat<T>> out(y.data.data(), out_c_, np);
    if (pointwise()) {
      Eigen::Map<const RowMat<T>> in(x.data.data(), ckk, np);
      out.noalias() = w * in;
      return y;
    }
    std::vector<T> local;
    std::vector<T>& col = keep ? *keep : local;
    im2col(x, oh, ow, col);
    Eigen::Map<const RowMat<T>> c(col.data(), ckk, np);
    out.noalias() = w * c;
    return y;
  }

  void im2col(const Tensor<T>& x, int oh, int ow, std::vector<T>& col) const {
    const std::size_t np = static_cast<std::size_t>(x.n) * oh * ow;
    col.assign(static_cast<std::size_t>(in_c_) * k_ * k_ * np, T(0));
    for (int c = 0; c < in_c_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * np;
          for (int n = 0; n < x.n; ++n) {
            const T* plane = x.data.data() + (static_cast<std::size_t>(c) * x.n + n) * x.plane();
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              T* dst = row + (static_cast<std::size_t>(n) * oh + oy) * ow;
              if (iy < 0 || iy >= x.h) continue;
              const T* src = plane + static_cast<std::size_t>(iy) * x.w;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
              }
            }
          }
        }
  }

  void col2im(const std::vector<T>& col, Tensor<T>& dx, int oh, int ow) const {
    const std::size_t np = static_cast<std::size_t>(dx.n) * oh * ow;
    for (int c = 0; c < in_c_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = col.data() + ((static_cast<std::size_t>(c) * k_ + ky) * k_ + kx) * np;
          for (int n = 0; n < dx.n; ++n) {
            T* plane = dx.data.data() + (static_cast<std::size_t>(c) * dx.n + n) * dx.plane();
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= dx.h) continue;
              const T* src = row + (static_cast<std::size_t>(n) * oh + oy) * ow;
              T* dst = plane + static_cast<std::size_t>(iy) * dx.w;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < dx.w) dst[ix] += src[ox];
              }
            }
          }
        }
  }

  int in_c_ = 0, out_c_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Param<T>* weight_ = nullptr;
  std::vector<T> cols_;
  std::vector<T> cached_input_;
  std::array<int, 4> in_shape_{};
};

/// Per-channel batch normalisation with running statistics for eval mode.
template <typename T>
class BatchNorm2d {
public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels) : c_(channels) {
    gamma_ = store.add(name + ".weight", {channels});
    beta_ = store.add(name + ".bias", {channels});
    mean_ = store.add(name + ".running_mean", {channels}, true);
    var_ = store.add(name + ".running_var", {channels}, true);
    std::fill(gamma_->value.begin(), gamma_->value.end(), T(1));
    std::fill(var_->value.begin(), var_->value.end(), T(1));
  }

  Param<T>* gamma() const noexcept { return gamma_; }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (!train) return forward_eval(x);
    const std::size_t m = x.slab();
    Tensor<T> y(x.c, x.n, x.h, x.w);
    xhat_.resize(x.size());
    inv_std_.assign(c_, 0.0);
    for (int c = 0; c < c_; ++c) {
      const T* src = x.data.data() + c * m;
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) sum += src[i];
      const double mean = sum / m;
      double sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) sq += (src[i] - mean) * (src[i] - mean);
      const double var = sq / m;
      const double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_[c] = inv;
      const double g = gamma_->value[c], b = beta_->value[c];
      T* xh = xhat_.data() + c * m;
      T* dst = y.data.data() + c * m;
      for (std::size_t i = 0; i < m; ++i) {
        xh[i] = static_cast<T>((src[i] - mean) * inv);
        dst[i] = static_cast<T>(g * xh[i] + b);
      }
      const double unbiased = m > 1 ? sq / (m - 1) : var;
      mean_->value[c] = static_cast<T>((1 - kMomentum) * mean_->value[c] + kMomentum * mean);
      var_->value[c] = static_cast<T>((1 - kMomentum) * var_->value[c] + kMomentum * unbiased);
    }
    return y;
  }

  Tensor<T> forward_eval(const Tensor<T>& x) const {
    const std::size_t m = x.slab();
    Tensor<T> y(x.c, x.n, x.h, x.w);
    for (int c = 0; c < c_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(var_->value[c]) + kEps);
      const T scale = static_cast<T>(gamma_->value[c] * inv);
      const T shift = static_cast<T>(beta_->value[c] - mean_->value[c] * gamma_->value[c] * inv);
      const T* src = x.data.data() + c * m;
      T* dst = y.data.data() + c * m;
      for (std::size_t i = 0; i < m; ++i) dst[i] = scale * src[i] + shift;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t m = dy.slab();
    Tensor<T> dx(dy.c, dy.n, dy.h, dy.w);
    for (int c = 0; c < c_; ++c) {
      const T* g = dy.data.data() + c * m;
      const T* xh = xhat_.data() + c * m;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
      if (gamma_->trainable) {
        gamma_->grad[c] += static_cast<T>(sum_gx);
        beta_->grad[c] += static_cast<T>(sum_g);
      }
      const double k = gamma_->value[c] * inv_std_[c] / m;
      T* dst = dx.data.data() + c * m;
      for (std::size_t i = 0; i < m; ++i)
        dst[i] = static_cast<T>(k * (m * static_cast<double>(g[i]) - sum_g - xh[i] * sum_gx));
    }
    return dx;
  }

private:
  int c_ = 0;
  Param<T>* gamma_ = nullptr;
  Param<T>* beta_ = nullptr;
  Param<T>* mean_ = nullptr;
  Param<T>* var_ = nullptr;
  std::vector<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class Relu {
public:
  Tensor<T> forward(Tensor<T> x, bool train) {
    if (train) mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.data[i] > T(0)) {
        if (train) mask_[i] = 1;
      } else {
        x.data[i] = T(0);
      }
    }
    return x;
  }
  static Tensor<T> forward_eval(Tensor<T> x) {
    for (auto& v : x.data) v = std::max(v, T(0));
    return x;
  }
  Tensor<T> backward(Tensor<T> dy) const {
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (!mask_[i]) dy.data[i] = T(0);
    return dy;
  }

private:
  std::vector<unsigned char> mask_;
};

/// 3x3 max pooling, stride 2, padding 1.
template <typename T>
class MaxPool {
public:
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (train) in_shape_ = {x.c, x.n, x.h, x.w};
    return run(x, train ? &argmax_ : nullptr);
  }
  Tensor<T> forward_eval(const Tensor<T>& x) const { return run(x, nullptr); }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
    return dx;
  }

private:
  static int out_size(int in) { return (in + 2 - 3) / 2 + 1; }

  Tensor<T> run(const Tensor<T>& x, std::vector<std::size_t>* arg) const {
    const int oh = out_size(x.h), ow = out_size(x.w);
    Tensor<T> y(x.c, x.n, oh, ow);
    if (arg) arg->assign(y.size(), 0);
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c)
      for (int n = 0; n < x.n; ++n)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = 0;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * 2 - 1 + kx;
                if (ix < 0 || ix >= x.w) continue;
                const std::size_t idx = ((static_cast<std::size_t>(c) * x.n + n) * x.h + iy) * x.w + ix;
                if (x.data[idx] > best) {
                  best = x.data[idx];
                  best_i = idx;
                }
              }
            }
            y.data[o] = best;
            if (arg) (*arg)[o] = best_i;
          }
    return y;
  }

  std::vector<std::size_t> argmax_;
  std::array<int, 4> in_shape_{};
};

/// Global average pooling followed by a fully connected classifier.
/// Produces row-major logits [N][classes].
template <typename T>
class Head {
public:
  Head() = default;
  Head(ParamStore<T>& store, const std::string& name, int in_features, int classes)
      : in_(in_features), out_(classes) {
    weight_ = store.add(name + ".weight", {classes, in_features});
    bias_ = store.add(name + ".bias", {classes});
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : weight_->value) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias_->value) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  std::vector<T> forward(const Tensor<T>& x, bool train) {
    auto pooled = pool(x);
    if (train) {
      pooled_ = pooled;
      in_shape_ = {x.c, x.n, x.h, x.w};
    }
    return classify(pooled, x.n);
  }

  std::vector<T> forward_eval(const Tensor<T>& x) const { return classify(pool(x), x.n); }

  Tensor<T> backward(const std::vector<T>& dlogits) {
    const int n = in_shape_[1];
    std::vector<T> dpooled(static_cast<std::size_t>(in_) * n, T(0));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < out_; ++k) {
        const T g = dlogits[static_cast<std::size_t>(i) * out_ + k];
        if (bias_->trainable) bias_->grad[k] += g;
        for (int c = 0; c < in_; ++c) {
          if (weight_->trainable)
            weight_->grad[static_cast<std::size_t>(k) * in_ + c] += g * pooled_[static_cast<std::size_t>(c) * n + i];
          dpooled[static_cast<std::size_t>(c) * n + i] += g * weight_->value[static_cast<std::size_t>(k) * in_ + c];
        }
      }
    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    const std::size_t plane = dx.plane();
    const T scale = T(1) / static_cast<T>(plane);
    for (int c = 0; c < dx.c; ++c)
      for (int i = 0; i < n; ++i) {
        const T g = dpooled[static_cast<std::size_t>(c) * n + i] * scale;
        T* dst = dx.data.data() + (static_cast<std::size_t>(c) * n + i) * plane;
        std::fill(dst, dst + plane, g);
      }
    return dx;
  }

private:
  std::vector<T> pool(const Tensor<T>& x) const {
    std::vector<T> pooled(static_cast<std::size_t>(x.c) * x.n);
    const std::size_t plane = x.plane();
    for (int c = 0; c < x.c; ++c)
      for (int i = 0; i < x.n; ++i) {
        const T* src = x.data.data() + (static_cast<std::size_t>(c) * x.n + i) * plane;
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += src[p];
        pooled[static_cast<std::size_t>(c) * x.n + i] = static_cast<T>(s / plane);
      }
    return pooled;
  }

  std::vector<T> classify(const std::vector<T>& pooled, int n) const {
    std::vector<T> logits(static_cast<std::size_t>(n) * out_);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < out_; ++k) {
        double s = bias_->value[k];
        for (int c = 0; c < in_; ++c)
          s += static_cast<double>(weight_->value[static_cast<std::size_t>(k) * in_ + c]) *
               pooled[static_cast<std::size_t>(c) * n + i];
        logits[static_cast<std::size_t>(i) * out_ + k] = static_cast<T>(s);
      }
    return logits;
  }

  int in_ = 0, out_ = 2;
  Param<T>* weight_ = nullptr;
  Param<T>* bias_ = nullptr;
  std::vector<T> pooled_;
  std::array<int, 4> in_shape_{};
};

template <typename T>
inline Tensor<T> add(Tensor<T> a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
  return a;
}

}  // namespace ctcbench::nn
