#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

namespace ctcbench::nn {

/// Activation tensor in channel-major [C][N][H][W] layout, so every channel
/// is one contiguous slab across the batch.
template <typename T>
struct Tensor {
  int c = 0, n = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c_, int n_, int h_, int w_, T fill = T(0))
      : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  /// Elements per channel (batch x spatial).
  std::size_t slab() const noexcept { return static_cast<std::size_t>(n) * h * w; }

  T& at(int ci, int ni, int y, int x) {
    return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x];
  }
  T at(int ci, int ni, int y, int x) const {
    return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const noexcept {
    return c == o.c && n == o.n && h == o.h && w == o.w;
  }
};

/// Named parameter or buffer. Buffers (batch-norm running statistics) are
/// saved in checkpoints but never receive gradients.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool buffer = false;
  bool trainable = true;

  std::size_t numel() const noexcept { return value.size(); }
};

/// Owns all parameters of a model; element addresses are stable.
template <typename T>
class ParamStore {
public:
  Param<T>* add(std::string name, std::vector<int> shape, bool buffer = false) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    auto& p = params_.emplace_back();
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(count, T(0));
    if (!buffer) p.grad.assign(count, T(0));
    p.buffer = buffer;
    p.trainable = !buffer;
    return &p;
  }

  std::deque<Param<T>>& all() noexcept { return params_; }
  const std::deque<Param<T>>& all() const noexcept { return params_; }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

private:
  std::deque<Param<T>> params_;
};

}  // namespace ctcbench::nn
