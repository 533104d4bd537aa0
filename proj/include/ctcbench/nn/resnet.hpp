#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "ctcbench/core/error.hpp"
#include "ctcbench/core/rng.hpp"
#include "ctcbench/nn/archive.hpp"
#include "ctcbench/nn/layers.hpp"
#include "ctcbench/nn/tensor.hpp"

namespace ctcbench::nn {

enum class Family { RESNET_BASIC, RESNET_BOTTLENECK, MINI_RESNET };

inline std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::RESNET_BASIC: return "RESNET_BASIC";
    case Family::RESNET_BOTTLENECK: return "RESNET_BOTTLENECK";
    case Family::MINI_RESNET: return "MINI_RESNET";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "RESNET_BASIC") return Family::RESNET_BASIC;
  if (s == "RESNET_BOTTLENECK") return Family::RESNET_BOTTLENECK;
  if (s == "MINI_RESNET") return Family::MINI_RESNET;
  throw ValidationError("unknown backbone family '" + std::string(s) + "'");
}

struct BackboneSpec {
  Family family = Family::MINI_RESNET;
  std::vector<int> stage_depths = {1, 1};
  int base_width = 8;
  int input_size = 64;
  int num_classes = 2;
  std::optional<std::string> preset_name;

  void validate() const {
    if (stage_depths.empty()) throw ValidationError("backbone: at least one stage required");
    for (int d : stage_depths)
      if (d < 1) throw ValidationError("backbone: stage depths must be >= 1");
    if (base_width < 1) throw ValidationError("backbone: base_width must be >= 1");
    if (num_classes != 2) throw ValidationError("backbone: num_classes must be 2");
    if (input_size < 8) throw ValidationError("backbone: input_size must be >= 8");
  }

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

inline nlohmann::ordered_json to_json(const BackboneSpec& s) {
  nlohmann::ordered_json j;
  j["family"] = std::string(to_string(s.family));
  j["stage_depths"] = s.stage_depths;
  j["base_width"] = s.base_width;
  j["input_size"] = s.input_size;
  j["num_classes"] = s.num_classes;
  if (s.preset_name) j["preset_name"] = *s.preset_name;
  return j;
}

/// One residual unit: basic (3x3, 3x3) or bottleneck (1x1, 3x3, 1x1 x4).
template <typename T>
class ResidualBlock {
public:
  ResidualBlock(ParamStore<T>& store, const std::string& name, int in_c, int width, int stride,
                bool bottleneck) {
    if (bottleneck) {
      const int out_c = width * 4;
      add_unit(store, name, 1, in_c, width, 1, 1, 0);
      add_unit(store, name, 2, width, width, 3, stride, 1);
      add_unit(store, name, 3, width, out_c, 1, 1, 0);
      out_c_ = out_c;
    } else {
      add_unit(store, name, 1, in_c, width, 3, stride, 1);
      add_unit(store, name, 2, width, width, 3, 1, 1);
      out_c_ = width;
    }
    if (stride != 1 || in_c != out_c_) {
      shortcut_conv_ = Conv2d<T>(store, name + ".downsample.0", in_c, out_c_, 1, stride, 0);
      shortcut_bn_ = BatchNorm2d<T>(store, name + ".downsample.1", out_c_);
      has_shortcut_ = true;
    }
    relus_.resize(convs_.size());
  }

  int out_channels() const noexcept { return out_c_; }
  int main_path_layers() const noexcept { return static_cast<int>(convs_.size()); }

  void init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    if (has_shortcut_) shortcut_conv_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = bns_[i].forward(convs_[i].forward(h, train), train);
      if (i + 1 < convs_.size()) h = relus_[i].forward(std::move(h), train);
    }
    Tensor<T> s = has_shortcut_ ? shortcut_bn_.forward(shortcut_conv_.forward(x, train), train) : x;
    return relus_.back().forward(add(std::move(h), s), train);
  }

  Tensor<T> forward_eval(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = bns_[i].forward_eval(convs_[i].forward_eval(h));
      if (i + 1 < convs_.size()) h = Relu<T>::forward_eval(std::move(h));
    }
    Tensor<T> s = has_shortcut_ ? shortcut_bn_.forward_eval(shortcut_conv_.forward_eval(x)) : x;
    return Relu<T>::forward_eval(add(std::move(h), s));
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> g = relus_.back().backward(dy);
    Tensor<T> dx = has_shortcut_ ? shortcut_conv_.backward(shortcut_bn_.backward(g)) : g;
    Tensor<T> h = std::move(g);
    for (std::size_t i = convs_.size(); i-- > 0;) {
      if (i + 1 < convs_.size()) h = relus_[i].backward(std::move(h));
      h = convs_[i].backward(bns_[i].backward(h));
    }
    return add(std::move(dx), h);
  }

private:
  void add_unit(ParamStore<T>& store, const std::string& name, int idx, int in_c, int out_c, int k,
                int stride, int pad) {
    const auto i = std::to_string(idx);
    convs_.emplace_back(store, name + ".conv" + i, in_c, out_c, k, stride, pad);
    bns_.emplace_back(store, name + ".bn" + i, out_c);
  }

  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> bns_;
  std::vector<Relu<T>> relus_;
  Conv2d<T> shortcut_conv_;
  BatchNorm2d<T> shortcut_bn_;
  bool has_shortcut_ = false;
  int out_c_ = 0;
};

/// Residual classifier over 3-channel square inputs.
///
/// MINI_RESNET uses a 3x3 stride-2 stem without max pooling; the full-size
/// families use the 7x7 stride-2 stem followed by 3x3 max pooling.
template <typename T>
class ResNet {
public:
  static_assert(std::is_floating_point_v<T>);

  explicit ResNet(BackboneSpec spec) : spec_(std::move(spec)), store_(std::make_unique<ParamStore<T>>()) {
    spec_.validate();
    auto& s = *store_;
    const bool mini = spec_.family == Family::MINI_RESNET;
    const bool bottleneck = spec_.family == Family::RESNET_BOTTLENECK;
    stem_conv_ = Conv2d<T>(s, "conv1", 3, spec_.base_width, mini ? 3 : 7, 2, mini ? 1 : 3);
    stem_bn_ = BatchNorm2d<T>(s, "bn1", spec_.base_width);
    use_pool_ = !mini;
    int in_c = spec_.base_width;
    for (std::size_t stage = 0; stage < spec_.stage_depths.size(); ++stage) {
      const int width = spec_.base_width << stage;
      for (int b = 0; b < spec_.stage_depths[stage]; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        const auto name = "layer" + std::to_string(stage + 1) + "." + std::to_string(b);
        blocks_.emplace_back(s, name, in_c, width, stride, bottleneck);
        in_c = blocks_.back().out_channels();
      }
    }
    head_ = Head<T>(s, "fc", in_c, spec_.num_classes);
  }

  ResNet(ResNet&&) noexcept = default;
  ResNet& operator=(ResNet&&) noexcept = default;
  ResNet(const ResNet&) = delete;
  ResNet& operator=(const ResNet&) = delete;

  const BackboneSpec& spec() const noexcept { return spec_; }

  void init_random(std::uint64_t seed) {
    Rng rng(seed);
    stem_conv_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    head_.init(rng);
  }

  /// Weighted layers along the main path (stem conv + block convs + fc).
  int depth() const noexcept {
    int d = 2;
    for (const auto& b : blocks_) d += b.main_path_layers();
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : store_->all())
      if (!p.buffer) n += p.numel();
    return n;
  }

  ParamStore<T>& params() noexcept { return *store_; }
  const ParamStore<T>& params() const noexcept { return *store_; }

  /// When false only the classifier head is trained.
  void set_finetune_all(bool all) {
    for (auto& p : store_->all())
      if (!p.buffer) p.trainable = all || p.name.rfind("fc.", 0) == 0;
  }

  void zero_grad() {
    for (auto& p : store_->all()) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  /// Training-mode forward (batch statistics, caches for backward).
  std::vector<T> forward(const Tensor<T>& x) {
    check_input(x);
    Tensor<T> h = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x, true), true), true);
    if (use_pool_) h = pool_.forward(h, true);
    for (auto& b : blocks_) h = b.forward(h, true);
    return head_.forward(h, true);
  }

  /// Eval-mode forward; read-only, safe to call concurrently.
  std::vector<T> forward_eval(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> h = Relu<T>::forward_eval(stem_bn_.forward_eval(stem_conv_.forward_eval(x)));
    if (use_pool_) h = pool_.forward_eval(h);
    for (const auto& b : blocks_) h = b.forward_eval(h);
    return head_.forward_eval(h);
  }

  /// Accumulates parameter gradients for the last training forward.
  void backward(const std::vector<T>& dlogits) {
    Tensor<T> g = head_.backward(dlogits);
    for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g);
    if (use_pool_) g = pool_.backward(g);
    stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(std::move(g))));
  }

  WeightArchive to_archive() const {
    WeightArchive a;
    for (const auto& p : store_->all()) {
      NamedTensor t;
      t.name = p.name;
      t.shape.assign(p.shape.begin(), p.shape.end());
      t.values.assign(p.value.begin(), p.value.end());
      t.dtype = std::is_same_v<T, float> ? "f32" : "f64";
      a.tensors.push_back(std::move(t));
    }
    a.metadata["backbone"] = to_json(spec_);
    return a;
  }

  /// Loads every tensor; names and shapes must match exactly.
  void load_archive(const WeightArchive& a) {
    for (auto& p : store_->all()) {
      const NamedTensor* t = a.find(p.name);
      if (!t) throw ValidationError("archive is missing tensor '" + p.name + "'");
      if (!std::equal(t->shape.begin(), t->shape.end(), p.shape.begin(), p.shape.end()))
        throw ValidationError("archive tensor '" + p.name + "' has shape " + shape_str(t->shape) +
                              ", model expects " + shape_str({p.shape.begin(), p.shape.end()}));
    }
    for (const auto& t : a.tensors)
      if (!store_->find(t.name)) throw ValidationError("archive has unexpected tensor '" + t.name + "'");
    for (auto& p : store_->all()) {
      const NamedTensor* t = a.find(p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(t->values[i]);
    }
  }

  /// FNV-1a over the raw bytes of every tensor.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : store_->all()) {
      h = fnv1a(p.name, h);
      const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
      for (std::size_t i = 0; i < p.value.size() * sizeof(T); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

private:
  static std::string shape_str(const std::vector<std::int64_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
  }

  void check_input(const Tensor<T>& x) const {
    if (x.c != 3 || x.h != spec_.input_size || x.w != spec_.input_size)
      throw ValidationError("forward: expected 3x" + std::to_string(spec_.input_size) + "x" +
                            std::to_string(spec_.input_size) + " inputs");
    for (T v : x.data)
      if (!std::isfinite(v)) throw NumericError("forward: non-finite input value");
  }

  BackboneSpec spec_;
  std::unique_ptr<ParamStore<T>> store_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  Relu<T> stem_relu_;
  MaxPool<T> pool_;
  bool use_pool_ = false;
  std::vector<ResidualBlock<T>> blocks_;
  Head<T> head_;
};

}  // namespace ctcbench::nn
