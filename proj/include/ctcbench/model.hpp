#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctcbench/augment.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/image.hpp"
#include "ctcbench/nn/archive.hpp"
#include "ctcbench/nn/resnet.hpp"

namespace ctcbench {

using nn::BackboneSpec;
using nn::Family;

/// Backbone used for training and inference.
using Model = nn::ResNet<float>;

/// Random initialisation from a seed, or weights from an archive file.
struct RandomInit {
  std::uint64_t seed = 0;
};
struct ArchiveInit {
  std::filesystem::path path;
};
using ModelInit = std::variant<RandomInit, ArchiveInit>;

struct RegistryEntry {
  std::string name;
  std::optional<BackboneSpec> spec;  // empty for slots without an in-tree implementation
};

/// Named backbone presets. Slots without a spec satisfy lookups but cannot
/// be built.
inline const std::vector<RegistryEntry>& backbone_registry() {
  static const std::vector<RegistryEntry> registry = [] {
    auto make = [](const char* name, Family f, std::vector<int> depths, int width, int input) {
      BackboneSpec s;
      s.family = f;
      s.stage_depths = std::move(depths);
      s.base_width = width;
      s.input_size = input;
      s.preset_name = name;
      return RegistryEntry{name, s};
    };
    return std::vector<RegistryEntry>{
        make("mini", Family::MINI_RESNET, {1, 1}, 8, 64),
        make("mini-w16", Family::MINI_RESNET, {1, 1}, 16, 64),
        make("resnet18-like", Family::RESNET_BASIC, {2, 2, 2, 2}, 64, 148),
        make("resnet34-like", Family::RESNET_BASIC, {3, 4, 6, 3}, 64, 148),
        make("resnet50-like", Family::RESNET_BOTTLENECK, {3, 4, 6, 3}, 64, 148),
        RegistryEntry{"densenet121", std::nullopt},
        RegistryEntry{"efficientnet-b4", std::nullopt},
    };
  }();
  return registry;
}

inline BackboneSpec backbone_preset(const std::string& name) {
  for (const auto& e : backbone_registry()) {
    if (e.name != name) continue;
    if (!e.spec) throw ValidationError("backbone '" + name + "' is a registry slot without an in-tree implementation");
    return *e.spec;
  }
  throw ValidationError("unknown backbone '" + name + "'");
}

inline Model build_model(const BackboneSpec& spec, const ModelInit& init) {
  Model m(spec);
  if (const auto* r = std::get_if<RandomInit>(&init)) {
    m.init_random(r->seed);
  } else {
    m.load_archive(nn::read_archive(std::get<ArchiveInit>(init).path));
  }
  return m;
}

/// Pixel normalisation shared by train, val and test; computed on training
/// samples only.
struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};

inline Normalization compute_normalization(const std::vector<AugmentedSample>& samples) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples)
    for (auto p : s.image.pixels) {
      sum += p;
      sq += static_cast<double>(p) * p;
      ++n;
    }
  if (n == 0) return {};
  const double mean = sum / n;
  const double var = std::max(sq / n - mean * mean, 0.0);
  return {mean, var > 0 ? std::sqrt(var) : 1.0};
}

/// Packs grayscale images into a normalised 3-channel batch (the gray plane
/// is replicated into each channel).
template <typename T = float>
nn::Tensor<T> make_batch(const std::vector<const Image*>& images, const Normalization& norm,
                         int input_size) {
  const int n = static_cast<int>(images.size());
  nn::Tensor<T> x(3, n, input_size, input_size);
  const std::size_t plane = x.plane();
  for (int i = 0; i < n; ++i) {
    const Image& img = *images[i];
    if (img.width != input_size || img.height != input_size)
      throw ValidationError("make_batch: image is not at the working size");
    T* dst = x.data.data() + static_cast<std::size_t>(i) * plane;
    for (std::size_t p = 0; p < plane; ++p)
      dst[p] = static_cast<T>((img.pixels[p] - norm.mean) / norm.std);
  }
  for (int c = 1; c < 3; ++c)
    std::copy(x.data.begin(), x.data.begin() + static_cast<std::ptrdiff_t>(x.slab()),
              x.data.begin() + static_cast<std::ptrdiff_t>(c * x.slab()));
  return x;
}

}  // namespace ctcbench
