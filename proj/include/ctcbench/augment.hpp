#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/arms.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/core/parallel.hpp"
#include "ctcbench/core/rng.hpp"
#include "ctcbench/data.hpp"
#include "ctcbench/image.hpp"
#include "ctcbench/image_source.hpp"

namespace ctcbench {

enum class AugKind { GEOMETRIC, BRIGHTNESS, COLOR };

inline constexpr std::string_view to_string(AugKind k) noexcept {
  switch (k) {
    case AugKind::GEOMETRIC: return "GEOMETRIC";
    case AugKind::BRIGHTNESS: return "BRIGHTNESS";
    case AugKind::COLOR: return "COLOR";
  }
  return "?";
}

inline AugKind parse_aug_kind(std::string_view s) {
  if (s == "GEOMETRIC") return AugKind::GEOMETRIC;
  if (s == "BRIGHTNESS") return AugKind::BRIGHTNESS;
  if (s == "COLOR") return AugKind::COLOR;
  throw ValidationError("unknown augmentation kind '" + std::string(s) + "'");
}

/// Draw ranges shared by all ops; each kind reads only its own fields.
struct AugParams {
  double rotation_min_deg = -180.0;
  double rotation_max_deg = 180.0;
  double flip_h_prob = 0.5;
  double flip_v_prob = 0.5;
  double brightness_min = 0.7;
  double brightness_max = 1.3;
  double gamma_min = 0.8;
  double gamma_max = 1.25;
  double contrast_min = 0.8;
  double contrast_max = 1.2;

  void validate() const {
    auto range = [](double lo, double hi, double lo_bound, double hi_bound, const char* what) {
      if (!(lo <= hi) || lo < lo_bound || hi > hi_bound)
        throw ValidationError(std::string("augment: invalid ") + what + " range");
    };
    range(rotation_min_deg, rotation_max_deg, -180.0, 180.0, "rotation");
    range(flip_h_prob, flip_h_prob, 0.0, 1.0, "flip_h_prob");
    range(flip_v_prob, flip_v_prob, 0.0, 1.0, "flip_v_prob");
    range(brightness_min, brightness_max, 0.0, 3.0, "brightness");
    range(gamma_min, gamma_max, 0.1, 5.0, "gamma");
    range(contrast_min, contrast_max, 0.0, 3.0, "contrast");
    if (brightness_min <= 0.0) throw ValidationError("augment: brightness must be > 0");
  }

  friend bool operator==(const AugParams&, const AugParams&) = default;
};

struct AugmentationOp {
  AugKind kind = AugKind::GEOMETRIC;
  AugParams params;
  std::uint64_t seed = 0;
};

enum class SampleOrigin { ORIGINAL, AUG_GEOMETRIC, AUG_BRIGHTNESS, AUG_COLOR, OTHER_CHANNEL };

inline constexpr std::string_view to_string(SampleOrigin o) noexcept {
  switch (o) {
    case SampleOrigin::ORIGINAL: return "ORIGINAL";
    case SampleOrigin::AUG_GEOMETRIC: return "AUG_GEOMETRIC";
    case SampleOrigin::AUG_BRIGHTNESS: return "AUG_BRIGHTNESS";
    case SampleOrigin::AUG_COLOR: return "AUG_COLOR";
    case SampleOrigin::OTHER_CHANNEL: return "OTHER_CHANNEL";
  }
  return "?";
}

inline constexpr SampleOrigin origin_of(AugKind k) noexcept {
  switch (k) {
    case AugKind::GEOMETRIC: return SampleOrigin::AUG_GEOMETRIC;
    case AugKind::BRIGHTNESS: return SampleOrigin::AUG_BRIGHTNESS;
    case AugKind::COLOR: return SampleOrigin::AUG_COLOR;
  }
  return SampleOrigin::ORIGINAL;
}

struct AugmentedSample {
  std::string parent_cell_id;
  Image image;
  Label label = Label::CTC;
  SampleOrigin origin = SampleOrigin::ORIGINAL;
};

struct PipelinePlan {
  ExperimentArm arm;
  std::vector<AugmentationOp> ops;
  bool inject_other_channel = false;

  void validate() const {
    if (ops.size() > 3) throw ValidationError("pipeline plan: at most 3 ops");
    for (const auto& op : ops) op.params.validate();
  }
};

namespace aug_detail {

inline std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Reflect-101 for a continuous coordinate into [0, n-1].
inline double reflect(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(std::abs(x), period);
  return x > n - 1 ? period - x : x;
}

inline double sample_bilinear(const Image& img, double x, double y) {
  x = reflect(x, img.width);
  y = reflect(y, img.height);
  const int x0 = std::min(static_cast<int>(x), img.width - 1);
  const int y0 = std::min(static_cast<int>(y), img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img.at(x0, y0) * (1 - fx) + img.at(x1, y0) * fx;
  const double bottom = img.at(x0, y1) * (1 - fx) + img.at(x1, y1) * fx;
  return top * (1 - fy) + bottom * fy;
}

inline Image flip(const Image& in, bool horizontal) {
  Image out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      out.at(x, y) = horizontal ? in.at(in.width - 1 - x, y) : in.at(x, in.height - 1 - y);
  return out;
}

/// Rotation about the image centre, counter-clockwise in degrees. Quarter
/// turns of square images are exact pixel permutations.
inline Image rotate(const Image& in, double degrees) {
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    const int q = ((static_cast<int>(std::round(turns)) % 4) + 4) % 4;
    if (q == 0) return in;
    if (in.width == in.height || q == 2) {
      Image out(in.width, in.height);
      const int w = in.width, h = in.height;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          switch (q) {
            case 1: out.at(x, y) = in.at(w - 1 - y, x); break;
            case 2: out.at(x, y) = in.at(w - 1 - x, h - 1 - y); break;
            default: out.at(x, y) = in.at(y, h - 1 - x); break;
          }
        }
      return out;
    }
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = 0.5 * (in.width - 1), cy = 0.5 * (in.height - 1);
  Image out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      // inverse map: rotate output coordinate by -angle
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      out.at(x, y) = to_pixel(sample_bilinear(in, sx, sy));
    }
  return out;
}

}  // namespace aug_detail

/// Applies one seeded augmentation. Pure in (image, op, draw_seed).
inline Image apply_op(const Image& image, const AugmentationOp& op, std::uint64_t draw_seed) {
  if (image.empty()) throw ValidationError("apply_op: empty image");
  Rng rng(derive_seed(op.seed, draw_seed));
  const auto& p = op.params;
  switch (op.kind) {
    case AugKind::GEOMETRIC: {
      const bool fh = rng.bernoulli(p.flip_h_prob);
      const bool fv = rng.bernoulli(p.flip_v_prob);
      const double angle = p.rotation_min_deg == p.rotation_max_deg
                               ? p.rotation_min_deg
                               : rng.uniform(p.rotation_min_deg, p.rotation_max_deg);
      Image out = image;
      if (fh) out = aug_detail::flip(out, true);
      if (fv) out = aug_detail::flip(out, false);
      return aug_detail::rotate(out, angle);
    }
    case AugKind::BRIGHTNESS: {
      const double f = p.brightness_min == p.brightness_max
                           ? p.brightness_min
                           : rng.uniform(p.brightness_min, p.brightness_max);
      Image out = image;
      for (auto& v : out.pixels) v = aug_detail::to_pixel(v * f);
      return out;
    }
    case AugKind::COLOR: {
      // Single-channel images: colour jitter reduces to gamma plus contrast.
      const double g = p.gamma_min == p.gamma_max ? p.gamma_min : rng.uniform(p.gamma_min, p.gamma_max);
      const double c = p.contrast_min == p.contrast_max ? p.contrast_min
                                                        : rng.uniform(p.contrast_min, p.contrast_max);
      std::vector<double> toned(image.pixels.size());
      double mean = 0.0;
      for (std::size_t i = 0; i < toned.size(); ++i) {
        toned[i] = 255.0 * std::pow(image.pixels[i] / 255.0, g);
        mean += toned[i];
      }
      mean /= static_cast<double>(toned.size());
      Image out(image.width, image.height);
      for (std::size_t i = 0; i < toned.size(); ++i)
        out.pixels[i] = aug_detail::to_pixel(mean + c * (toned[i] - mean));
      return out;
    }
  }
  return image;
}

/// Bilinear resize with half-pixel centres; identity when the size already matches.
inline Image resize_to_working(const Image& image, int size) {
  if (image.empty()) throw ValidationError("resize_to_working: empty image");
  if (size < 1) throw ValidationError("resize_to_working: size must be >= 1");
  if (image.width == size && image.height == size) return image;
  Image out(size, size);
  const double sx = static_cast<double>(image.width) / size;
  const double sy = static_cast<double>(image.height) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    for (int x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      out.at(x, y) = aug_detail::to_pixel(aug_detail::sample_bilinear(image, fx, fy));
    }
  }
  return out;
}

/// Augmentation settings of an experiment; decides which ops the
/// one- and two-op arms use.
struct AugmentConfig {
  AugParams params;
  std::uint64_t seed = 0;
  std::vector<AugKind> aug1_ops = {AugKind::GEOMETRIC};
  std::vector<AugKind> aug2_ops = {AugKind::GEOMETRIC, AugKind::BRIGHTNESS};
};

inline PipelinePlan make_plan(const ExperimentArm& arm, const AugmentConfig& cfg) {
  std::vector<AugKind> kinds;
  switch (arm.n_aug_ops) {
    case 0: break;
    case 1: kinds = cfg.aug1_ops; break;
    case 2: kinds = cfg.aug2_ops; break;
    case 3: kinds = {AugKind::GEOMETRIC, AugKind::BRIGHTNESS, AugKind::COLOR}; break;
    default: throw ValidationError("arm requests an unsupported number of ops");
  }
  if (kinds.size() != static_cast<std::size_t>(arm.n_aug_ops))
    throw ValidationError("arm " + std::string(to_string(arm.name)) + " needs " +
                          std::to_string(arm.n_aug_ops) + " ops, config lists " +
                          std::to_string(kinds.size()));
  PipelinePlan plan;
  plan.arm = arm;
  plan.inject_other_channel = arm.inject_other_channel;
  for (auto k : kinds)
    plan.ops.push_back({k, cfg.params, derive_seed(cfg.seed, static_cast<std::uint64_t>(k))});
  plan.validate();
  return plan;
}

inline nlohmann::ordered_json to_json(const PipelinePlan& plan) {
  nlohmann::ordered_json j;
  j["arm"] = std::string(to_string(plan.arm.name));
  j["primary_channel"] = std::string(to_string(plan.arm.primary_channel));
  j["inject_other_channel"] = plan.inject_other_channel;
  auto ops = nlohmann::ordered_json::array();
  for (const auto& op : plan.ops) ops.push_back(std::string(to_string(op.kind)));
  j["ops"] = ops;
  return j;
}

/// Expands training records into samples: per record, the resized original,
/// one copy per op, then the untransformed other-channel image if requested.
inline std::vector<AugmentedSample> expand_training_set(const std::vector<CellRecord>& records,
                                                        const PipelinePlan& plan,
                                                        ImageSource& source, int working_size,
                                                        unsigned jobs = 1) {
  plan.validate();
  const Channel primary = plan.arm.primary_channel;
  for (const auto& r : records) {
    if (!r.has(primary))
      throw ValidationError("cell '" + r.cell_id + "' lacks its " +
                            std::string(to_string(primary)) + " image");
    if (plan.inject_other_channel && !r.has(other(primary)))
      throw ValidationError("cell '" + r.cell_id + "' lacks the " +
                            std::string(to_string(other(primary))) + " image needed for injection");
  }
  const std::size_t per = 1 + plan.ops.size() + (plan.inject_other_channel ? 1 : 0);
  std::vector<AugmentedSample> out(records.size() * per);
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& r = records[i];
    const std::uint64_t draw = fnv1a(r.cell_id);
    const Image base = resize_to_working(source.load(r, primary, Stage::TRAIN), working_size);
    std::size_t k = i * per;
    out[k++] = {r.cell_id, base, r.label, SampleOrigin::ORIGINAL};
    for (const auto& op : plan.ops) out[k++] = {r.cell_id, apply_op(base, op, draw), r.label, origin_of(op.kind)};
    if (plan.inject_other_channel)
      out[k++] = {r.cell_id,
                  resize_to_working(source.load(r, other(primary), Stage::TRAIN), working_size),
                  r.label, SampleOrigin::OTHER_CHANNEL};
  });
  return out;
}

/// Order-sensitive digest of a sample sequence.
inline std::uint64_t samples_hash(const std::vector<AugmentedSample>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : samples) {
    h = fnv1a(s.parent_cell_id, h);
    h = fnv1a(to_string(s.label), h);
    h = fnv1a(to_string(s.origin), h);
    h = image_hash(s.image, h);
  }
  return h;
}

/// Writes samples as PNGs: `<id>_<CH>.png`, `<id>_augN.png`, `<id>_<OTHER>INJ.png`.
inline void materialize(const std::vector<AugmentedSample>& samples, const PipelinePlan& plan,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string last;
  int aug_index = 0;
  for (const auto& s : samples) {
    if (s.parent_cell_id != last) {
      last = s.parent_cell_id;
      aug_index = 0;
    }
    std::string name = s.parent_cell_id;
    switch (s.origin) {
      case SampleOrigin::ORIGINAL: name += "_" + std::string(to_string(plan.arm.primary_channel)); break;
      case SampleOrigin::OTHER_CHANNEL:
        name += "_" + std::string(to_string(other(plan.arm.primary_channel))) + "INJ";
        break;
      default: name += "_aug" + std::to_string(++aug_index); break;
    }
    write_png(dir / (name + ".png"), s.image);
  }
}

}  // namespace ctcbench
