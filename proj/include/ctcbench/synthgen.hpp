#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "ctcbench/core/error.hpp"
#include "ctcbench/core/parallel.hpp"
#include "ctcbench/core/rng.hpp"
#include "ctcbench/data.hpp"
#include "ctcbench/image.hpp"

namespace ctcbench {

/// Parameters of the synthetic cell renderer.
struct SynthSpec {
  std::size_t n_spiked_ctc = 100;
  std::size_t n_patient_ctc = 10;
  std::size_t n_leuko = 80;
  int image_size = 148;
  double bf_signal_strength = 1.0;
  double dapi_informativeness = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t total() const noexcept { return n_spiked_ctc + n_patient_ctc + n_leuko; }

  void validate() const {
    if (image_size < 32) throw ValidationError("synth: image_size must be >= 32");
    if (bf_signal_strength < 0.0 || bf_signal_strength > 1.0)
      throw ValidationError("synth: bf_signal_strength must lie in [0,1]");
    if (dapi_informativeness < 0.0 || dapi_informativeness > 1.0)
      throw ValidationError("synth: dapi_informativeness must lie in [0,1]");
    if (!(noise_sigma >= 0.0)) throw ValidationError("synth: noise_sigma must be >= 0");
  }
};

/// Latent geometry of one rendered cell, in pixels.
struct CellGeometry {
  Label label = Label::CTC;
  double cx = 0, cy = 0;
  double radius = 0;
  double nucleus_radius = 0;
  double texture_cycles = 0;
  double texture_phase = 0;
};

struct RenderedCell {
  CellRecord record;
  CellGeometry geometry;
  Image bf;
  Image dapi;
};

namespace synth_detail {

// Geometry in units of the image size.
inline constexpr double kLeukoRadius = 0.22;
inline constexpr double kRadiusGap = 0.14;  // at full signal strength
inline constexpr double kRadiusSd = 0.025;
inline constexpr double kRadiusClamp = 2.5;  // z-scores beyond this are clipped
inline constexpr double kNucleusRatio = 0.55;
inline constexpr double kNucleusSd = 0.008;
inline constexpr double kCenterJitter = 0.04;
inline constexpr double kLeukoCycles = 1.5;
inline constexpr double kCycleGap = 1.5;

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0));
}

}  // namespace synth_detail

/// Cell identity for the global index i (spiked CTCs, then patient CTCs, then leukocytes).
inline CellRecord synth_record(const SynthSpec& spec, std::size_t i) {
  CellRecord r;
  char id[32];
  if (i < spec.n_spiked_ctc) {
    std::snprintf(id, sizeof id, "SPK%05zu", i);
    r.label = Label::CTC;
    r.provenance = Provenance::SPIKED;
    r.source_tag = "cell-line-" + std::string(1, static_cast<char>('A' + i % 3));
  } else if (i < spec.n_spiked_ctc + spec.n_patient_ctc) {
    const auto k = i - spec.n_spiked_ctc;
    std::snprintf(id, sizeof id, "PAT%05zu", k);
    r.label = Label::CTC;
    r.provenance = Provenance::PATIENT;
    r.source_tag = "patient-" + std::to_string(k % 13 + 1);
  } else {
    const auto k = i - spec.n_spiked_ctc - spec.n_patient_ctc;
    std::snprintf(id, sizeof id, "LEU%05zu", k);
    r.label = Label::LEUKO;
    r.provenance = (k % 3 == 2) ? Provenance::PATIENT : Provenance::HEALTHY;
    r.source_tag = r.provenance == Provenance::PATIENT ? "patient-" + std::to_string(k % 13 + 1)
                                                        : "healthy-donor";
  }
  r.cell_id = id;
  r.bf_path = "images/" + r.cell_id + "_BF.png";
  r.dapi_path = "images/" + r.cell_id + "_DAPI.png";
  return r;
}

/// Draws the latent geometry of cell i. The random draws do not depend on the
/// signal parameters, so varying them with a fixed seed moves cells
/// deterministically.
inline CellGeometry synth_geometry(const SynthSpec& spec, std::size_t i, Rng& rng) {
  using namespace synth_detail;
  const double s = spec.image_size;
  CellGeometry g;
  g.label = i < spec.n_spiked_ctc + spec.n_patient_ctc ? Label::CTC : Label::LEUKO;
  const double is_ctc = g.label == Label::CTC ? 1.0 : 0.0;

  const double z_radius = std::clamp(rng.normal(), -kRadiusClamp, kRadiusClamp);
  const double z_nucleus = std::clamp(rng.normal(), -kRadiusClamp, kRadiusClamp);
  const double jx = rng.uniform(-1.0, 1.0);
  const double jy = rng.uniform(-1.0, 1.0);
  g.texture_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const double gap = spec.bf_signal_strength * kRadiusGap;
  g.radius = s * (kLeukoRadius + is_ctc * gap + kRadiusSd * z_radius);
  g.cx = 0.5 * s + kCenterJitter * s * jx;
  g.cy = 0.5 * s + kCenterJitter * s * jy;
  g.texture_cycles = kLeukoCycles + is_ctc * spec.bf_signal_strength * kCycleGap;

  // Nucleus tracks the cell radius in proportion to the DAPI informativeness;
  // at zero it tracks the class-pooled mean radius instead.
  const double pooled = s * (kLeukoRadius + 0.5 * gap) + s * kRadiusSd * z_radius;
  const double tracked = spec.dapi_informativeness * g.radius +
                         (1.0 - spec.dapi_informativeness) * pooled;
  g.nucleus_radius = kNucleusRatio * tracked + s * kNucleusSd * z_nucleus;
  return g;
}

/// Renders cell i of the spec. Pure function of (spec, i).
inline RenderedCell render_cell(const SynthSpec& spec, std::size_t i) {
  using namespace synth_detail;
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
  RenderedCell out;
  out.record = synth_record(spec, i);
  out.geometry = synth_geometry(spec, i, rng);
  const auto& g = out.geometry;
  const int n = spec.image_size;
  out.bf = Image(n, n);
  out.dapi = Image(n, n);

  constexpr double kBackground = 0.75;
  constexpr double kCytoplasm = 0.55;
  constexpr double kTextureAmp = 0.08;
  constexpr double kMembrane = 0.35;
  constexpr double kMembraneWidth = 1.5;
  constexpr double kDapiBackground = 0.05;
  constexpr double kDapiNucleus = 0.85;

  // 2x2 supersampling for anti-aliased edges.
  constexpr double offsets[2] = {0.25, 0.75};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double bf = 0.0, dapi = 0.0;
      for (double oy : offsets) {
        for (double ox : offsets) {
          const double dx = x + ox - g.cx, dy = y + oy - g.cy;
          const double rho = std::sqrt(dx * dx + dy * dy);
          if (rho > g.radius) {
            bf += kBackground;
          } else if (rho > g.radius - kMembraneWidth) {
            bf += kMembrane;
          } else {
            bf += kCytoplasm + kTextureAmp * std::sin(2.0 * std::numbers::pi * g.texture_cycles *
                                                          rho / g.radius +
                                                      g.texture_phase);
          }
          dapi += rho <= g.nucleus_radius ? kDapiNucleus : kDapiBackground;
        }
      }
      out.bf.at(x, y) = quantize(bf / 4.0 + (spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0));
      out.dapi.at(x, y) =
          quantize(dapi / 4.0 + (spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0));
    }
  }
  return out;
}

/// Writes `<out_dir>/images/<id>_{BF,DAPI}.png` and `<out_dir>/manifest.csv`.
inline Manifest generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                 unsigned jobs = 1) {
  spec.validate();
  if (spec.total() == 0) throw ValidationError("synth: total record count is zero");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("synth: cannot create '" + (out_dir / "images").string() + "': " + ec.message());

  std::vector<CellRecord> records(spec.total());
  parallel_for(spec.total(), jobs, [&](std::size_t i) {
    auto cell = render_cell(spec, i);
    write_png(out_dir / cell.record.bf_path, cell.bf);
    write_png(out_dir / *cell.record.dapi_path, cell.dapi);
    records[i] = std::move(cell.record);
  });
  write_manifest(out_dir / "manifest.csv", records);

  Manifest m;
  m.records = std::move(records);
  m.image_root = out_dir;
  return m;
}

}  // namespace ctcbench
