#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ctcbench/synthgen.hpp"
#include "support.hpp"

namespace ctcbench {
namespace {

using testing::TempDir;

/// Best accuracy of any single threshold on `score` (either orientation).
double threshold_accuracy(std::vector<std::pair<double, Label>> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto n = v.size();
  std::size_t ctc_total = 0;
  for (const auto& p : v) ctc_total += p.second == Label::CTC;
  // predict CTC above the cut
  std::size_t best = std::max(ctc_total, n - ctc_total);
  std::size_t leuko_below = 0, ctc_below = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (v[i].second == Label::CTC ? ctc_below : leuko_below)++;
    if (i + 1 < n && v[i + 1].first == v[i].first) continue;
    const std::size_t above_ctc = ctc_total - ctc_below;
    best = std::max(best, leuko_below + above_ctc);
    best = std::max(best, ctc_below + (n - i - 1 - above_ctc));
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

/// Radius implied by the count of non-background BF pixels.
double pixel_radius(const Image& bf) {
  std::size_t inside = 0;
  for (auto p : bf.pixels) inside += p < 170;
  return std::sqrt(static_cast<double>(inside) / std::numbers::pi);
}

TEST(Synth, SeparableAtFullStrength) {
  SynthSpec spec;
  spec.image_size = 64;
  spec.seed = 3;
  std::vector<std::pair<double, Label>> geo, pix;
  for (std::size_t i = 0; i < spec.total(); ++i) {
    const auto c = render_cell(spec, i);
    EXPECT_EQ(c.record.label, c.geometry.label);
    geo.push_back({c.geometry.radius, c.record.label});
    pix.push_back({pixel_radius(c.bf), c.record.label});
  }
  EXPECT_EQ(spec.total(), 190u);
  EXPECT_EQ(threshold_accuracy(geo), 1.0);
  EXPECT_EQ(threshold_accuracy(pix), 1.0);
}

TEST(Synth, NoSignalMeansChanceLevelRadius) {
  SynthSpec spec;
  spec.n_spiked_ctc = 300;
  spec.n_patient_ctc = 0;
  spec.n_leuko = 300;
  spec.image_size = 64;
  spec.bf_signal_strength = 0.0;
  spec.dapi_informativeness = 0.0;
  std::vector<std::pair<double, Label>> geo, nuc;
  for (std::size_t i = 0; i < spec.total(); ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const auto g = synth_geometry(spec, i, rng);
    geo.push_back({g.radius, g.label});
    nuc.push_back({g.nucleus_radius, g.label});
    EXPECT_DOUBLE_EQ(g.texture_cycles, synth_detail::kLeukoCycles);
  }
  // best threshold on 600 exchangeable draws stays near the 0.5 majority rate
  EXPECT_LT(threshold_accuracy(geo), 0.58);
  EXPECT_LT(threshold_accuracy(nuc), 0.58);
}

TEST(Synth, SeparabilityMonotoneInStrength) {
  SynthSpec spec;
  spec.n_spiked_ctc = 300;
  spec.n_patient_ctc = 0;
  spec.n_leuko = 300;
  spec.image_size = 64;
  spec.seed = 17;
  double prev = 0.0;
  for (int k = 0; k <= 10; ++k) {
    spec.bf_signal_strength = k / 10.0;
    std::vector<std::pair<double, Label>> geo;
    for (std::size_t i = 0; i < spec.total(); ++i) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
      const auto g = synth_geometry(spec, i, rng);
      geo.push_back({g.radius, g.label});
    }
    const double acc = threshold_accuracy(geo);
    EXPECT_GE(acc, prev) << "strength " << spec.bf_signal_strength;
    prev = acc;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(Synth, DapiTracksInformativeness) {
  SynthSpec spec;
  spec.n_spiked_ctc = 200;
  spec.n_patient_ctc = 0;
  spec.n_leuko = 200;
  spec.image_size = 64;
  spec.bf_signal_strength = 1.0;
  auto acc = [&](double info) {
    spec.dapi_informativeness = info;
    std::vector<std::pair<double, Label>> nuc;
    for (std::size_t i = 0; i < spec.total(); ++i) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
      const auto g = synth_geometry(spec, i, rng);
      nuc.push_back({g.nucleus_radius, g.label});
    }
    return threshold_accuracy(nuc);
  };
  EXPECT_GT(acc(1.0), 0.95);
  EXPECT_LT(acc(0.0), 0.62);
}

TEST(Synth, WritesLayoutAndIsDeterministic) {
  TempDir a("synth_a"), b("synth_b");
  SynthSpec spec;
  spec.n_spiked_ctc = 6;
  spec.n_patient_ctc = 3;
  spec.n_leuko = 5;
  spec.image_size = 40;
  spec.noise_sigma = 0.05;
  spec.seed = 99;
  const auto m = generate_dataset(spec, a.path(), 1);
  generate_dataset(spec, b.path(), 3);
  ASSERT_EQ(m.records.size(), 14u);
  const auto loaded = load_manifest(a / "manifest.csv");
  EXPECT_EQ(loaded.records, m.records);
  for (const auto& r : m.records) {
    for (Channel c : {Channel::BF, Channel::DAPI}) {
      const auto rel = r.path(c);
      EXPECT_EQ(rel, "images/" + r.cell_id + "_" + std::string(to_string(c)) + ".png");
      EXPECT_EQ(testing::slurp(a.path() / rel), testing::slurp(b.path() / rel)) << rel;
      const auto img = read_png(a.path() / rel);
      EXPECT_EQ(img.width, 40);
      EXPECT_EQ(img.height, 40);
    }
  }
  EXPECT_EQ(testing::slurp(a / "manifest.csv"), testing::slurp(b / "manifest.csv"));
}

TEST(Synth, SpecValidation) {
  TempDir d("synth_bad");
  SynthSpec spec;
  spec.n_spiked_ctc = spec.n_patient_ctc = spec.n_leuko = 0;
  EXPECT_THROW(generate_dataset(spec, d.path()), ValidationError);
  spec = SynthSpec{};
  spec.image_size = 31;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec.image_size = 32;
  spec.bf_signal_strength = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec.bf_signal_strength = 0.5;
  spec.noise_sigma = -1;
  EXPECT_THROW(spec.validate(), ValidationError);
}

}  // namespace
}  // namespace ctcbench
