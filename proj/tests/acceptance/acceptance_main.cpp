// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "ctcbench/cli.hpp"
#include "ctcbench/experiments.hpp"
#include "ctcbench/stats/compare.hpp"
#include "ctcbench/synthgen.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ctcbench;
using namespace ctcbench::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Clock {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::current_path() / "acceptance_work";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli_quiet(std::vector<std::string> args, std::string& out, std::string& err) {
  args.insert(args.begin(), "ctcbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  out = o.str();
  err = e.str();
  return code;
}

// ---------------------------------------------------------------------------
// 1. Split fidelity

std::string split_invariant_violation(const Manifest& m, const DatasetSplit& s) {
  std::set<std::string> train(s.train.begin(), s.train.end()), val(s.val.begin(), s.val.end()),
      test(s.test.begin(), s.test.end());
  if (train.size() + val.size() + test.size() != s.train.size() + s.val.size() + s.test.size())
    return "duplicate id";
  for (const auto& id : val)
    if (train.count(id) || test.count(id)) return "val overlaps: " + id;
  for (const auto& id : test)
    if (train.count(id)) return "test overlaps train: " + id;
  for (const auto& r : m.records) {
    const bool fit = train.count(r.cell_id) || val.count(r.cell_id);
    if (r.label == Label::CTC && r.provenance == Provenance::PATIENT && fit) return "patient CTC in train/val";
    if (r.provenance == Provenance::SPIKED && test.count(r.cell_id)) return "spiked CTC in test";
  }
  if (train.size() + val.size() + test.size() != m.records.size()) return "records lost";
  return "";
}

std::string c1_split_json;

Outcome criterion_1(const fs::path& dir) {
  Clock clock;
  Outcome o;
  fs::create_directories(dir);
  write_manifest(dir / "manifest.csv", group_manifest(529, 52, 388).records);
  std::string out, err;
  const int code = run_cli_quiet({"split", "--manifest", (dir / "manifest.csv").string(), "--preset", "paper",
                                  "--arm", "BF_W_DAPI", "--out", (dir / "split.json").string()},
                                 out, err);
  if (code != 0) return {false, "split command failed: " + err};
  for (const char* row : {"| Train           |   479 |   303 |", "| Validation      |    50 |    29 |",
                          "| Test            |    52 |    56 |"})
    if (out.find(row) == std::string::npos) {
      o.pass = false;
      o.detail += std::string("missing row '") + row + "'; ";
    }
  c1_split_json = slurp(dir / "split.json");

  Rng rng(20240);
  int violations = 0;
  std::string first;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t spiked = 1 + rng.below(80), patient = 1 + rng.below(20), healthy = 2 + rng.below(80),
                      patient_leuko = rng.below(10);
    const auto m = group_manifest(spiked, patient, healthy, patient_leuko);
    SplitPolicy p;
    p.seed = rng.next_u64();
    if (rng.bernoulli(0.5)) {
      p.val_fraction_ctc = rng.uniform(0.05, 0.5);
      p.val_fraction_leuko = rng.uniform(0.05, 0.5);
      p.leuko_test_fraction = rng.uniform(0.05, 0.5);
    } else {
      p.mode = SplitMode::EXACT_COUNTS;
      const std::size_t leuko = healthy + patient_leuko;
      p.val_count_ctc = rng.below(spiked);
      p.test_count_leuko = rng.below(leuko / 2 + 1);
      p.val_count_leuko = rng.below(leuko - p.test_count_leuko);
    }
    const auto why = split_invariant_violation(m, make_split(m, p));
    if (!why.empty() && violations++ == 0) first = why;
  }
  if (violations) {
    o.pass = false;
    o.detail += std::to_string(violations) + " invariant violations (" + first + "); ";
  }
  const double t = clock.seconds();
  if (t >= 5.0) o.pass = false;
  o.detail += "exact-count rows 479/303, 50/29, 52/56; 1000 random manifests; " + fmt(t, 2) + " s (< 5 s)";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Augmentation arithmetic

std::uint64_t c2_hash = 0;

Outcome criterion_2() {
  Clock clock;
  Outcome o;
  const auto m = group_manifest(479, 0, 303);
  MemorySource source(64);
  AugmentConfig cfg;
  cfg.seed = 5;
  std::string bad;
  for (ArmName arm : kAllArms) {
    const auto def = arm_definition(arm);
    const auto samples = expand_training_set(m.records, make_plan(def, cfg), source, 64);
    std::size_t ctc = 0, leuko = 0;
    for (const auto& s : samples) (s.label == Label::CTC ? ctc : leuko)++;
    const std::size_t k = def.multiplier();
    if (samples.size() != 782 * k || ctc != 479 * k || leuko != 303 * k)
      bad += std::string(to_string(arm)) + "=" + std::to_string(samples.size()) + " ";
    if (arm == ArmName::BF_W_DAPI) {
      c2_hash = samples_hash(samples);
      if (samples.size() != 3910 || ctc != 2395 || leuko != 1515) bad += "BF_W_DAPI totals ";
    }
  }
  const double t = clock.seconds();
  o.pass = bad.empty() && t < 30.0;
  o.detail = (bad.empty() ? "" : "mismatch: " + bad + "; ") +
             "BF_W_DAPI 782 -> 3910 (2395/1515); 7 arms match multipliers; " + fmt(t, 2) + " s (< 30 s)";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Metrics oracle

Outcome criterion_3() {
  Rng rng(33);
  double worst = 0.0;
  int checked = 0;
  while (checked < 10000) {
    const ConfusionMatrix cm{rng.below(60), rng.below(60), rng.below(60), rng.below(60)};
    if (cm.total() == 0) continue;
    ++checked;
    const auto ref = brute_force_metrics(cm.tp, cm.fp, cm.tn, cm.fn);
    const auto macro = compute_metrics(cm, Averaging::MACRO);
    const auto pos = compute_metrics(cm, Averaging::POSITIVE_CLASS);
    const double diffs[] = {
        macro.accuracy - ref.accuracy,
        macro.precision - (ref.ctc.precision + ref.leuko.precision) / 2,
        macro.recall - (ref.ctc.recall + ref.leuko.recall) / 2,
        macro.f1 - (ref.ctc.f1 + ref.leuko.f1) / 2,
        macro.ctc.f1 - ref.ctc.f1,
        macro.leuko.f1 - ref.leuko.f1,
        pos.precision - ref.ctc.precision,
        pos.recall - ref.ctc.recall,
        pos.f1 - ref.ctc.f1,
    };
    for (double d : diffs) worst = std::max(worst, std::abs(d));
  }
  return {worst <= 1e-12, "10000 random matrices, max |diff| " + sci(worst) + " (<= 1e-12)"};
}

// ---------------------------------------------------------------------------
// 4. Mann-Whitney exactness

Outcome criterion_4() {
  Clock clock;
  double worst = 0.0;
  std::size_t cases = 0, symmetry_failures = 0;
  auto check = [&](const std::vector<double>& a, const std::vector<double>& b) {
    using stats::Alternative;
    const stats::Sample sa{a, "a"}, sb{b, "b"};
    for (auto [alt, tail] : {std::pair{Alternative::TWO_SIDED, Tail::TWO_SIDED},
                             std::pair{Alternative::GREATER, Tail::GREATER},
                             std::pair{Alternative::LESS, Tail::LESS}}) {
      const auto r = stats::mann_whitney_u(sa, sb, alt);
      worst = std::max(worst, std::abs(r.p_value - enumerate_mw_p(a, b, tail)));
      if (r.statistic != pairwise_u(a, b)) worst = std::max(worst, 1.0);
    }
    const double u_ab = stats::mann_whitney_u(sa, sb).statistic;
    const double u_ba = stats::mann_whitney_u(sb, sa).statistic;
    if (u_ab + u_ba != static_cast<double>(a.size() * b.size())) ++symmetry_failures;
    ++cases;
  };

  // Every rank arrangement of tie-free samples with group sizes up to 6.
  for (std::size_t n1 = 1; n1 <= 6; ++n1)
    for (std::size_t n2 = 1; n2 <= 6; ++n2) {
      std::vector<int> pick(n1 + n2, 0);
      std::fill(pick.end() - static_cast<std::ptrdiff_t>(n1), pick.end(), 1);
      do {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < pick.size(); ++i) (pick[i] ? a : b).push_back(0.5 * i + 1.0);
        check(a, b);
      } while (std::next_permutation(pick.begin(), pick.end()));
    }
  const std::size_t tie_free = cases;

  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + rng.below(6)), b(1 + rng.below(6));
    const auto levels = 1 + rng.below(4);
    for (auto& v : a) v = 0.1 * double(rng.below(levels));
    for (auto& v : b) v = 0.1 * double(rng.below(levels));
    check(a, b);
  }
  const double t = clock.seconds();
  const bool pass = worst <= 1e-12 && symmetry_failures == 0 && t < 60.0;
  return {pass, std::to_string(tie_free) + " tie-free + 200 tied cases, max |p diff| " + sci(worst) +
                    ", U-symmetry failures " + std::to_string(symmetry_failures) + "; " + fmt(t, 2) + " s (< 60 s)"};
}

// ---------------------------------------------------------------------------
// 5. Shapiro-Wilk and Levene

std::vector<double> quantile_sample(const std::string& kind, int n) {
  boost::math::normal normal;
  std::vector<double> x;
  for (int i = 1; i <= n; ++i) {
    const double p = (i - 0.5) / n;
    if (kind == "normal") x.push_back(quantile(normal, p));
    else if (kind == "uniform") x.push_back(p);
    else x.push_back(-std::log1p(-p));
  }
  return x;
}

Outcome criterion_5() {
  // Reference values from tests/acceptance/golden_stats.py.
  struct SwGolden {
    const char* kind;
    int n;
    double w, p;
  };
  const SwGolden sw[] = {
      {"normal", 5, 0.9983953487114067, 0.9991801829661028},
      {"normal", 10, 0.9979773027372532, 0.9999970154037127},
      {"normal", 20, 0.9984548979891772, 0.9999999999869974},
      {"uniform", 5, 0.986762155211559, 0.9671739349728582},
      {"uniform", 10, 0.9701646110856056, 0.8923673061902978},
      {"uniform", 20, 0.9603751832429884, 0.5513717457916771},
      {"exponential", 5, 0.916637104210767, 0.508481954694536},
      {"exponential", 10, 0.8797573506844889, 0.12965887451297553},
      {"exponential", 20, 0.856357456706601, 0.00682480924712512},
  };
  struct LeveneGolden {
    const char *a, *b;
    int n;
    stats::Center center;
    double f, p;
  };
  using stats::Center;
  const LeveneGolden lev[] = {
      {"normal", "uniform", 5, Center::MEAN, 0.1555598139504209, 0.7035835597573266},
      {"normal", "uniform", 5, Center::MEDIAN, 0.1555598139504209, 0.7035835597573266},
      {"normal", "uniform", 10, Center::MEAN, 0.4870101855189744, 0.4941810796393218},
      {"normal", "uniform", 10, Center::MEDIAN, 0.4870101855189744, 0.4941810796393218},
      {"normal", "uniform", 20, Center::MEAN, 1.0984570425607298, 0.3012255986323411},
      {"normal", "uniform", 20, Center::MEDIAN, 1.0984570425607298, 0.3012255986323411},
      {"uniform", "exponential", 5, Center::MEAN, 7.104207170955066, 0.028566506609292764},
      {"uniform", "exponential", 5, Center::MEDIAN, 3.56939602869845, 0.09553105660990437},
      {"uniform", "exponential", 10, Center::MEAN, 11.351320924256227, 0.0034169087646005567},
      {"uniform", "exponential", 10, Center::MEDIAN, 7.123404819025614, 0.015648157273793126},
      {"uniform", "exponential", 20, Center::MEAN, 20.405532159549196, 5.921701946521474e-05},
      {"uniform", "exponential", 20, Center::MEDIAN, 13.03208604495803, 0.0008810718355281515},
      {"normal", "exponential", 5, Center::MEAN, 2.5441792606845453, 0.14936773476816845},
      {"normal", "exponential", 5, Center::MEDIAN, 1.2391828753723195, 0.2979553738631519},
      {"normal", "exponential", 10, Center::MEAN, 4.132790692302368, 0.057078651227180977},
      {"normal", "exponential", 10, Center::MEDIAN, 2.524451631836739, 0.12950378357303038},
      {"normal", "exponential", 20, Center::MEAN, 7.58253771429141, 0.008990669068466994},
      {"normal", "exponential", 20, Center::MEDIAN, 4.67212330689511, 0.03702122688906207},
  };

  double sw_worst = 0, lev_worst = 0, invariance_worst = 0;
  for (const auto& g : sw) {
    const auto r = stats::shapiro_wilk({quantile_sample(g.kind, g.n), g.kind});
    sw_worst = std::max(sw_worst, std::abs(r.p_value - g.p));
  }
  for (const auto& g : lev) {
    auto y = quantile_sample(g.b, g.n);
    for (auto& v : y) v = 2.5 * v + 1.0;
    const auto r = stats::levene_test({quantile_sample(g.a, g.n), g.a}, {y, g.b}, g.center);
    lev_worst = std::max(lev_worst, std::abs(r.p_value - g.p));
  }
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(3 + rng.below(40));
    for (auto& v : x) v = rng.bernoulli(0.5) ? rng.normal() : -std::log(1.0 - rng.uniform());
    const double scale = rng.uniform(1e-3, 1e3), shift = rng.uniform(-1e3, 1e3);
    std::vector<double> y;
    for (double v : x) y.push_back(scale * v + shift);
    invariance_worst = std::max(invariance_worst, std::abs(stats::shapiro_wilk({x, "x"}).statistic -
                                                           stats::shapiro_wilk({y, "y"}).statistic));
  }
  const bool pass = sw_worst <= 1e-3 && lev_worst <= 1e-3 && invariance_worst <= 1e-10;
  return {pass, "max |p diff| Shapiro-Wilk " + sci(sw_worst) + ", Levene " + sci(lev_worst) +
                    " (<= 1e-3); W location-scale drift " + sci(invariance_worst) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------------------
// 6. Gradient check

Outcome criterion_6() {
  Clock clock;
  const auto r = gradient_check(micro_spec(), 6);
  const double t = clock.seconds();
  return {r.max_rel_error < 1e-4 && t < 120.0,
          std::to_string(r.checked) + " parameters in double, max relative error " + sci(r.max_rel_error) +
              " (< 1e-4) at " + r.worst + "; " + fmt(t, 2) + " s (< 120 s)"};
}

// ---------------------------------------------------------------------------
// 7-9. End-to-end synthetic runs

ExperimentConfig e2e_config(const fs::path& manifest, const fs::path& out, const std::string& name) {
  ExperimentConfig c;
  c.experiment = name;
  c.output_dir = out;
  c.manifest = manifest;
  c.split.seed = 11;
  c.split.val_fraction_ctc = 0.2;
  c.split.val_fraction_leuko = 0.2;
  c.augment.seed = 11;
  c.backbone = backbone_preset("mini");
  c.train = TrainConfig::desk();
  c.train.seeds = {0, 1, 2, 3, 4};
  return c;
}

const fs::path& synthetic_manifest() {
  static const fs::path path = [] {
    SynthSpec spec;
    spec.n_spiked_ctc = 100;
    spec.n_patient_ctc = 20;
    spec.n_leuko = 100;
    spec.image_size = 64;
    spec.bf_signal_strength = 0.8;
    spec.dapi_informativeness = 0.8;
    spec.noise_sigma = 0.1;
    spec.seed = 2024;
    generate_dataset(spec, work_dir() / "synthetic");
    return work_dir() / "synthetic" / "manifest.csv";
  }();
  return path;
}

struct E2eRun {
  ArmResult result;
  std::vector<LoggingImageSource::Access> log;
};

E2eRun run_e2e(const std::string& name, ArmName arm) {
  auto cfg = e2e_config(synthetic_manifest(), work_dir() / "results", name);
  cfg.arm = arm;
  LoadOptions lo;
  lo.verify_images = false;
  DiskImageSource disk(load_manifest(cfg.manifest, lo));
  LoggingImageSource logged(disk);
  E2eRun r{run_arm(cfg, {false, &logged}), {}};
  r.log = logged.log();
  return r;
}

std::optional<E2eRun> c7_run, c8_run;

Outcome criterion_7() {
  Clock clock;
  c7_run = run_e2e("c7", ArmName::BF_W_DAPI);
  const auto& r = c7_run->result;
  std::size_t eval_loads = 0, eval_non_bf = 0;
  for (const auto& a : c7_run->log)
    if (a.stage != Stage::TRAIN) {
      ++eval_loads;
      eval_non_bf += a.channel != Channel::BF;
    }
  const bool hygiene = eval_non_bf == 0 && eval_loads == r.val_samples + r.test_samples;
  const double t = clock.seconds();
  const bool pass = r.aggregate.complete && r.aggregate.f1.mean >= 0.90 && hygiene && t <= 600.0;
  std::string per_seed;
  for (double f : r.aggregate.f1_per_seed) per_seed += (per_seed.empty() ? "" : " ") + fmt(f);
  return {pass, "mean F1 " + fmt(r.aggregate.f1.mean) + " ± " + fmt(r.aggregate.f1.std) + " (>= 0.90) [" +
                    per_seed + "]; " + std::to_string(eval_loads) + " val/test loads, " +
                    std::to_string(eval_non_bf) + " non-BF; " + fmt(t, 0) + " s (<= 600 s)"};
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome criterion_8() {
  if (!c7_run) return {false, "criterion 7 did not produce a run"};
  c8_run = run_e2e("c8", ArmName::BF_WO_DAPI);
  const auto& with = c7_run->result.aggregate.f1_per_seed;
  const auto& without = c8_run->result.aggregate.f1_per_seed;
  const double mw = median_of(with), mwo = median_of(without);
  const auto trace = stats::compare_arms({with, "BF_W_DAPI"}, {without, "BF_WO_DAPI"});
  exp_detail::write_text(work_dir() / "decision_trace.json", stats::to_json(trace).dump(2) + "\n");
  const bool trace_ok = trace.step("levene") && trace.step("shapiro_a") && trace.step("shapiro_b") &&
                        trace.step("shapiro_pooled") && trace.step("final") && !trace.selected_test.empty() &&
                        trace.final_result.p_value >= 0.0 && trace.final_result.p_value <= 1.0;
  return {mw >= mwo && trace_ok, "median F1 BF_W_DAPI " + fmt(mw) + " vs BF_WO_DAPI " + fmt(mwo) + "; trace selected " +
                                     trace.selected_test + ", p = " + fmt(trace.final_result.p_value, 4)};
}

Outcome criterion_9() {
  std::string bad;
  // 1: split JSON
  const auto again_dir = work_dir() / "c1_repeat";
  const auto first = c1_split_json;
  criterion_1(again_dir);
  if (c1_split_json != first || first.empty()) bad += "split JSON differs; ";
  // 2: sample hash
  const auto h = c2_hash;
  criterion_2();
  if (c2_hash != h) bad += "sample hash differs; ";
  // 7: metric CSVs
  if (!c7_run) return {false, "criterion 7 did not produce a run"};
  const auto repeat = run_e2e("c7_repeat", ArmName::BF_W_DAPI);
  const auto& a = c7_run->result;
  const auto& b = repeat.result;
  if (a.samples_hash != b.samples_hash) bad += "training sample hash differs; ";
  if (slurp(a.dir / "split.json") != slurp(b.dir / "split.json")) bad += "e2e split JSON differs; ";
  for (auto seed : a.aggregate.seeds) {
    const auto s = std::to_string(seed);
    if (slurp(a.dir / s / "metrics.csv") != slurp(b.dir / s / "metrics.csv")) bad += "metrics.csv seed " + s + "; ";
  }
  if (slurp(a.dir / "f1.csv") != slurp(b.dir / "f1.csv")) bad += "f1.csv differs; ";
  return {bad.empty(), bad.empty() ? "split JSON, sample hashes and per-seed metric CSVs byte-identical on rerun"
                                   : bad};
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 split fidelity", [] { return criterion_1(work_dir() / "c1"); }},
      {"2 augmentation arithmetic", criterion_2},
      {"3 metrics oracle", criterion_3},
      {"4 Mann-Whitney exactness", criterion_4},
      {"5 Shapiro-Wilk and Levene", criterion_5},
      {"6 gradient check", criterion_6},
      {"7 end-to-end synthetic", criterion_7},
      {"8 ablation trend", criterion_8},
      {"9 determinism", criterion_9},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name.substr(0, name.find(' ')))) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
