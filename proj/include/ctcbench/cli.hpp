#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctcbench/arms.hpp"
#include "ctcbench/config.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/data.hpp"
#include "ctcbench/experiments.hpp"
#include "ctcbench/split.hpp"
#include "ctcbench/stats/compare.hpp"
#include "ctcbench/synthgen.hpp"

namespace ctcbench {

namespace cli_detail {

namespace fs = std::filesystem;

inline void refuse_clobber(const fs::path& p, bool overwrite) {
  if (fs::exists(p) && !overwrite && !(fs::is_directory(p) && fs::is_empty(p)))
    throw ValidationError("'" + p.string() + "' already exists; pass --overwrite to replace it");
}

/// Per-seed F1 values from a CSV with an `f1` column. When the file has an
/// `arm` column, `arm` selects the rows (required if several arms are present).
inline stats::Sample read_f1_csv(const fs::path& path, const std::string& arm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  const auto header = detail::split_csv_line(detail::trim_cr(line));
  int f1_col = -1, arm_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "f1") f1_col = static_cast<int>(i);
    if (header[i] == "arm") arm_col = static_cast<int>(i);
  }
  if (f1_col < 0) throw ValidationError(path.string() + ": no 'f1' column");
  if (!arm.empty() && arm_col < 0) throw ValidationError(path.string() + ": no 'arm' column to filter on");

  stats::Sample s;
  s.group_label = arm.empty() ? path.stem().string() : arm;
  std::string seen_arm;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim_cr(line).empty()) continue;
    const auto f = detail::split_csv_line(detail::trim_cr(line));
    if (f.size() != header.size())
      throw ValidationError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                            " fields, expected " + std::to_string(header.size()));
    if (arm_col >= 0) {
      const auto& a = f[static_cast<std::size_t>(arm_col)];
      if (!arm.empty() && a != arm) continue;
      if (arm.empty() && !seen_arm.empty() && a != seen_arm)
        throw ValidationError(path.string() + ": several arms present; choose one with --arm-a-name/--arm-b-name");
      seen_arm = a;
      if (arm.empty()) s.group_label = a;
    }
    try {
      std::size_t used = 0;
      const auto& txt = f[static_cast<std::size_t>(f1_col)];
      const double v = std::stod(txt, &used);
      if (used != txt.size()) throw std::invalid_argument(txt);
      s.values.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ": row " + std::to_string(row) + ": f1 is not a number");
    }
  }
  if (s.values.empty()) throw ValidationError(path.string() + ": no f1 values" + (arm.empty() ? "" : " for arm " + arm));
  return s;
}

inline void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << text;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::vector<std::string>& items) {
  std::vector<std::uint64_t> out;
  for (const auto& s : items) {
    std::size_t used = 0;
    try {
      out.push_back(std::stoull(s, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || s[0] == '-') throw ValidationError("invalid seed '" + s + "'");
  }
  return out;
}

inline std::string summary_line(const std::string& name, const AggregateReport& a) {
  std::ostringstream os;
  os << name << ": accuracy " << format_mean_std(a.accuracy) << ", precision " << format_mean_std(a.precision)
     << ", recall " << format_mean_std(a.recall) << ", F1 " << format_mean_std(a.f1) << " over " << a.f1.n
     << " seed(s)" << (a.complete ? "" : " [INCOMPLETE]");
  return os.str();
}

}  // namespace cli_detail

/// Entry point of the `ctcbench` tool. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using namespace cli_detail;

  CLI::App app{"CTC vs leukocyte classification benchmark"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-channel cell dataset");
  SynthSpec sspec;
  std::string synth_out;
  unsigned jobs = 1;
  bool overwrite = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-spiked", sspec.n_spiked_ctc, "Spiked-in CTC records")->capture_default_str();
  synth->add_option("--n-patient", sspec.n_patient_ctc, "Patient CTC records")->capture_default_str();
  synth->add_option("--n-leuko", sspec.n_leuko, "Leukocyte records")->capture_default_str();
  synth->add_option("--image-size", sspec.image_size, "Image side in pixels")->capture_default_str();
  synth->add_option("--bf-signal", sspec.bf_signal_strength, "BF class separability in [0,1]")->capture_default_str();
  synth->add_option("--dapi-info", sspec.dapi_informativeness, "DAPI class separability in [0,1]")
      ->capture_default_str();
  synth->add_option("--noise", sspec.noise_sigma, "Gaussian pixel noise sigma")->capture_default_str();
  synth->add_option("--seed", sspec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  synth->add_flag("--overwrite", overwrite, "Replace existing output");

  // split
  auto* split = app.add_subcommand("split", "Partition a manifest and print the per-class count table");
  std::string split_manifest, split_out, split_preset = "fractions", split_arm = "BF_W_DAPI";
  SplitPolicy policy;
  std::optional<std::size_t> test_ctc;
  split->add_option("--manifest", split_manifest, "Manifest CSV")->required();
  split->add_option("--preset", split_preset, "paper (exact counts 50/29/56) or fractions")
      ->check(CLI::IsMember({"paper", "fractions"}))
      ->capture_default_str();
  split->add_option("--val-ctc", policy.val_count_ctc, "Validation CTC count (exact counts)");
  split->add_option("--val-leuko", policy.val_count_leuko, "Validation leukocyte count (exact counts)");
  split->add_option("--test-leuko", policy.test_count_leuko, "Test leukocyte count (exact counts)");
  split->add_option("--test-ctc", test_ctc, "Test patient CTC count (exact counts; default all)");
  split->add_option("--val-fraction-ctc", policy.val_fraction_ctc, "Validation fraction of the CTC pool")
      ->capture_default_str();
  split->add_option("--val-fraction-leuko", policy.val_fraction_leuko, "Validation fraction of the leukocyte pool")
      ->capture_default_str();
  split->add_option("--leuko-test-fraction", policy.leuko_test_fraction, "Leukocyte test fraction")
      ->capture_default_str();
  split->add_option("--seed", policy.seed, "Shuffle seed")->capture_default_str();
  split->add_option("--arm", split_arm, "Arm whose multiplier fills the Augmented Train row")->capture_default_str();
  split->add_option("--out", split_out, "Write the split as JSON");
  split->add_flag("--overwrite", overwrite, "Replace existing output");

  // train / ablate / compare share config handling
  std::string config_path, arm_name;
  std::vector<std::string> seeds, arm_names, backbone_names;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::string> experiment;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seeds", seeds, "Training seeds (overrides train.seeds)")->delimiter(',');
    sub->add_option("--seed", data_seed, "Split and augmentation seed (overrides the config)");
    sub->add_option("--experiment", experiment, "Experiment name (overrides the config)");
    sub->add_option("--jobs", jobs, "Parallel seed runs")->capture_default_str();
    sub->add_flag("--overwrite", overwrite, "Replace existing results");
  };
  auto* train = app.add_subcommand("train", "Train one arm over all seeds");
  add_common(train);
  train->add_option("--arm", arm_name, "Arm (default: config value)");
  auto* ablate = app.add_subcommand("ablate", "Train several arms and write the ablation table");
  add_common(ablate);
  ablate->add_option("--arms", arm_names, "Arms (default: config value, else all seven)")->delimiter(',');
  auto* compare = app.add_subcommand("compare", "Train one arm per backbone and write the comparison table");
  add_common(compare);
  compare->add_option("--backbones", backbone_names, "Backbone presets (default: config value)")->delimiter(',');
  compare->add_option("--arm", arm_name, "Arm (default: config value)");

  // stats
  auto* stats = app.add_subcommand("stats", "Compare per-seed F1 vectors of two arms");
  std::string csv_a, csv_b, name_a, name_b, center = "MEAN", trace_out = "decision_trace.json";
  double alpha = 0.05;
  stats->add_option("--arm-a", csv_a, "CSV with an f1 column")->required()->check(CLI::ExistingFile);
  stats->add_option("--arm-b", csv_b, "CSV with an f1 column")->required()->check(CLI::ExistingFile);
  stats->add_option("--arm-a-name", name_a, "Rows of --arm-a whose arm column matches");
  stats->add_option("--arm-b-name", name_b, "Rows of --arm-b whose arm column matches");
  stats->add_option("--alpha", alpha, "Significance level")->capture_default_str();
  stats->add_option("--center", center, "Levene center")
      ->check(CLI::IsMember({"MEAN", "MEDIAN"}))
      ->capture_default_str();
  stats->add_option("--out", trace_out, "Decision trace JSON")->capture_default_str();
  stats->add_flag("--overwrite", overwrite, "Replace existing output");

  // report
  auto* report = app.add_subcommand("report", "Regenerate tables from persisted run records");
  std::string results_dir;
  report->add_option("results", results_dir, "Experiment results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto load_config = [&] {
    ExperimentConfig c = load_experiment_config(config_path);
    if (!seeds.empty()) c.train.seeds = parse_seed_list(seeds);
    if (data_seed) c.split.seed = c.augment.seed = *data_seed;
    if (experiment) c.experiment = *experiment;
    if (!arm_name.empty()) c.arm = parse_arm(arm_name);
    c.jobs = jobs;
    c.validate();
    return c;
  };

  try {
    if (*synth) {
      refuse_clobber(synth_out, overwrite);
      if (overwrite && fs::exists(synth_out)) fs::remove_all(synth_out);
      const auto m = generate_dataset(sspec, synth_out, jobs);
      out << "wrote " << m.records.size() << " records to " << (fs::path(synth_out) / "manifest.csv").string()
          << "\n";
    } else if (*split) {
      if (split_preset == "paper") {
        const auto seed = policy.seed;
        policy = SplitPolicy::paper_preset(seed);
      } else {
        const bool any_count = split->count("--val-ctc") + split->count("--val-leuko") + split->count("--test-leuko") +
                               split->count("--test-ctc");
        if (any_count) policy.mode = SplitMode::EXACT_COUNTS;
      }
      if (test_ctc) policy.test_count_ctc = test_ctc;
      policy.validate();
      if (!split_out.empty()) refuse_clobber(split_out, overwrite);
      const auto manifest = load_manifest(split_manifest, LoadOptions{false, std::nullopt});
      const auto s = make_split(manifest, policy);
      const auto arm = arm_definition(parse_arm(split_arm));
      out << render_split_table(split_report(s, manifest, arm.multiplier()));
      if (!split_out.empty()) {
        write_file(split_out, serialize(s));
        out << "split written to " << split_out << "\n";
      }
    } else if (*train) {
      const auto c = load_config();
      const auto r = run_arm(c, {overwrite, nullptr});
      out << "arm " << to_string(r.arm) << ": " << r.train_records << " training records -> " << r.train_samples
          << " samples (" << r.train_ctc << " CTC / " << r.train_leuko << " LEUKO), " << r.val_samples
          << " validation, " << r.test_samples << " test\n";
      out << summary_line(std::string(display_name(r.arm)), r.aggregate) << "\n";
      for (const auto& f : r.aggregate.failures) err << "failed " << f << "\n";
      out << "results in " << r.dir.string() << "\n";
      return r.aggregate.complete ? 0 : 1;
    } else if (*ablate) {
      const auto c = load_config();
      std::vector<ArmName> arms;
      for (const auto& a : arm_names) arms.push_back(parse_arm(a));
      if (arms.empty()) arms = c.ablation_arms();
      const auto rep = run_ablation(c, arms, {overwrite, nullptr});
      out << exp_detail::read_text(c.experiment_dir() / "ablation.md");
      bool ok = true;
      for (const auto& e : rep.entries) ok = ok && e.row.complete;
      out << "results in " << c.experiment_dir().string() << "\n";
      return ok ? 0 : 1;
    } else if (*compare) {
      const auto c = load_config();
      auto names = backbone_names.empty() ? c.backbones : backbone_names;
      if (names.empty()) throw ValidationError("no backbones given (config 'backbones' or --backbones)");
      const auto rep = run_backbone_comparison(c, names, {overwrite, nullptr});
      out << exp_detail::read_text(c.experiment_dir() / "comparison.md");
      bool ok = true;
      for (const auto& e : rep.entries) ok = ok && e.row.complete;
      return ok ? 0 : 1;
    } else if (*stats) {
      refuse_clobber(trace_out, overwrite);
      const stats::Sample a = read_f1_csv(csv_a, name_a);
      stats::Sample b = read_f1_csv(csv_b, name_b);
      if (b.group_label == a.group_label) b.group_label += " (b)";
      const auto trace = stats::compare_arms(a, b, alpha, stats::parse_center(center));
      write_file(trace_out, to_json(trace).dump(2) + "\n");
      out << stats::render_trace(trace);
      out << "trace written to " << trace_out << "\n";
    } else if (*report) {
      const auto s = regenerate_reports(results_dir);
      if (s.ablation_rows + s.comparison_rows == 0)
        throw ValidationError("no run records found under '" + results_dir + "'");
      if (s.ablation_rows) out << exp_detail::read_text(fs::path(results_dir) / "ablation.md");
      if (s.comparison_rows) out << exp_detail::read_text(fs::path(results_dir) / "comparison.md");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ctcbench
