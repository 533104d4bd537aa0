#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/arms.hpp"
#include "ctcbench/augment.hpp"
#include "ctcbench/config.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/core/parallel.hpp"
#include "ctcbench/data.hpp"
#include "ctcbench/image_source.hpp"
#include "ctcbench/metrics.hpp"
#include "ctcbench/model.hpp"
#include "ctcbench/split.hpp"
#include "ctcbench/trainer.hpp"

namespace ctcbench {

struct RunArmOptions {
  bool overwrite = false;
  /// Image access for every stage; defaults to reading the manifest's PNGs.
  ImageSource* source = nullptr;
};

/// Split, expanded training set and primary-channel evaluation images of one arm.
struct PreparedArm {
  PipelinePlan plan;
  DatasetSplit split;
  std::size_t train_records = 0;
  std::vector<AugmentedSample> train;
  std::vector<EvalSample> val;
  std::vector<EvalSample> test;
  Normalization norm;
};

struct ArmResult {
  ArmName arm = ArmName::BF_W_DAPI;
  std::filesystem::path dir;
  DatasetSplit split;
  std::size_t train_records = 0;
  std::size_t train_samples = 0;
  std::size_t train_ctc = 0;
  std::size_t train_leuko = 0;
  std::size_t val_samples = 0;
  std::size_t test_samples = 0;
  std::uint64_t samples_hash = 0;
  std::vector<RunRecord> runs;
  AggregateReport aggregate;
};

namespace exp_detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Refuses to reuse a non-empty directory unless `overwrite` is set, in
/// which case the old content is removed.
inline void claim_dir(const std::filesystem::path& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite)
      throw ValidationError("'" + dir.string() + "' already exists; pass --overwrite to replace it");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

template <typename F>
auto staged(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace exp_detail

/// Plain-language recipe of an arm, logged into every run manifest.
inline std::string describe_arm(const PipelinePlan& plan) {
  const auto primary = std::string(to_string(plan.arm.primary_channel));
  std::string s = "train on " + primary + " originals";
  if (!plan.ops.empty()) {
    s += " + " + std::to_string(plan.ops.size()) + " augmented cop" + (plan.ops.size() == 1 ? "y" : "ies") + " (";
    for (std::size_t i = 0; i < plan.ops.size(); ++i) s += (i ? ", " : "") + std::string(to_string(plan.ops[i].kind));
    s += ")";
  }
  if (plan.inject_other_channel)
    s += " + the untransformed " + std::string(to_string(other(plan.arm.primary_channel))) +
         " image as an extra sample with the cell's label";
  s += "; validate and test on " + primary + " only";
  return s;
}

/// Checks that every record carries the channels the arm reads.
inline void check_arm_compatible(const Manifest& m, const ExperimentArm& arm) {
  for (const auto& r : m.records) {
    if (!r.has(arm.primary_channel))
      throw ValidationError("arm " + std::string(to_string(arm.name)) + " needs " +
                            std::string(to_string(arm.primary_channel)) + " images; cell '" + r.cell_id +
                            "' has none");
    if (arm.inject_other_channel && !r.has(other(arm.primary_channel)))
      throw ValidationError("arm " + std::string(to_string(arm.name)) + " injects " +
                            std::string(to_string(other(arm.primary_channel))) + " images; cell '" +
                            r.cell_id + "' has none");
  }
}

inline PreparedArm prepare_arm(const ExperimentConfig& config, const Manifest& manifest, ImageSource& source,
                               ArmName arm_name) {
  using exp_detail::staged;
  PreparedArm p;
  const ExperimentArm arm = arm_definition(arm_name);
  staged("config", [&] {
    check_arm_compatible(manifest, arm);
    p.plan = make_plan(arm, config.augment);
  });
  p.split = staged("split", [&] { return make_split(manifest, config.split); });

  auto records_of = [&](const std::vector<std::string>& ids) {
    std::vector<CellRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(*manifest.find(id));
    return out;
  };
  const auto train_records = records_of(p.split.train);
  p.train_records = train_records.size();
  const int size = config.backbone.input_size;
  p.train = staged("augment",
                   [&] { return expand_training_set(train_records, p.plan, source, size, config.jobs); });
  p.norm = compute_normalization(p.train);

  auto load_eval = [&](const std::vector<std::string>& ids, Stage stage) {
    const auto recs = records_of(ids);
    std::vector<EvalSample> out(recs.size());
    parallel_for(recs.size(), config.jobs, [&](std::size_t i) {
      out[i] = {recs[i].cell_id, resize_to_working(source.load(recs[i], arm.primary_channel, stage), size),
                recs[i].label};
    });
    return out;
  };
  staged("load", [&] {
    p.val = load_eval(p.split.val, Stage::VAL);
    p.test = load_eval(p.split.test, Stage::TEST);
  });
  return p;
}

inline nlohmann::ordered_json run_manifest_json(const ExperimentConfig& config, const PreparedArm& p,
                                                const ArmResult& r, std::size_t parameter_count) {
  nlohmann::ordered_json j;
  j["experiment"] = config.experiment;
  j["arm"] = std::string(to_string(r.arm));
  auto plan = to_json(p.plan);
  plan["eval_channel"] = std::string(to_string(p.plan.arm.primary_channel));
  plan["multiplier"] = p.plan.arm.multiplier();
  plan["description"] = describe_arm(p.plan);
  j["arm_resolution"] = plan;
  j["backbone"] = to_json(config.backbone);
  j["parameter_count"] = parameter_count;
  j["init"] = config.init_archive ? "archive:" + config.init_archive->filename().string() : "random(seed)";
  j["split_seed"] = p.split.seed;
  j["counts"] = {{"train_records", r.train_records}, {"train_samples", r.train_samples},
                 {"train_ctc", r.train_ctc},         {"train_leuko", r.train_leuko},
                 {"val", r.val_samples},             {"test", r.test_samples}};
  j["samples_hash"] = exp_detail::hex64(r.samples_hash);
  j["normalization"] = {{"mean", p.norm.mean}, {"std", p.norm.std}};
  j["seeds"] = config.train.seeds;
  return j;
}

inline std::string f1_csv(ArmName arm, const std::vector<RunRecord>& runs) {
  std::string s;
  for (const auto& r : runs)
    s += std::string(to_string(arm)) + "," + std::to_string(r.seed) + "," + real_str(r.test.f1) + "\n";
  return s;
}

/// Runs config.arm into `arm_dir`: split, expansion, multi-seed training and
/// primary-channel test evaluation, persisting records and the aggregate.
inline ArmResult run_arm(const ExperimentConfig& config, const std::filesystem::path& arm_dir,
                         const RunArmOptions& options = {}) {
  using exp_detail::staged;
  staged("output", [&] { exp_detail::claim_dir(arm_dir, options.overwrite); });
  staged("config", [&] { config.validate(); });
  const Manifest manifest = staged("manifest", [&] {
    LoadOptions lo;
    lo.verify_images = config.verify_images;
    return load_manifest(config.manifest, lo);
  });

  DiskImageSource disk(manifest);
  ImageSource& source = options.source ? *options.source : disk;
  const PreparedArm p = prepare_arm(config, manifest, source, config.arm);

  ArmResult r;
  r.arm = config.arm;
  r.dir = arm_dir;
  r.split = p.split;
  r.train_records = p.train_records;
  r.train_samples = p.train.size();
  for (const auto& s : p.train) (s.label == Label::CTC ? r.train_ctc : r.train_leuko)++;
  r.val_samples = p.val.size();
  r.test_samples = p.test.size();
  r.samples_hash = samples_hash(p.train);

  const TrainData data{p.train, p.val, p.test, p.norm};
  auto result = staged("train", [&] {
    return train_multi_seed(config.backbone, config.init_archive, data, config.train, config.jobs,
                            [&](std::uint64_t seed) { return arm_dir / std::to_string(seed); });
  });
  r.runs = std::move(result.runs);
  r.aggregate = std::move(result.aggregate);

  staged("persist", [&] {
    ExperimentConfig resolved = config;
    resolved.arms.clear();
    resolved.backbones.clear();
    const Model probe(config.backbone);
    exp_detail::write_text(arm_dir / "resolved_config.json", to_json(resolved).dump(2) + "\n");
    exp_detail::write_text(arm_dir / "split.json", serialize(p.split));
    exp_detail::write_text(arm_dir / "run_manifest.json",
                           run_manifest_json(config, p, r, probe.parameter_count()).dump(2) + "\n");
    exp_detail::write_text(arm_dir / "aggregate.json", to_json(r.aggregate).dump(2) + "\n");
    exp_detail::write_text(arm_dir / "f1.csv", "arm,seed,f1\n" + f1_csv(r.arm, r.runs));
  });
  return r;
}

inline ArmResult run_arm(const ExperimentConfig& config, const RunArmOptions& options = {}) {
  return run_arm(config, config.experiment_dir() / std::string(to_string(config.arm)), options);
}

// ---------------------------------------------------------------------------
// Reports

/// Per-row data of a summary table plus the per-seed F1 values behind it.
struct ReportEntry {
  std::string key;  // arm or backbone name
  SummaryRow row;
  std::vector<RunRecord> runs;
  std::vector<std::string> failures;
};

inline ReportEntry make_entry(std::string key, std::string display, const std::vector<RunRecord>& runs,
                              const AggregateReport& agg) {
  ReportEntry e;
  e.key = std::move(key);
  e.row = {std::move(display), agg.accuracy, agg.precision, agg.recall, agg.f1, agg.complete && !runs.empty()};
  e.runs = runs;
  e.failures = agg.failures;
  return e;
}

inline std::string render_failures(const std::vector<ReportEntry>& entries) {
  std::string s;
  for (const auto& e : entries)
    for (const auto& f : e.failures) s += "- " + e.row.name + ": " + f + "\n";
  return s.empty() ? s : "\nFailures:\n\n" + s;
}

inline void write_ablation_reports(const std::filesystem::path& dir, const std::vector<ReportEntry>& entries) {
  std::vector<SummaryRow> rows;
  std::string vectors = "arm,seed,f1\n";
  for (const auto& e : entries) {
    rows.push_back(e.row);
    vectors += f1_csv(parse_arm(e.key), e.runs);
  }
  exp_detail::write_text(dir / "ablation.csv", render_summary_csv(rows));
  exp_detail::write_text(dir / "ablation.md", render_summary_markdown(rows, false) + render_failures(entries));
  exp_detail::write_text(dir / "f1_vectors.csv", vectors);
}

inline void write_comparison_reports(const std::filesystem::path& dir, const std::vector<ReportEntry>& entries) {
  std::vector<SummaryRow> rows;
  for (const auto& e : entries) rows.push_back(e.row);
  exp_detail::write_text(dir / "comparison.csv", render_summary_csv(rows));
  exp_detail::write_text(dir / "comparison.md", render_summary_markdown(rows, true) + render_failures(entries));
}

/// Reads back an arm directory written by run_arm.
inline std::optional<ReportEntry> load_arm_entry(const std::filesystem::path& arm_dir, std::string display) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(arm_dir)) return std::nullopt;
  std::map<std::uint64_t, RunRecord> by_seed;
  for (const auto& d : fs::directory_iterator(arm_dir))
    if (d.is_directory() && fs::exists(d.path() / "record.json")) {
      auto r = run_record_from_json(nlohmann::json::parse(exp_detail::read_text(d.path() / "record.json")));
      by_seed.emplace(r.seed, std::move(r));
    }
  const bool has_aggregate = fs::exists(arm_dir / "aggregate.json");
  if (by_seed.empty() && !has_aggregate) return std::nullopt;

  std::vector<RunRecord> runs;
  bool complete = true;
  std::vector<std::string> failures;
  if (has_aggregate) {
    // Keep the configured seed order.
    const auto j = nlohmann::json::parse(exp_detail::read_text(arm_dir / "aggregate.json"));
    complete = j.value("complete", true);
    failures = j.value("failures", std::vector<std::string>{});
    for (auto seed : j.value("seeds", std::vector<std::uint64_t>{}))
      if (auto it = by_seed.find(seed); it != by_seed.end()) runs.push_back(std::move(it->second)), by_seed.erase(it);
  }
  for (auto& [seed, r] : by_seed) runs.push_back(std::move(r));
  AggregateReport agg = aggregate(runs);
  agg.complete = complete;
  agg.failures = std::move(failures);
  return make_entry(arm_dir.filename().string(), std::move(display), runs, agg);
}

struct ReportSummary {
  std::size_t ablation_rows = 0;
  std::size_t comparison_rows = 0;
};

/// Rebuilds ablation.* / f1_vectors.csv and comparison.* from the records
/// persisted under an experiment directory.
inline ReportSummary regenerate_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("no results directory '" + dir.string() + "'");
  ReportSummary s;
  std::vector<ReportEntry> arms;
  for (auto a : kAllArms)
    if (auto e = load_arm_entry(dir / std::string(to_string(a)), std::string(display_name(a))))
      arms.push_back(std::move(*e));
  if (!arms.empty()) write_ablation_reports(dir, arms);
  s.ablation_rows = arms.size();

  std::vector<ReportEntry> backbones;
  for (const auto& reg : backbone_registry()) {
    const auto bdir = dir / reg.name;
    if (!std::filesystem::is_directory(bdir)) continue;
    for (auto a : kAllArms)
      if (auto e = load_arm_entry(bdir / std::string(to_string(a)), reg.name)) {
        e->key = reg.name;
        backbones.push_back(std::move(*e));
        break;
      }
  }
  if (!backbones.empty()) write_comparison_reports(dir, backbones);
  s.comparison_rows = backbones.size();
  return s;
}

// ---------------------------------------------------------------------------
// Ablation and backbone comparison

struct ArmOutcome {
  ArmName arm;
  std::optional<ArmResult> result;
  std::string error;
};

struct AblationReport {
  std::vector<ArmOutcome> arms;
  std::vector<ReportEntry> entries;
};

inline void write_failed_arm(const std::filesystem::path& arm_dir, const std::string& error) {
  AggregateReport agg;
  agg.complete = false;
  agg.failures = {error};
  exp_detail::write_text(arm_dir / "aggregate.json", to_json(agg).dump(2) + "\n");
}

/// Runs each arm in turn (seeds in parallel within an arm). A failing arm is
/// recorded and the remaining arms still run.
inline AblationReport run_ablation(const ExperimentConfig& base, const std::vector<ArmName>& arms,
                                   const RunArmOptions& options = {}) {
  if (arms.empty()) throw ValidationError("run_ablation: no arms given");
  base.validate();
  const auto dir = base.experiment_dir();
  for (const char* f : {"ablation.csv", "ablation.md", "f1_vectors.csv"})
    if (std::filesystem::exists(dir / f) && !options.overwrite)
      throw ValidationError("'" + (dir / f).string() + "' already exists; pass --overwrite to replace it");

  AblationReport rep;
  for (auto a : arms) {
    ExperimentConfig cfg = base;
    cfg.arm = a;
    const auto arm_dir = dir / std::string(to_string(a));
    ArmOutcome o{a, std::nullopt, ""};
    try {
      o.result = run_arm(cfg, arm_dir, options);
      rep.entries.push_back(make_entry(std::string(to_string(a)), std::string(display_name(a)),
                                       o.result->runs, o.result->aggregate));
    } catch (const std::exception& e) {
      o.error = e.what();
      const auto* se = dynamic_cast<const StageError*>(&e);
      if (!se || se->stage() != "output") write_failed_arm(arm_dir, o.error);
      AggregateReport agg;
      agg.complete = false;
      agg.failures = {o.error};
      rep.entries.push_back(make_entry(std::string(to_string(a)), std::string(display_name(a)), {}, agg));
    }
    rep.arms.push_back(std::move(o));
  }
  write_ablation_reports(dir, rep.entries);
  return rep;
}

struct ComparisonReport {
  std::vector<ReportEntry> entries;
};

/// Trains config.arm once per backbone preset into <experiment>/<backbone>/<arm>.
inline ComparisonReport run_backbone_comparison(const ExperimentConfig& base, const std::vector<std::string>& backbones,
                                                const RunArmOptions& options = {}) {
  if (backbones.empty()) throw ValidationError("run_backbone_comparison: no backbones given");
  std::vector<BackboneSpec> specs;
  for (const auto& b : backbones) specs.push_back(backbone_preset(b));
  base.validate();
  const auto dir = base.experiment_dir();
  for (const char* f : {"comparison.csv", "comparison.md"})
    if (std::filesystem::exists(dir / f) && !options.overwrite)
      throw ValidationError("'" + (dir / f).string() + "' already exists; pass --overwrite to replace it");

  ComparisonReport rep;
  for (std::size_t i = 0; i < backbones.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.backbone = specs[i];
    const auto arm_dir = dir / backbones[i] / std::string(to_string(cfg.arm));
    try {
      const auto r = run_arm(cfg, arm_dir, options);
      rep.entries.push_back(make_entry(backbones[i], backbones[i], r.runs, r.aggregate));
    } catch (const std::exception& e) {
      AggregateReport agg;
      agg.complete = false;
      agg.failures = {e.what()};
      rep.entries.push_back(make_entry(backbones[i], backbones[i], {}, agg));
    }
  }
  write_comparison_reports(dir, rep.entries);
  return rep;
}

}  // namespace ctcbench
