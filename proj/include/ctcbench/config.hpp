#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/arms.hpp"
#include "ctcbench/augment.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/model.hpp"
#include "ctcbench/split.hpp"
#include "ctcbench/stats/tests.hpp"
#include "ctcbench/trainer.hpp"

namespace ctcbench {

/// Everything one experiment needs. Loaded from a JSON config file; see
/// configs/ for annotated examples.
struct ExperimentConfig {
  std::string experiment = "default";
  std::filesystem::path output_dir = "results";
  unsigned jobs = 1;

  std::filesystem::path manifest;
  bool verify_images = false;

  SplitPolicy split;
  ArmName arm = ArmName::BF_W_DAPI;
  std::vector<ArmName> arms;  // ablation; empty means all seven

  BackboneSpec backbone = backbone_preset("mini");
  std::optional<std::filesystem::path> init_archive;
  std::vector<std::string> backbones;  // backbone comparison

  AugmentConfig augment;
  TrainConfig train;

  double alpha = 0.05;
  stats::Center levene_center = stats::Center::MEAN;

  /// results/<experiment>
  std::filesystem::path experiment_dir() const { return output_dir / experiment; }

  std::vector<ArmName> ablation_arms() const {
    return arms.empty() ? std::vector<ArmName>(kAllArms.begin(), kAllArms.end()) : arms;
  }

  void validate() const {
    if (experiment.empty() || experiment.find_first_of("/\\") != std::string::npos)
      throw ValidationError("config: experiment must be a plain directory name");
    if (jobs < 1) throw ValidationError("config: jobs must be >= 1");
    split.validate();
    backbone.validate();
    augment.params.validate();
    train.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("config: stats.alpha must lie in (0,1)");
  }
};

namespace config_detail {

using json = nlohmann::json;

/// Reads one JSON object, tracking which keys were consumed so that leftovers
/// can be reported with their location.
class Reader {
public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config: " + location() + " must be an object");
  }

  std::string location() const { return where_.empty() ? "/" : where_; }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + where_ + "/" + key + " has the wrong type (got " +
                            j_.at(key).type_name() + ")");
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key) || j_.at(key).is_null()) {
      if (j_.contains(key)) seen_.insert(key);
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  template <typename E, typename Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const ValidationError& e) {
      throw ValidationError("config: " + where_ + "/" + key + ": " + e.what());
    }
  }

  std::optional<Reader> section(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return Reader(j_.at(key), where_ + "/" + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("config: unknown key '" + k + "' at " + location());
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& root) {
  using config_detail::Reader;
  ExperimentConfig c;
  Reader r(root, "");
  r.get("experiment", c.experiment);
  std::string out = c.output_dir.string();
  r.get("output_dir", out);
  c.output_dir = out;
  r.get("jobs", c.jobs);

  if (auto m = r.section("manifest")) {
    std::string path;
    m->get("path", path);
    c.manifest = path;
    m->get("verify_images", c.verify_images);
    m->finish();
  }

  if (auto s = r.section("split")) {
    if (s->has("preset")) {
      std::string preset;
      s->get("preset", preset);
      if (preset != "paper") throw ValidationError("config: /split/preset must be \"paper\"");
      c.split = SplitPolicy::paper_preset();
    }
    s->get_enum("mode", c.split.mode, parse_split_mode);
    s->get("val_count_ctc", c.split.val_count_ctc);
    s->get("val_count_leuko", c.split.val_count_leuko);
    s->get("test_count_leuko", c.split.test_count_leuko);
    s->get("test_count_ctc", c.split.test_count_ctc);
    s->get("val_fraction_ctc", c.split.val_fraction_ctc);
    s->get("val_fraction_leuko", c.split.val_fraction_leuko);
    s->get("leuko_test_fraction", c.split.leuko_test_fraction);
    s->get("seed", c.split.seed);
    s->finish();
  }

  r.get_enum("arm", c.arm, parse_arm);
  if (r.has("arms")) {
    std::vector<std::string> names;
    r.get("arms", names);
    c.arms.clear();
    for (const auto& n : names) {
      try {
        c.arms.push_back(parse_arm(n));
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("config: /arms: ") + e.what());
      }
    }
  }

  if (auto b = r.section("backbone")) {
    if (b->has("preset")) {
      std::string preset;
      b->get("preset", preset);
      try {
        c.backbone = backbone_preset(preset);
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("config: /backbone/preset: ") + e.what());
      }
    }
    b->get_enum("family", c.backbone.family, nn::parse_family);
    b->get("stage_depths", c.backbone.stage_depths);
    b->get("base_width", c.backbone.base_width);
    b->get("input_size", c.backbone.input_size);
    b->get("num_classes", c.backbone.num_classes);
    std::optional<std::string> archive;
    b->get("archive", archive);
    if (archive) c.init_archive = *archive;
    b->finish();
  }
  r.get("backbones", c.backbones);

  if (auto a = r.section("augment")) {
    a->get("seed", c.augment.seed);
    auto kinds = [&](const std::string& key, std::vector<AugKind>& out) {
      if (!a->has(key)) return;
      std::vector<std::string> names;
      a->get(key, names);
      out.clear();
      for (const auto& n : names) {
        try {
          out.push_back(parse_aug_kind(n));
        } catch (const ValidationError& e) {
          throw ValidationError("config: /augment/" + key + ": " + e.what());
        }
      }
    };
    kinds("aug1_ops", c.augment.aug1_ops);
    kinds("aug2_ops", c.augment.aug2_ops);
    if (auto p = a->section("params")) {
      auto& q = c.augment.params;
      p->get("rotation_min_deg", q.rotation_min_deg);
      p->get("rotation_max_deg", q.rotation_max_deg);
      p->get("flip_h_prob", q.flip_h_prob);
      p->get("flip_v_prob", q.flip_v_prob);
      p->get("brightness_min", q.brightness_min);
      p->get("brightness_max", q.brightness_max);
      p->get("gamma_min", q.gamma_min);
      p->get("gamma_max", q.gamma_max);
      p->get("contrast_min", q.contrast_min);
      p->get("contrast_max", q.contrast_max);
      p->finish();
    }
    a->finish();
  }

  if (auto t = r.section("train")) {
    if (t->has("preset")) {
      TrainPreset preset = TrainPreset::DESK;
      t->get_enum("preset", preset, parse_train_preset);
      c.train = preset == TrainPreset::PAPER ? TrainConfig::paper() : TrainConfig::desk();
    }
    t->get("epochs", c.train.epochs);
    t->get("batch_size", c.train.batch_size);
    t->get("learning_rate", c.train.learning_rate);
    t->get("weight_decay", c.train.weight_decay);
    t->get("beta1", c.train.beta1);
    t->get("beta2", c.train.beta2);
    t->get("eps", c.train.eps);
    t->get("seeds", c.train.seeds);
    t->get_enum("averaging", c.train.averaging, parse_averaging);
    t->get("finetune_all", c.train.finetune_all);
    t->finish();
  }

  if (auto s = r.section("stats")) {
    s->get("alpha", c.alpha);
    s->get_enum("levene_center", c.levene_center, stats::parse_center);
    s->finish();
  }
  r.finish();
  return c;
}

/// Fully-resolved form; loading it back yields an equal config. `jobs` is
/// left out since it never changes results.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = c.experiment;
  j["output_dir"] = c.output_dir.string();
  j["manifest"] = {{"path", c.manifest.string()}, {"verify_images", c.verify_images}};
  auto split = to_json(c.split);
  if (c.split.mode == SplitMode::EXACT_COUNTS) {
    split["val_fraction_ctc"] = c.split.val_fraction_ctc;
    split["val_fraction_leuko"] = c.split.val_fraction_leuko;
    split["leuko_test_fraction"] = c.split.leuko_test_fraction;
  } else {
    split["val_count_ctc"] = c.split.val_count_ctc;
    split["val_count_leuko"] = c.split.val_count_leuko;
    split["test_count_leuko"] = c.split.test_count_leuko;
  }
  j["split"] = split;
  j["arm"] = std::string(to_string(c.arm));
  auto arms = nlohmann::ordered_json::array();
  for (auto a : c.arms) arms.push_back(std::string(to_string(a)));
  j["arms"] = arms;
  auto bb = to_json(c.backbone);
  bb.erase("preset_name");
  if (c.init_archive) bb["archive"] = c.init_archive->string();
  j["backbone"] = bb;
  j["backbones"] = c.backbones;
  nlohmann::ordered_json aug;
  aug["seed"] = c.augment.seed;
  auto kinds = [](const std::vector<AugKind>& ks) {
    auto a = nlohmann::ordered_json::array();
    for (auto k : ks) a.push_back(std::string(to_string(k)));
    return a;
  };
  aug["aug1_ops"] = kinds(c.augment.aug1_ops);
  aug["aug2_ops"] = kinds(c.augment.aug2_ops);
  const auto& q = c.augment.params;
  aug["params"] = {{"rotation_min_deg", q.rotation_min_deg}, {"rotation_max_deg", q.rotation_max_deg},
                   {"flip_h_prob", q.flip_h_prob},           {"flip_v_prob", q.flip_v_prob},
                   {"brightness_min", q.brightness_min},     {"brightness_max", q.brightness_max},
                   {"gamma_min", q.gamma_min},               {"gamma_max", q.gamma_max},
                   {"contrast_min", q.contrast_min},         {"contrast_max", q.contrast_max}};
  j["augment"] = aug;
  auto train = to_json(c.train);
  train.erase("optimizer");
  train.erase("selection_metric");
  j["train"] = train;
  j["stats"] = {{"alpha", c.alpha}, {"levene_center", std::string(stats::to_string(c.levene_center))}};
  return j;
}

/// Parses a config file. Relative manifest/archive paths resolve against the
/// file's directory; CTCBENCH_RESULTS_DIR, when set, replaces output_dir.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  ExperimentConfig c;
  try {
    c = experiment_config_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = base / c.manifest;
  if (c.init_archive && c.init_archive->is_relative()) c.init_archive = base / *c.init_archive;
  if (const char* env = std::getenv("CTCBENCH_RESULTS_DIR"); env && *env) c.output_dir = env;
  c.validate();
  return c;
}

}  // namespace ctcbench
