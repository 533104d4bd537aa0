#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/augment.hpp"
#include "ctcbench/core/error.hpp"
#include "ctcbench/core/parallel.hpp"
#include "ctcbench/core/rng.hpp"
#include "ctcbench/metrics.hpp"
#include "ctcbench/model.hpp"
#include "ctcbench/nn/adamw.hpp"
#include "ctcbench/nn/loss.hpp"

namespace ctcbench {

enum class TrainPreset { PAPER, DESK };

inline std::string_view to_string(TrainPreset p) noexcept { return p == TrainPreset::PAPER ? "PAPER" : "DESK"; }

inline TrainPreset parse_train_preset(std::string_view s) {
  if (s == "PAPER") return TrainPreset::PAPER;
  if (s == "DESK") return TrainPreset::DESK;
  throw ValidationError("unknown train preset '" + std::string(s) + "'");
}

/// Optimisation is always AdamW and checkpoint selection is always by
/// validation F1 (earliest epoch on ties).
struct TrainConfig {
  TrainPreset preset = TrainPreset::DESK;
  int epochs = 12;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  Averaging averaging = Averaging::MACRO;
  bool finetune_all = true;

  /// lr 1e-7 for fine-tuning pretrained weights; 100 epochs, batch 32.
  static TrainConfig paper() {
    TrainConfig c;
    c.preset = TrainPreset::PAPER;
    c.epochs = 100;
    c.batch_size = 32;
    c.learning_rate = 1e-7;
    c.weight_decay = 1e-2;
    return c;
  }

  /// From-scratch training of the mini backbone.
  static TrainConfig desk() { return TrainConfig{}; }

  void validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ValidationError("train: weight_decay must be >= 0");
    if (seeds.empty()) throw ValidationError("train: at least one seed required");
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["preset"] = std::string(to_string(c.preset));
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["seeds"] = c.seeds;
  j["averaging"] = std::string(to_string(c.averaging));
  j["finetune_all"] = c.finetune_all;
  j["optimizer"] = "AdamW";
  j["selection_metric"] = "val_f1";
  return j;
}

/// Evaluation image: primary channel only, already at working size.
struct EvalSample {
  std::string cell_id;
  Image image;
  Label label = Label::CTC;
};

struct TrainData {
  const std::vector<AugmentedSample>& train;
  const std::vector<EvalSample>& val;
  const std::vector<EvalSample>& test;
  Normalization norm;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  MetricsReport val;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_f1 = 0;
  std::optional<std::filesystem::path> checkpoint;
  MetricsReport test;
  Normalization norm;
  std::uint64_t initial_checksum = 0;
  std::uint64_t best_checksum = 0;
};

inline std::vector<Label> predict(const Model& model, const std::vector<const Image*>& images,
                                  const Normalization& norm, std::size_t chunk = 64) {
  std::vector<Label> out;
  out.reserve(images.size());
  const int size = model.spec().input_size;
  for (std::size_t i = 0; i < images.size(); i += chunk) {
    std::vector<const Image*> part(images.begin() + static_cast<std::ptrdiff_t>(i),
                                   images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), i + chunk)));
    const auto logits = model.forward_eval(make_batch<float>(part, norm, size));
    for (std::size_t k = 0; k < part.size(); ++k)
      out.push_back(logits[2 * k + 1] > logits[2 * k] ? Label::CTC : Label::LEUKO);
  }
  return out;
}

inline MetricsReport evaluate(const Model& model, const std::vector<EvalSample>& samples,
                              const Normalization& norm, Averaging averaging) {
  std::vector<const Image*> images;
  std::vector<Label> truth;
  for (const auto& s : samples) {
    images.push_back(&s.image);
    truth.push_back(s.label);
  }
  return compute_metrics(confusion(predict(model, images, norm), truth), averaging);
}

/// One optimisation step on a batch; returns the batch loss.
inline double train_step(Model& model, nn::AdamW<float>& opt, const nn::Tensor<float>& batch,
                         const std::vector<int>& labels) {
  model.zero_grad();
  const auto logits = model.forward(batch);
  const auto loss = nn::cross_entropy(logits, labels);
  if (!std::isfinite(loss.loss)) return loss.loss;
  model.backward(loss.grad);
  opt.step();
  return loss.loss;
}

inline std::string metric_series_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "epoch,train_loss,val_accuracy,val_precision,val_recall,val_f1\n";
  for (const auto& e : r.epochs)
    os << e.epoch << ',' << real_str(e.train_loss) << ',' << real_str(e.val.accuracy) << ','
       << real_str(e.val.precision) << ',' << real_str(e.val.recall) << ',' << real_str(e.val.f1) << '\n';
  return os.str();
}

inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  auto epochs = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) {
    nlohmann::ordered_json ej;
    ej["epoch"] = e.epoch;
    ej["train_loss"] = e.train_loss;
    ej["val"] = to_json(e.val);
    epochs.push_back(std::move(ej));
  }
  j["epochs"] = std::move(epochs);
  j["best_epoch"] = r.best_epoch;
  j["best_val_f1"] = r.best_val_f1;
  j["checkpoint"] = r.checkpoint ? r.checkpoint->filename().string() : "";
  j["test"] = to_json(r.test);
  j["normalization"] = {{"mean", r.norm.mean}, {"std", r.norm.std}};
  j["initial_checksum"] = r.initial_checksum;
  j["best_checksum"] = r.best_checksum;
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("epochs"))
    r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), metrics_from_json(e.at("val"))});
  r.best_epoch = j.at("best_epoch").get<int>();
  r.best_val_f1 = j.at("best_val_f1").get<double>();
  r.test = metrics_from_json(j.at("test"));
  r.norm = {j.at("normalization").at("mean").get<double>(), j.at("normalization").at("std").get<double>()};
  r.initial_checksum = j.value("initial_checksum", std::uint64_t{0});
  r.best_checksum = j.value("best_checksum", std::uint64_t{0});
  return r;
}

/// Where a run persists its artefacts: checkpoint.ctcw, record.json, metrics.csv.
struct RunOptions {
  std::optional<std::filesystem::path> run_dir;
};

/// Trains `model` for config.epochs epochs with a seed-derived sample order,
/// keeps the weights of the best validation-F1 epoch and evaluates them once
/// on the test samples.
inline RunRecord train_one(Model& model, const TrainData& data, const TrainConfig& config,
                           std::uint64_t seed, const RunOptions& options = {}) {
  config.validate();
  if (data.train.empty()) throw ValidationError("train_one: no training samples");
  if (data.val.empty()) throw ValidationError("train_one: no validation samples");
  model.set_finetune_all(config.finetune_all);

  RunRecord rec;
  rec.seed = seed;
  rec.norm = data.norm;
  rec.initial_checksum = model.checksum();

  nn::AdamW<float> opt(model.params(), {config.learning_rate, config.beta1, config.beta2, config.eps,
                                        config.weight_decay});
  Rng order(derive_seed(seed, "sample-order"));
  const int size = model.spec().input_size;
  const std::size_t n = data.train.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);

  std::vector<std::vector<float>> best_state;
  auto snapshot = [&] {
    best_state.clear();
    for (const auto& p : model.params().all()) best_state.push_back(p.value);
  };
  double best_f1 = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto perm = order.permutation(n);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
      const std::size_t end = std::min(n, start + bs);
      std::vector<const Image*> images;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        images.push_back(&data.train[perm[k]].image);
        labels.push_back(class_index(data.train[perm[k]].label));
      }
      const double loss = train_step(model, opt, make_batch<float>(images, data.norm, size), labels);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      loss_sum += loss * static_cast<double>(end - start);
    }
    EpochRecord er{epoch, loss_sum / static_cast<double>(n), evaluate(model, data.val, data.norm, config.averaging)};
    if (er.val.f1 > best_f1) {
      best_f1 = er.val.f1;
      rec.best_epoch = epoch;
      snapshot();
    }
    rec.epochs.push_back(std::move(er));
  }

  std::size_t k = 0;
  for (auto& p : model.params().all()) p.value = best_state[k++];
  rec.best_val_f1 = best_f1;
  rec.best_checksum = model.checksum();
  rec.test = evaluate(model, data.test, data.norm, config.averaging);

  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    auto archive = model.to_archive();
    archive.metadata["seed"] = seed;
    archive.metadata["best_epoch"] = rec.best_epoch;
    archive.metadata["normalization"] = {{"mean", data.norm.mean}, {"std", data.norm.std}};
    rec.checkpoint = *options.run_dir / "checkpoint.ctcw";
    nn::write_archive(*rec.checkpoint, archive);
    std::ofstream(*options.run_dir / "record.json", std::ios::binary) << to_json(rec).dump(2) << '\n';
    std::ofstream(*options.run_dir / "metrics.csv", std::ios::binary) << metric_series_csv(rec);
  }
  return rec;
}

/// Per-metric mean ± sample std over the successful seeds.
struct AggregateReport {
  MeanStd accuracy, precision, recall, f1;
  std::vector<std::uint64_t> seeds;
  std::vector<double> f1_per_seed;
  bool complete = true;
  std::vector<std::string> failures;
};

inline AggregateReport aggregate(const std::vector<RunRecord>& runs) {
  AggregateReport a;
  std::vector<double> acc, prec, rec, f1;
  for (const auto& r : runs) {
    a.seeds.push_back(r.seed);
    acc.push_back(r.test.accuracy);
    prec.push_back(r.test.precision);
    rec.push_back(r.test.recall);
    f1.push_back(r.test.f1);
  }
  a.accuracy = mean_std(acc);
  a.precision = mean_std(prec);
  a.recall = mean_std(rec);
  a.f1 = mean_std(f1);
  a.f1_per_seed = f1;
  return a;
}

inline nlohmann::ordered_json to_json(const AggregateReport& a) {
  auto ms = [](const MeanStd& m) { return nlohmann::ordered_json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; };
  nlohmann::ordered_json j;
  j["accuracy"] = ms(a.accuracy);
  j["precision"] = ms(a.precision);
  j["recall"] = ms(a.recall);
  j["f1"] = ms(a.f1);
  j["seeds"] = a.seeds;
  j["f1_per_seed"] = a.f1_per_seed;
  j["complete"] = a.complete;
  j["failures"] = a.failures;
  return j;
}

struct MultiSeedResult {
  std::vector<RunRecord> runs;  // successful runs, in seed order
  AggregateReport aggregate;
};

using RunFn = std::function<RunRecord(std::uint64_t seed)>;

/// Runs one job per seed on up to `jobs` threads. Failed seeds are listed
/// and mark the aggregate incomplete.
inline MultiSeedResult train_multi_seed(const std::vector<std::uint64_t>& seeds, const RunFn& run,
                                        unsigned jobs = 1) {
  if (seeds.empty()) throw ValidationError("train_multi_seed: no seeds");
  std::vector<std::optional<RunRecord>> slots(seeds.size());
  std::vector<std::string> errors(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    try {
      slots[i] = run(seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  MultiSeedResult out;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (slots[i]) out.runs.push_back(std::move(*slots[i]));
    else failures.push_back("seed " + std::to_string(seeds[i]) + ": " + errors[i]);
  }
  out.aggregate = aggregate(out.runs);
  out.aggregate.complete = failures.empty();
  out.aggregate.failures = std::move(failures);
  return out;
}

/// Convenience overload: builds a fresh model per seed and trains it.
inline MultiSeedResult train_multi_seed(const BackboneSpec& spec, const std::optional<std::filesystem::path>& archive,
                                        const TrainData& data, const TrainConfig& config, unsigned jobs = 1,
                                        const std::function<std::optional<std::filesystem::path>(std::uint64_t)>& run_dir = {}) {
  config.validate();
  return train_multi_seed(
      config.seeds,
      [&](std::uint64_t seed) {
        Model m = archive ? build_model(spec, ArchiveInit{*archive}) : build_model(spec, RandomInit{seed});
        RunOptions opts;
        if (run_dir) opts.run_dir = run_dir(seed);
        return train_one(m, data, config, seed, opts);
      },
      jobs);
}

}  // namespace ctcbench
