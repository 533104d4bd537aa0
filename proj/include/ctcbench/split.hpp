#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "ctcbench/core/error.hpp"
#include "ctcbench/core/rng.hpp"
#include "ctcbench/data.hpp"

namespace ctcbench {

enum class SplitMode { EXACT_COUNTS, FRACTIONS };

inline std::string_view to_string(SplitMode m) noexcept {
  return m == SplitMode::EXACT_COUNTS ? "EXACT_COUNTS" : "FRACTIONS";
}

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "EXACT_COUNTS") return SplitMode::EXACT_COUNTS;
  if (s == "FRACTIONS") return SplitMode::FRACTIONS;
  throw ValidationError("unknown split mode '" + std::string(s) + "'");
}

/// How records are assigned to train/val/test.
///
/// Spiked-in CTCs only ever reach train or val; patient CTCs only ever reach
/// test. Leukocytes of any provenance form one pool from which the test share
/// is drawn first, the remainder being divided into train and val.
///
/// FRACTIONS rounding: test = floor(leuko_test_fraction * |leuko|) and
/// train = floor((1 - val_fraction) * |pool|) per class; val takes the rest.
struct SplitPolicy {
  SplitMode mode = SplitMode::FRACTIONS;

  // EXACT_COUNTS
  std::size_t val_count_ctc = 0;
  std::size_t val_count_leuko = 0;
  std::size_t test_count_leuko = 0;
  /// Unset means every patient CTC goes to test.
  std::optional<std::size_t> test_count_ctc;

  // FRACTIONS
  double val_fraction_ctc = 0.1;
  double val_fraction_leuko = 0.1;
  double leuko_test_fraction = 0.15;

  std::uint64_t seed = 0;

  /// Exact-count preset: val 50/29, leukocyte test 56.
  static SplitPolicy paper_preset(std::uint64_t seed = 0) {
    SplitPolicy p;
    p.mode = SplitMode::EXACT_COUNTS;
    p.val_count_ctc = 50;
    p.val_count_leuko = 29;
    p.test_count_leuko = 56;
    p.seed = seed;
    return p;
  }

  void validate() const {
    auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (mode == SplitMode::FRACTIONS) {
      if (!in_open_unit(val_fraction_ctc) || !in_open_unit(val_fraction_leuko))
        throw ValidationError("split policy: val fractions must lie in (0,1)");
      if (!in_open_unit(leuko_test_fraction))
        throw ValidationError("split policy: leuko_test_fraction must lie in (0,1)");
    }
  }

  friend bool operator==(const SplitPolicy&, const SplitPolicy&) = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  SplitPolicy policy;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

inline nlohmann::ordered_json to_json(const SplitPolicy& p) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(p.mode));
  if (p.mode == SplitMode::EXACT_COUNTS) {
    j["val_count_ctc"] = p.val_count_ctc;
    j["val_count_leuko"] = p.val_count_leuko;
    j["test_count_leuko"] = p.test_count_leuko;
    if (p.test_count_ctc) j["test_count_ctc"] = *p.test_count_ctc;
  } else {
    j["val_fraction_ctc"] = p.val_fraction_ctc;
    j["val_fraction_leuko"] = p.val_fraction_leuko;
    j["leuko_test_fraction"] = p.leuko_test_fraction;
  }
  j["seed"] = p.seed;
  return j;
}

inline SplitPolicy split_policy_from_json(const nlohmann::json& j) {
  SplitPolicy p;
  p.mode = parse_split_mode(j.at("mode").get<std::string>());
  if (p.mode == SplitMode::EXACT_COUNTS) {
    p.val_count_ctc = j.at("val_count_ctc").get<std::size_t>();
    p.val_count_leuko = j.at("val_count_leuko").get<std::size_t>();
    p.test_count_leuko = j.at("test_count_leuko").get<std::size_t>();
    if (j.contains("test_count_ctc")) p.test_count_ctc = j["test_count_ctc"].get<std::size_t>();
  } else {
    p.val_fraction_ctc = j.at("val_fraction_ctc").get<double>();
    p.val_fraction_leuko = j.at("val_fraction_leuko").get<double>();
    p.leuko_test_fraction = j.at("leuko_test_fraction").get<double>();
  }
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline nlohmann::ordered_json to_json(const DatasetSplit& s) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["policy"] = to_json(s.policy);
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  return j;
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.policy = split_policy_from_json(j.at("policy"));
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

inline std::string serialize(const DatasetSplit& s) { return to_json(s).dump(2) + "\n"; }

namespace detail {

inline std::size_t floor_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace detail

/// Partitions a manifest under the provenance rules of `policy`.
inline DatasetSplit make_split(const Manifest& manifest, const SplitPolicy& policy) {
  policy.validate();

  std::vector<std::size_t> spiked, patient_ctc, leuko;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.label == Label::CTC)
      (r.provenance == Provenance::SPIKED ? spiked : patient_ctc).push_back(i);
    else
      leuko.push_back(i);
  }
  if (spiked.empty() && patient_ctc.empty())
    throw ValidationError("make_split: manifest has no CTC records");
  if (leuko.empty()) throw ValidationError("make_split: manifest has no LEUKO records");
  if (patient_ctc.empty()) throw ValidationError("make_split: empty CTC test pool (no PATIENT CTC)");

  Rng(derive_seed(policy.seed, "spiked")).shuffle(spiked);
  Rng(derive_seed(policy.seed, "patient")).shuffle(patient_ctc);
  Rng(derive_seed(policy.seed, "leuko")).shuffle(leuko);

  std::size_t test_ctc = patient_ctc.size();
  std::size_t test_leuko = 0;
  std::size_t val_ctc = 0;
  std::size_t val_leuko = 0;
  if (policy.mode == SplitMode::EXACT_COUNTS) {
    if (policy.test_count_ctc) test_ctc = *policy.test_count_ctc;
    test_leuko = policy.test_count_leuko;
    if (test_ctc > patient_ctc.size())
      throw ValidationError("make_split: requested " + std::to_string(test_ctc) +
                            " CTC test records but only " + std::to_string(patient_ctc.size()) +
                            " PATIENT CTC available");
    if (test_leuko > leuko.size())
      throw ValidationError("make_split: requested " + std::to_string(test_leuko) +
                            " LEUKO test records but only " + std::to_string(leuko.size()) +
                            " available");
    val_ctc = policy.val_count_ctc;
    val_leuko = policy.val_count_leuko;
    if (val_ctc > spiked.size())
      throw ValidationError("make_split: requested " + std::to_string(val_ctc) +
                            " CTC validation records but only " + std::to_string(spiked.size()) +
                            " SPIKED CTC available");
    if (val_leuko > leuko.size() - test_leuko)
      throw ValidationError("make_split: requested " + std::to_string(val_leuko) +
                            " LEUKO validation records but only " +
                            std::to_string(leuko.size() - test_leuko) + " remain after test");
  } else {
    test_leuko = detail::floor_count(policy.leuko_test_fraction, leuko.size());
    const std::size_t leuko_pool = leuko.size() - test_leuko;
    val_ctc = spiked.size() - detail::floor_count(1.0 - policy.val_fraction_ctc, spiked.size());
    val_leuko = leuko_pool - detail::floor_count(1.0 - policy.val_fraction_leuko, leuko_pool);
  }

  std::vector<std::size_t> train, val, test;
  test.insert(test.end(), patient_ctc.begin(), patient_ctc.begin() + test_ctc);
  test.insert(test.end(), leuko.begin(), leuko.begin() + test_leuko);
  val.insert(val.end(), spiked.begin(), spiked.begin() + val_ctc);
  val.insert(val.end(), leuko.begin() + test_leuko, leuko.begin() + test_leuko + val_leuko);
  train.insert(train.end(), spiked.begin() + val_ctc, spiked.end());
  train.insert(train.end(), leuko.begin() + test_leuko + val_leuko, leuko.end());

  auto ids = [&](std::vector<std::size_t>& idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(manifest.records[i].cell_id);
    return out;
  };
  DatasetSplit s;
  s.train = ids(train);
  s.val = ids(val);
  s.test = ids(test);
  s.seed = policy.seed;
  s.policy = policy;
  return s;
}

/// Per-class counts for each partition.
struct SplitCounts {
  struct Row {
    std::string name;
    std::size_t ctc = 0;
    std::size_t leuko = 0;
    friend bool operator==(const Row&, const Row&) = default;
  };
  std::vector<Row> rows;

  const Row& row(std::string_view name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw ValidationError("split report has no row '" + std::string(name) + "'");
  }
};

/// Count matrix with rows Train, [Augmented Train], Validation, Test, TOTAL.
/// `augmentation_multiplier` adds the augmented-train row when set.
inline SplitCounts split_report(const DatasetSplit& split, const Manifest& manifest,
                                std::optional<std::size_t> augmentation_multiplier = std::nullopt) {
  std::unordered_map<std::string_view, Label> labels;
  labels.reserve(manifest.records.size());
  for (const auto& r : manifest.records) labels.emplace(r.cell_id, r.label);

  auto count = [&](const std::vector<std::string>& ids, const char* name) {
    SplitCounts::Row row{name, 0, 0};
    for (const auto& id : ids) {
      auto it = labels.find(id);
      if (it == labels.end()) throw ValidationError("split references unknown cell_id '" + id + "'");
      (it->second == Label::CTC ? row.ctc : row.leuko)++;
    }
    return row;
  };
  SplitCounts out;
  out.rows.push_back(count(split.train, "Train"));
  if (augmentation_multiplier) {
    const auto& t = out.rows.front();
    out.rows.push_back({"Augmented Train", t.ctc * *augmentation_multiplier,
                        t.leuko * *augmentation_multiplier});
  }
  out.rows.push_back(count(split.val, "Validation"));
  out.rows.push_back(count(split.test, "Test"));
  SplitCounts::Row total{"TOTAL", 0, 0};
  for (const auto& r : out.rows) {
    if (r.name == "Augmented Train") continue;
    total.ctc += r.ctc;
    total.leuko += r.leuko;
  }
  out.rows.push_back(total);
  return out;
}

inline std::string render_split_table(const SplitCounts& counts) {
  std::ostringstream os;
  os << "| Split           |   CTC | LEUKO |\n";
  os << "|-----------------|------:|------:|\n";
  for (const auto& r : counts.rows) {
    std::string name = r.name;
    name.resize(15, ' ');
    os << "| " << name << " | " << std::setw(5) << r.ctc << " | " << std::setw(5) << r.leuko
       << " |\n";
  }
  return os.str();
}

}  // namespace ctcbench
