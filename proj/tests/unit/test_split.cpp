#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "ctcbench/core/rng.hpp"
#include "ctcbench/split.hpp"
#include "support.hpp"

namespace ctcbench {
namespace {

using testing::group_manifest;

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void expect_invariants(const Manifest& m, const DatasetSplit& s) {
  const auto train = as_set(s.train), val = as_set(s.val), test = as_set(s.test);
  ASSERT_EQ(train.size() + val.size() + test.size(), s.train.size() + s.val.size() + s.test.size());
  for (const auto& id : val) ASSERT_FALSE(train.count(id) || test.count(id)) << id;
  for (const auto& id : test) ASSERT_FALSE(train.count(id)) << id;
  for (const auto& r : m.records) {
    const bool in_train_val = train.count(r.cell_id) || val.count(r.cell_id);
    if (r.label == Label::CTC && r.provenance == Provenance::PATIENT) ASSERT_FALSE(in_train_val) << r.cell_id;
    if (r.provenance == Provenance::SPIKED) ASSERT_FALSE(test.count(r.cell_id)) << r.cell_id;
  }
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& id : *part) ASSERT_NE(m.find(id), nullptr);
}

TEST(Split, ExactCountPresetPartition) {
  const auto m = group_manifest(529, 52, 388);
  const auto s = make_split(m, SplitPolicy::paper_preset(3));
  expect_invariants(m, s);
  const auto c = split_report(s, m, 5);
  EXPECT_EQ(c.row("Train"), (SplitCounts::Row{"Train", 479, 303}));
  EXPECT_EQ(c.row("Augmented Train"), (SplitCounts::Row{"Augmented Train", 2395, 1515}));
  EXPECT_EQ(c.row("Validation"), (SplitCounts::Row{"Validation", 50, 29}));
  EXPECT_EQ(c.row("Test"), (SplitCounts::Row{"Test", 52, 56}));
  EXPECT_EQ(c.row("TOTAL"), (SplitCounts::Row{"TOTAL", 581, 388}));
}

TEST(Split, FractionsFloorRounding) {
  const auto m = group_manifest(100, 10, 80);
  SplitPolicy p;
  p.seed = 5;
  const auto s = make_split(m, p);
  expect_invariants(m, s);
  const auto c = split_report(s, m);
  EXPECT_EQ(c.row("Train"), (SplitCounts::Row{"Train", 90, 61}));
  EXPECT_EQ(c.row("Validation"), (SplitCounts::Row{"Validation", 10, 7}));
  EXPECT_EQ(c.row("Test"), (SplitCounts::Row{"Test", 10, 12}));
  EXPECT_EQ(c.rows.size(), 4u);
}

TEST(Split, EmptyPatientPoolFails) {
  try {
    make_split(group_manifest(10, 0, 10), SplitPolicy{});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("empty CTC test pool"), std::string::npos);
  }
}

TEST(Split, ExcessiveCountsFail) {
  const auto m = group_manifest(20, 5, 20);
  auto p = SplitPolicy::paper_preset();
  EXPECT_THROW(make_split(m, p), ValidationError);
  p.val_count_ctc = 2;
  p.val_count_leuko = 2;
  p.test_count_leuko = 4;
  p.test_count_ctc = 6;
  EXPECT_THROW(make_split(m, p), ValidationError);
  p.test_count_ctc = 3;
  const auto s = make_split(m, p);
  EXPECT_EQ(split_report(s, m).row("Test"), (SplitCounts::Row{"Test", 3, 4}));
}

TEST(Split, PolicyValidation) {
  SplitPolicy p;
  p.val_fraction_ctc = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p.val_fraction_ctc = 0.1;
  p.leuko_test_fraction = 1.0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Split, DeterministicSerialization) {
  const auto m = group_manifest(60, 9, 40, 5);
  SplitPolicy p;
  p.seed = 42;
  const auto a = serialize(make_split(m, p));
  EXPECT_EQ(a, serialize(make_split(m, p)));
  p.seed = 43;
  EXPECT_NE(a, serialize(make_split(m, p)));
}

TEST(Split, JsonRoundTrip) {
  const auto m = group_manifest(30, 4, 20);
  auto p = SplitPolicy::paper_preset(9);
  p.val_count_ctc = 3;
  p.val_count_leuko = 2;
  p.test_count_leuko = 4;
  const auto s = make_split(m, p);
  const auto back = split_from_json(nlohmann::json::parse(serialize(s)));
  EXPECT_EQ(back, s);
  const auto j = nlohmann::json::parse(serialize(s));
  EXPECT_TRUE(j.contains("seed") && j.contains("policy") && j.contains("train") && j.contains("val") &&
              j.contains("test"));
}

TEST(Split, ReportEdgeCases) {
  const auto m = group_manifest(3, 1, 3);
  DatasetSplit empty;
  for (const auto& r : split_report(empty, m).rows) {
    EXPECT_EQ(r.ctc, 0u);
    EXPECT_EQ(r.leuko, 0u);
  }
  empty.train.push_back("ghost");
  EXPECT_THROW(split_report(empty, m), ValidationError);
}

TEST(Split, RandomManifestsHoldInvariants) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = group_manifest(1 + rng.below(60), 1 + rng.below(15), 2 + rng.below(60), rng.below(10));
    SplitPolicy p;
    p.seed = rng.next_u64();
    p.val_fraction_ctc = rng.uniform(0.05, 0.5);
    p.val_fraction_leuko = rng.uniform(0.05, 0.5);
    p.leuko_test_fraction = rng.uniform(0.05, 0.5);
    const auto s = make_split(m, p);
    expect_invariants(m, s);
    // every record is eligible for exactly one partition under these policies
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), m.records.size());
  }
}

TEST(Split, RenderedTable) {
  const auto m = group_manifest(529, 52, 388);
  const auto text = render_split_table(split_report(make_split(m, SplitPolicy::paper_preset()), m, 5));
  EXPECT_NE(text.find("| Train           |   479 |   303 |"), std::string::npos) << text;
  EXPECT_NE(text.find("| Augmented Train |  2395 |  1515 |"), std::string::npos);
  EXPECT_NE(text.find("| Test            |    52 |    56 |"), std::string::npos);
}

}  // namespace
}  // namespace ctcbench
