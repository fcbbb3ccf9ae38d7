#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace kpc;
using testing_support::instances_for;

namespace {

const std::array<std::array<long, 3>, 3> kPublished = {{{710, 194, 0}, {218, 708, 28}, {22, 105, 67}}};

ErrorKind kind_of_confusion(const std::vector<InstanceRecord>& gold, const PredictionSet& preds) {
  try {
    confusion(gold, preds);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST(Scores, PublishedConfusionMatrix) {
  const auto data = instances_for(kPublished);
  const auto m = confusion(data.gold, data.preds);
  EXPECT_EQ(m.total(), 2052u);
  const auto s = scores(m);
  EXPECT_NEAR(s.micro_f1, 0.7237, 1e-4);
  EXPECT_NEAR(s.per_class[0].f1, 0.766, 1e-3);
  EXPECT_NEAR(s.per_class[1].f1, 0.722, 1e-3);
  EXPECT_NEAR(s.per_class[2].f1, 0.464, 1e-3);
  const auto ref = oracle::per_class_f1(kPublished);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(s.per_class[c].f1, ref[c], 1e-12);
  EXPECT_NEAR(s.micro_f1, oracle::accuracy(kPublished), 1e-12);
}

TEST(Scores, MatchOracleOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::array<long, 3>, 3> cm{};
    for (auto& row : cm) for (auto& c : row) c = static_cast<long>(rng.below(6));
    cm[0][0] += 1;
    const auto data = instances_for(cm);
    const auto s = scores(confusion(data.gold, data.preds));
    const auto ref = oracle::per_class_f1(cm);
    double macro = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(s.per_class[c].f1, ref[c], 1e-12);
      macro += ref[c] / 3;
    }
    EXPECT_NEAR(s.macro_f1, macro, 1e-12);
    EXPECT_NEAR(s.micro_f1, oracle::accuracy(cm), 1e-12);
  }
}

TEST(Scores, IdentityIsPerfect) {
  const auto data = instances_for({{{4, 0, 0}, {0, 3, 0}, {0, 0, 2}}});
  const auto s = scores(confusion(data.gold, data.preds));
  EXPECT_DOUBLE_EQ(s.micro_f1, 1.0);
  EXPECT_DOUBLE_EQ(s.macro_f1, 1.0);
}

TEST(Scores, AbsentClassScoresZeroNotNan) {
  const auto data = instances_for({{{4, 1, 0}, {0, 3, 0}, {0, 0, 0}}});
  const auto s = scores(confusion(data.gold, data.preds));
  EXPECT_EQ(s.per_class[2].precision, 0.0);
  EXPECT_EQ(s.per_class[2].recall, 0.0);
  EXPECT_EQ(s.per_class[2].f1, 0.0);
  EXPECT_THROW(scores(ConfusionMatrix{}), Error);
}

TEST(Scores, MacroInvariantUnderClassRelabeling) {
  const std::array<std::array<long, 3>, 3> cm = {{{5, 2, 1}, {0, 7, 3}, {2, 1, 4}}};
  const std::array<std::array<long, 3>, 3> permuted = {{{4, 2, 1}, {1, 5, 2}, {3, 0, 7}}};  // (M,P,T) -> (P,T,M)
  const auto a = instances_for(cm);
  const auto b = instances_for(permuted);
  const auto sa = scores(confusion(a.gold, a.preds));
  const auto sb = scores(confusion(b.gold, b.preds));
  EXPECT_NEAR(sa.macro_f1, sb.macro_f1, 1e-12);
  EXPECT_NEAR(sa.micro_f1, sb.micro_f1, 1e-12);
}

TEST(Confusion, ValidatesCoverage) {
  auto data = instances_for({{{2, 1, 0}, {0, 1, 0}, {0, 0, 1}}});
  auto missing = data.preds;
  missing.pop_back();
  EXPECT_EQ(kind_of_confusion(data.gold, missing), ErrorKind::MissingPrediction);
  auto extra = data.preds;
  extra.push_back({{"elsewhere", "T99"}, Label::Task, std::nullopt});
  EXPECT_EQ(kind_of_confusion(data.gold, extra), ErrorKind::UnknownInstance);
  auto dup = data.preds;
  dup.push_back(dup.front());
  EXPECT_EQ(kind_of_confusion(data.gold, dup), ErrorKind::DuplicateKey);
  auto unlabeled = data.gold;
  unlabeled[0].label.reset();
  EXPECT_EQ(kind_of_confusion(unlabeled, data.preds), ErrorKind::UnlabeledInstance);
}

TEST(ErrorAnalysis, GroupsOffDiagonalCells) {
  const std::array<std::array<long, 3>, 3> cm = {{{5, 3, 0}, {2, 4, 1}, {0, 6, 2}}};
  const auto data = instances_for(cm);
  const auto groups = error_analysis(data.gold, data.preds);
  ASSERT_EQ(groups.size(), 4u);
  std::size_t total = 0;
  std::pair<std::size_t, std::size_t> previous{0, 0};
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    EXPECT_NE(g.gold, g.predicted);
    EXPECT_EQ(g.size, static_cast<std::size_t>(cm[index_of(g.gold)][index_of(g.predicted)]));
    EXPECT_EQ(g.instances.size(), g.size);
    std::size_t surf = 0;
    for (std::size_t s = 0; s < g.surfaces.size(); ++s) {
      surf += g.surfaces[s].count;
      if (s > 0) EXPECT_GE(g.surfaces[s - 1].count, g.surfaces[s].count);
    }
    EXPECT_EQ(surf, g.size);
    const std::pair<std::size_t, std::size_t> cell{index_of(g.gold), index_of(g.predicted)};
    if (k > 0) EXPECT_LT(previous, cell);
    previous = cell;
    total += g.size;
  }
  const auto m = confusion(data.gold, data.preds);
  EXPECT_EQ(total, m.total() - m.correct());
}

TEST(ErrorAnalysis, SurfaceTiesBreakAlphabetically) {
  std::vector<InstanceRecord> gold = {{"d", "T1", 0, 1, "zinc", Label::Material},
                                      {"d", "T2", 0, 1, "brass", Label::Material},
                                      {"d", "T3", 0, 1, "brass  films", Label::Material},
                                      {"d", "T4", 0, 1, "brass films", Label::Material}};
  PredictionSet preds;
  for (const auto& g : gold) preds.push_back({{g.doc_id, g.instance_id}, Label::Task, std::nullopt});
  const auto groups = error_analysis(gold, preds);
  ASSERT_EQ(groups.size(), 1u);
  ASSERT_EQ(groups[0].surfaces.size(), 3u);
  EXPECT_EQ(groups[0].surfaces[0].surface, "brass films");
  EXPECT_EQ(groups[0].surfaces[0].count, 2u);
  EXPECT_EQ(groups[0].surfaces[1].surface, "brass");
  EXPECT_EQ(groups[0].surfaces[2].surface, "zinc");
}

TEST(Report, JsonAndTable) {
  const auto data = instances_for({{{3, 1, 0}, {0, 2, 0}, {1, 0, 1}}});
  const auto r = evaluate(data.gold, data.preds);
  const auto j = to_json(r);
  EXPECT_EQ(j["total"], 8);
  EXPECT_EQ(j["confusion"]["Material"]["Process"], 1);
  EXPECT_EQ(j["errors"].size(), 2u);
  const auto table = format_table(r);
  EXPECT_NE(table.find("micro-F1 0.7500"), std::string::npos);
}
