#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "compass/error.hpp"
#include "compass/evaluation.hpp"
#include "support/eval_fixture.hpp"

namespace compass::eval {
namespace {

using E = AnnotatedError;

MatchResult single(std::vector<Prediction> preds, std::vector<AnnotatedError> truths) {
  MatchResult m;
  m.traces.push_back(match_trace("t", std::move(preds), std::move(truths)));
  return m;
}

// Direct evaluation of the sample correlation formula.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

TEST(LoadGroundTruth, Totals) {
  const auto m = taxonomy::load_mapping(R"({"external_labels":["A","B"],"default_label":"A"})",
                                        taxonomy::default_taxonomy());
  const auto gt = load_ground_truth(R"({"traces":[
    {"trace_id":"t1","human_score":0.5,"errors":[{"span_id":"a","category":"A"},{"span_id":"b","category":"B"}]},
    {"trace_id":"t2","errors":[{"span_id":"a","category":"B"}]}]})",
                                    m);
  EXPECT_EQ(gt.traces.size(), 2u);
  EXPECT_EQ(gt.error_count(), 3u);
  EXPECT_EQ(gt.find("t1")->human_score, 0.5);
  EXPECT_FALSE(gt.find("t2")->human_score.has_value());
  EXPECT_EQ(gt.find("nope"), nullptr);
}

TEST(LoadGroundTruth, UnknownLabelNamed) {
  const auto m = taxonomy::load_mapping(R"({"external_labels":["A"],"default_label":"A"})", taxonomy::default_taxonomy());
  try {
    load_ground_truth(R"({"traces":[{"trace_id":"t","errors":[{"span_id":"a","category":"Quantum Error"}]}]})", m);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("Quantum Error"), std::string::npos);
  }
}

TEST(LoadGroundTruth, EmptyErrorListIsValid) {
  const auto m = taxonomy::load_mapping(R"({"external_labels":["A"],"default_label":"A"})", taxonomy::default_taxonomy());
  const auto gt = load_ground_truth(R"({"traces":[{"trace_id":"t","errors":[]}]})", m);
  EXPECT_EQ(gt.error_count(), 0u);
  EXPECT_THROW(load_ground_truth(R"({"traces":[{"trace_id":"t","errors":[]},{"trace_id":"t","errors":[]}]})", m),
               SchemaError);
}

TEST(Match, JointPair) {
  const auto m = single({{"s1", "A"}}, {{"s1", "A"}});
  ASSERT_EQ(m.traces[0].pairs.size(), 1u);
  EXPECT_EQ(m.traces[0].pairs[0].kind, MatchKind::joint);
  const auto c = categorization_counts(m);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 0u);
  EXPECT_EQ(c.fn, 0u);
}

TEST(Match, RightLabelWrongSpanIsCategoryOnly) {
  const auto m = single({{"s2", "A"}}, {{"s1", "A"}});
  ASSERT_EQ(m.traces[0].pairs.size(), 1u);
  EXPECT_EQ(m.traces[0].pairs[0].kind, MatchKind::category_only);
}

TEST(Match, GreedyTiers) {
  const auto m = single({{"s1", "A"}, {"s2", "B"}}, {{"s1", "B"}});
  const auto& t = m.traces[0];
  ASSERT_EQ(t.pairs.size(), 1u);
  EXPECT_EQ(t.pairs[0].kind, MatchKind::category_only);
  EXPECT_EQ(t.predictions[t.pairs[0].prediction], (E{"s2", "B"}));
  EXPECT_EQ(t.unmatched_predictions.size(), 1u);
  EXPECT_EQ(t.predictions[t.unmatched_predictions[0]], (E{"s1", "A"}));
  const auto c = categorization_counts(m);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 0u);
}

TEST(Match, InputOrderIrrelevant) {
  const auto a = single({{"s2", "B"}, {"s1", "A"}, {"s1", "B"}}, {{"s1", "B"}, {"s3", "A"}});
  const auto b = single({{"s1", "B"}, {"s2", "B"}, {"s1", "A"}}, {{"s3", "A"}, {"s1", "B"}});
  EXPECT_DOUBLE_EQ(categorization_f1(a), categorization_f1(b));
  EXPECT_DOUBLE_EQ(localization_accuracy(a), localization_accuracy(b));
  EXPECT_DOUBLE_EQ(joint_score(a), joint_score(b));
}

TEST(CategorizationF1, Examples) {
  EXPECT_DOUBLE_EQ(categorization_f1(single({{"a", "A"}, {"b", "B"}}, {{"a", "A"}, {"b", "B"}})), 1.0);
  EXPECT_DOUBLE_EQ(categorization_f1(single({}, {{"a", "A"}, {"b", "B"}, {"c", "C"}})), 0.0);
  EXPECT_DOUBLE_EQ(categorization_f1(single({}, {})), 1.0);
  EXPECT_DOUBLE_EQ(categorization_f1(single({{"a", "A"}}, {})), 0.0);
  // TP 2, FP 1, FN 1
  EXPECT_NEAR(categorization_f1(single({{"a", "A"}, {"b", "B"}, {"x", "C"}}, {{"a", "A"}, {"b", "B"}, {"y", "D"}})),
              2.0 / 3.0, 1e-12);
}

TEST(LocalizationAccuracy, Examples) {
  EXPECT_DOUBLE_EQ(localization_accuracy(single({{"a", "A"}, {"b", "B"}}, {{"a", "A"}, {"b", "B"}})), 1.0);
  EXPECT_DOUBLE_EQ(localization_accuracy(single({{"a", "A"}}, {{"a", "A"}, {"b", "B"}})), 0.5);
  EXPECT_DOUBLE_EQ(localization_accuracy(single({{"a", "Z"}}, {{"a", "A"}})), 1.0);
  EXPECT_DOUBLE_EQ(localization_accuracy(single({{"a", "Z"}}, {})), 1.0);
}

TEST(JointScore, Examples) {
  EXPECT_DOUBLE_EQ(joint_score(single({{"a", "A"}}, {{"a", "A"}})), 1.0);
  EXPECT_DOUBLE_EQ(joint_score(single({{"x", "A"}, {"y", "B"}}, {{"a", "A"}, {"b", "B"}})), 0.0);
  EXPECT_DOUBLE_EQ(joint_score(single({{"a", "A"}}, {{"a", "A"}, {"b", "B"}, {"c", "C"}, {"d", "D"}})), 0.25);
  EXPECT_DOUBLE_EQ(joint_score(single({}, {})), 1.0);
}

TEST(Pearson, Examples) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> rev{3, 2, 1};
  EXPECT_NEAR(*pearson(a, a), 1.0, 1e-12);
  EXPECT_NEAR(*pearson(a, rev), -1.0, 1e-12);
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{1, 3, 2, 5};
  // Direct formula: cov 5.5 / sqrt(5 * 8.75) = 0.8315...
  EXPECT_NEAR(*pearson(x, y), oracle_pearson(x, y), 1e-12);
  EXPECT_NEAR(*pearson(x, y), 5.5 / std::sqrt(5.0 * 8.75), 1e-12);
}

TEST(Pearson, ZeroVarianceUndefined) {
  const std::vector<double> flat{0.3, 0.3, 0.3};
  const std::vector<double> a{1, 2, 3};
  EXPECT_FALSE(pearson(flat, a).has_value());
  EXPECT_FALSE(pearson(a, flat).has_value());
}

TEST(Pearson, InputErrors) {
  const std::vector<double> one{1};
  const std::vector<double> two{1, 2};
  const std::vector<double> three{1, 2, 3};
  EXPECT_THROW(pearson(one, one), InputError);
  EXPECT_THROW(pearson(two, three), InputError);
}

TEST(EvaluateRun, MixedFixtureHandComputed) {
  testing::MixedFixture fx;
  const auto gt = load_ground_truth(fx.annotations, fx.mapping);
  const auto m = evaluate_run(fx.reports, gt, fx.mapping);
  EXPECT_NEAR(m.categorization_f1, testing::kMixedF1, 1e-9);
  EXPECT_NEAR(m.localization_accuracy, testing::kMixedLoc, 1e-9);
  EXPECT_NEAR(m.joint_score, testing::kMixedJoint, 1e-9);
  EXPECT_EQ(m.counts.tp, 4u);
  EXPECT_EQ(m.counts.fp, 2u);
  EXPECT_EQ(m.counts.fn, 1u);
  EXPECT_EQ(m.trace_count, 3u);
  EXPECT_EQ(m.prediction_count, 6u);
  EXPECT_EQ(m.truth_count, 5u);
  ASSERT_TRUE(m.pearson_rho.has_value());
  EXPECT_NEAR(*m.pearson_rho, oracle_pearson({0.8, 0.6, 0.1}, {0.9, 0.5, 0.1}), 1e-12);
  // Per category: A tp 2 (X joint, Y category) fn 1 (Z), B tp 2 (X, Z), C fp 2.
  EXPECT_EQ(m.per_category.at("A").tp, 2u);
  EXPECT_EQ(m.per_category.at("A").fn, 1u);
  EXPECT_EQ(m.per_category.at("B").tp, 2u);
  EXPECT_EQ(m.per_category.at("C").fp, 2u);
  const auto table = render_metrics_table(m);
  EXPECT_NE(table.find("0.727"), std::string::npos) << table;
  EXPECT_NE(table.find("0.800"), std::string::npos);
}

TEST(EvaluateRun, OraclePredictionsScorePerfect) {
  testing::MixedFixture fx;
  const auto gt = load_ground_truth(fx.annotations, fx.mapping);
  std::vector<pipeline::AnalysisReport> reports;
  for (const auto& t : gt.traces) {
    pipeline::AnalysisReport r;
    r.trace_id = t.trace_id;
    for (const auto& e : t.errors) {
      pipeline::ErrorFinding f;
      f.span_id = e.span_id;
      f.error_type = *fx.taxonomy.find_path("Cat/Sub/L" + e.category);
      r.findings.push_back(f);
    }
    reports.push_back(r);
  }
  const auto m = evaluate_run(reports, gt, fx.mapping);
  EXPECT_DOUBLE_EQ(m.categorization_f1, 1.0);
  EXPECT_DOUBLE_EQ(m.localization_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.joint_score, 1.0);
  EXPECT_FALSE(m.pearson_rho.has_value());  // no aggregate scores
  EXPECT_EQ(m.rho_pairs, 0u);
}

TEST(EvaluateRun, EmptyPredictionsScoreZero) {
  testing::MixedFixture fx;
  const auto gt = load_ground_truth(fx.annotations, fx.mapping);
  for (auto& r : fx.reports) r.findings.clear();
  const auto m = evaluate_run(fx.reports, gt, fx.mapping);
  EXPECT_DOUBLE_EQ(m.categorization_f1, 0.0);
  EXPECT_DOUBLE_EQ(m.localization_accuracy, 0.0);
  EXPECT_DOUBLE_EQ(m.joint_score, 0.0);
}

TEST(EvaluateRun, UnannotatedTraceIsInputError) {
  testing::MixedFixture fx;
  const auto gt = load_ground_truth(fx.annotations, fx.mapping);
  fx.add("Q", 0.5, {});
  try {
    evaluate_run(fx.reports, gt, fx.mapping);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("Q"), std::string::npos);
  }
}

// Joint <= Loc and everything in [0,1] on random instances.
TEST(MetricProperties, DominanceAndRange) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> count(0, 10);
  std::uniform_int_distribution<int> span(0, 6);
  std::uniform_int_distribution<int> label(0, 3);
  auto draw = [&](int n) {
    std::vector<E> out;
    for (int i = 0; i < n; ++i) out.push_back({"s" + std::to_string(span(rng)), std::string(1, char('A' + label(rng)))});
    return out;
  };
  for (int round = 0; round < 1000; ++round) {
    const auto m = single(draw(count(rng)), draw(count(rng)));
    const double f1 = categorization_f1(m), loc = localization_accuracy(m), joint = joint_score(m);
    ASSERT_LE(joint, loc) << "round " << round;
    for (double v : {f1, loc, joint}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

}  // namespace
}  // namespace compass::eval
