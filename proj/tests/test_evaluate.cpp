#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "phmm/error.hpp"
#include "phmm/evaluate.hpp"
#include "phmm/simulate.hpp"
#include "support/instances.hpp"

namespace phmm {
namespace {

using test::Rng;

LabeledSeries labelled_at(const std::vector<int>& idx, int T) {
  Rng rng(1);
  auto s = test::random_series(rng, 2, T, 0.0, 0.0, "u");
  for (int t : idx) s.labels[t] = 0;
  return s;
}

// --- sub-profiles -------------------------------------------------------------------

TEST(Subprofiles, CutsBetweenTheMiddleLabels) {
  const auto s = labelled_at({1, 8}, 10);  // labels at t = 2 and 9 (1-based)
  std::set<int> cuts;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [a, b] = split_subprofiles(s, seed);
    EXPECT_EQ(a.label_count(), 1);
    EXPECT_EQ(b.label_count(), 1);
    EXPECT_EQ(a.length() + b.length(), 10);
    EXPECT_EQ(a.id, "u/a");
    EXPECT_EQ(b.id, "u/b");
    EXPECT_EQ(b.features.row(0), s.features.row(a.length()));
    cuts.insert(a.length());
  }
  // First part ends anywhere in (2, 9] in 1-based terms: lengths 2..8.
  EXPECT_EQ(cuts, (std::set<int>{2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(split_subprofiles(s, 42).first.length(), split_subprofiles(s, 42).first.length());
}

TEST(Subprofiles, OddCountsAndErrors) {
  const auto [a, b] = split_subprofiles(labelled_at({0, 3, 4}, 6), 3);
  EXPECT_EQ(a.label_count(), 2);
  EXPECT_EQ(b.label_count(), 1);
  EXPECT_THROW(split_subprofiles(labelled_at({}, 6), 1), CannotSplit);
  EXPECT_THROW(split_subprofiles(labelled_at({2}, 6), 1), CannotSplit);
}

TEST(Subprofiles, CaseStudyOneGivesTwentyTwoFolds) {
  const auto p = make_preset("cs1", 1);
  const auto data = simulate_phmm(p.scenario).data;
  const auto sub = subprofile_dataset(data, 9);
  EXPECT_EQ(sub.series.size(), 22u);
  EXPECT_EQ(sub.total_length(), data.total_length());
  EXPECT_EQ(sub.total_labels(), 106);
  const auto plan = subprofile_plan(sub, 9);
  EXPECT_EQ(plan.size(), 22);
  EXPECT_NO_THROW(plan.validate(sub));
}

// --- stratified folds -----------------------------------------------------------------

std::vector<OutcomeUnit> units(int pos, int neg) {
  std::vector<OutcomeUnit> u;
  for (int k = 0; k < pos; ++k) u.push_back({"p" + std::to_string(k), true});
  for (int k = 0; k < neg; ++k) u.push_back({"n" + std::to_string(k), false});
  return u;
}

TEST(StratifiedFolds, BalancedPartition) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = make_stratified_folds(units(7, 19), 4, seed);
    ASSERT_EQ(plan.size(), 4);
    std::multiset<std::string> seen;
    int min_size = 100, max_size = 0;
    for (const auto& f : plan.folds) {
      int pos = 0;
      for (const auto& id : f) {
        seen.insert(id);
        pos += id[0] == 'p';
      }
      const int neg = static_cast<int>(f.size()) - pos;
      EXPECT_TRUE(pos == 1 || pos == 2) << pos;
      EXPECT_TRUE(neg == 4 || neg == 5) << neg;
      min_size = std::min<int>(min_size, f.size());
      max_size = std::max<int>(max_size, f.size());
    }
    EXPECT_EQ(seen.size(), 26u);
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 26u);
    EXPECT_LE(max_size - min_size, 1);
  }
}

TEST(StratifiedFolds, DeterministicAndValidated) {
  EXPECT_EQ(make_stratified_folds(units(7, 19), 4, 3).folds, make_stratified_folds(units(7, 19), 4, 3).folds);
  EXPECT_NE(make_stratified_folds(units(7, 19), 4, 3).folds, make_stratified_folds(units(7, 19), 4, 4).folds);
  EXPECT_THROW(make_stratified_folds(units(7, 19), 1, 3), InvalidParameter);
  EXPECT_THROW(make_stratified_folds(units(2, 1), 4, 3), InvalidParameter);
  EXPECT_THROW(make_stratified_folds(units(0, 5), 2, 3), InvalidParameter);
}

TEST(FoldPlan, ValidateRejectsBadPlans) {
  Rng rng(2);
  Dataset d{{"x", "y"}, {test::random_series(rng, 2, 4, 0, 0, "a"), test::random_series(rng, 2, 4, 0, 0, "b")}};
  EXPECT_NO_THROW((FoldPlan{{{"a"}, {"b"}}}.validate(d)));
  EXPECT_THROW((FoldPlan{{{"a"}, {}}}.validate(d)), InvalidParameter);
  EXPECT_THROW((FoldPlan{{{"a"}, {"a"}}}.validate(d)), InvalidParameter);
  EXPECT_THROW((FoldPlan{{{"a"}, {"c"}}}.validate(d)), InvalidParameter);
}

// --- cross-validation ---------------------------------------------------------------

class SmallCv : public ::testing::Test {
 protected:
  void SetUp() override {
    preset_ = make_preset("cs1", 3);
    preset_.scenario.lengths = {120, 110, 130, 100};
    preset_.scenario.label_indices = {{3, 30, 60, 90, 110}, {5, 50, 100}, {10, 40, 80, 120}, {20, 70}};
    data_ = simulate_phmm(preset_.scenario).data;
    opts_.fit.restarts = 2;
    opts_.fit.seed = 4;
  }
  Preset preset_;
  Dataset data_;
  CvOptions opts_;
};

TEST_F(SmallCv, CoversEveryHeldOutIndexOnceWithoutLabels) {
  const FoldPlan plan{{{"whale001", "whale002"}, {"whale003", "whale004"}}};
  const auto cv = cross_validate(preset_.spec, data_, 0.5, plan, opts_);
  ASSERT_EQ(cv.units.size(), 4u);
  for (std::size_t u = 0; u < 4; ++u) {
    EXPECT_EQ(cv.units[u].id, data_.series[u].id);
    EXPECT_EQ(cv.units[u].decoding.posterior.rows(), data_.series[u].length());
    EXPECT_EQ(cv.units[u].truth, data_.series[u].labels);
  }
  EXPECT_EQ(cv.units[0].fold, 0);
  EXPECT_EQ(cv.units[3].fold, 1);
  // Labels are not used at decoding time: a labelled index is not forced.
  int unforced = 0;
  for (const auto& u : cv.units) {
    for (std::size_t t = 0; t < u.truth.size(); ++t) {
      if (u.truth[t] && u.decoding.posterior(t, *u.truth[t]) < 1.0 - 1e-9) ++unforced;
    }
  }
  EXPECT_GT(unforced, 0);
}

TEST_F(SmallCv, TrainingInputIgnoresHeldOutLabels) {
  const FoldPlan plan{{{"whale001"}, {"whale002", "whale003"}}};
  Dataset stripped = data_;
  stripped.series[0] = stripped.series[0].without_labels();
  const auto a = training_set(data_, plan, 0);
  const auto b = training_set(stripped, plan, 0);
  ASSERT_EQ(a.series.size(), 3u);
  for (std::size_t s = 0; s < a.series.size(); ++s) {
    EXPECT_EQ(a.series[s].id, b.series[s].id);
    EXPECT_EQ(a.series[s].labels, b.series[s].labels);
    EXPECT_TRUE(a.series[s].features.cwiseEqual(b.series[s].features).all());
  }
  // And the cross-validated decodings agree bit for bit.
  const auto ca = cross_validate(preset_.spec, data_, 0.3, plan, opts_);
  const auto cb = cross_validate(preset_.spec, stripped, 0.3, plan, opts_);
  EXPECT_EQ(ca.units[0].decoding.posterior, cb.units[0].decoding.posterior);
}

TEST_F(SmallCv, AlphaGridGivesOneReportPerAlpha) {
  const auto sub = subprofile_dataset(data_, 1);
  const auto plan = subprofile_plan(sub, 1);
  opts_.fit.restarts = 1;
  opts_.threads = 2;
  MetricsReport all;
  const std::vector<double> grid = {0, 0.025, 0.049, 0.525, 1};
  for (double a : grid) all.append(state_metrics(cross_validate(preset_.spec, sub, a, plan, opts_), preset_.spec.state_names, AucMode::kPooled));
  std::set<double> alphas;
  for (const auto& r : all.rows) {
    alphas.insert(r.alpha);
    if (r.value) {
      EXPECT_GE(*r.value, 0.0);
      EXPECT_LE(*r.value, 1.0);
    }
  }
  EXPECT_EQ(alphas.size(), 5u);
  EXPECT_EQ(all.rows.size(), 5u * 3u * 3u);
}

TEST_F(SmallCv, ThreadCountDoesNotChangeResults) {
  const FoldPlan plan{{{"whale001"}, {"whale002"}, {"whale003", "whale004"}}};
  const auto a = cross_validate(preset_.spec, data_, 0.2, plan, opts_);
  opts_.threads = 3;
  const auto b = cross_validate(preset_.spec, data_, 0.2, plan, opts_);
  for (std::size_t u = 0; u < a.units.size(); ++u) EXPECT_EQ(a.units[u].decoding.posterior, b.units[u].decoding.posterior);
}

// --- metrics ----------------------------------------------------------------------

TEST(SensSpec, AllCorrect) {
  const std::vector<int> truth = {0, 1, 2, 1, 0};
  for (const auto& s : sensitivity_specificity(truth, truth, 3)) {
    EXPECT_EQ(*s.sensitivity, 1.0);
    EXPECT_EQ(*s.specificity, 1.0);
  }
}

TEST(SensSpec, ConstantPrediction) {
  const std::vector<int> truth = {0, 1, 0, 1}, pred(4, 0);
  const auto r = sensitivity_specificity(pred, truth, 2);
  EXPECT_EQ(*r[0].sensitivity, 1.0);
  EXPECT_EQ(*r[0].specificity, 0.0);
}

TEST(SensSpec, ConfusionCounts) {
  // (true -> predicted): 1->1 x4, 1->2 x1, 2->2 x3, 3->3 x2, 3->1 x2 (1-based)
  std::vector<int> truth, pred;
  auto add = [&](int t, int p, int n) {
    for (int k = 0; k < n; ++k) {
      truth.push_back(t - 1);
      pred.push_back(p - 1);
    }
  };
  add(1, 1, 4);
  add(1, 2, 1);
  add(2, 2, 3);
  add(3, 3, 2);
  add(3, 1, 2);
  const auto r = sensitivity_specificity(pred, truth, 3);
  EXPECT_EQ(*r[2].sensitivity, 0.5);
  EXPECT_EQ(*r[2].specificity, 1.0);
  EXPECT_EQ(*r[0].sensitivity, 0.8);
  EXPECT_EQ(*r[0].specificity, 5.0 / 7.0);  // 2 false positives among 7 negatives
  EXPECT_EQ(*r[1].sensitivity, 1.0);
  EXPECT_EQ(*r[1].specificity, 8.0 / 9.0);
  EXPECT_EQ(r[2].positives, 4);
  EXPECT_EQ(r[2].negatives, 8);
  // Weighted accuracy identity: (sens P + spec N) / (P + N) = one-vs-rest accuracy.
  for (int i = 0; i < 3; ++i) {
    int correct = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) correct += (truth[k] == i) == (pred[k] == i);
    EXPECT_NEAR((*r[i].sensitivity * r[i].positives + *r[i].specificity * r[i].negatives) / truth.size(),
                double(correct) / truth.size(), 1e-15);
  }
}

TEST(SensSpec, AbsentClassesAreUndefinedNotZero) {
  const std::vector<int> truth = {0, 0}, pred = {0, 1};
  const auto r = sensitivity_specificity(pred, truth, 3);
  EXPECT_FALSE(r[1].sensitivity.has_value());
  EXPECT_EQ(*r[1].specificity, 0.5);
  EXPECT_FALSE(r[0].specificity.has_value());
  EXPECT_FALSE(r[2].sensitivity.has_value());
}

double brute_force_auc(const std::vector<ScoredOutcome>& s) {
  double num = 0;
  int pairs = 0;
  for (const auto& p : s) {
    if (!p.positive) continue;
    for (const auto& n : s) {
      if (n.positive) continue;
      ++pairs;
      num += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

TEST(Auc, WorkedExamples) {
  std::vector<ScoredOutcome> s = {{0.9, true}, {0.8, true}, {0.1, false}, {0.3, false}};
  EXPECT_EQ(auc(s), 1.0);
  s = {{0.5, true}, {0.5, false}, {0.5, true}, {0.5, false}};
  EXPECT_EQ(auc(s), 0.5);
  s = {{0.8, true}, {0.4, true}, {0.6, false}, {0.2, false}};
  EXPECT_EQ(auc(s), 0.75);
  s = {{0.8, true}, {0.4, true}};
  EXPECT_THROW(auc(s), UndefinedMetric);
  EXPECT_THROW(auc(std::vector<ScoredOutcome>{}), UndefinedMetric);
}

TEST(Auc, EqualsPairwiseCountOnRandomSets) {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<ScoredOutcome> s;
    const int n = test::uniform_int(rng, 2, 60);
    for (int k = 0; k < n; ++k) {
      // Coarse scores so ties occur.
      s.push_back({std::round(test::uniform(rng, 0, 1) * 10) / 10, test::coin(rng, 0.4)});
    }
    s[0].positive = true;
    s[1].positive = false;
    EXPECT_EQ(auc(s), brute_force_auc(s));
  }
}

TEST(Auc, FlipAndMonotoneTransformIdentities) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<ScoredOutcome> s, flipped, negated, transformed;
    for (int k = 0; k < 30; ++k) {
      const double x = test::uniform(rng, -3, 3);
      const bool pos = k < 2 ? k == 0 : test::coin(rng, 0.5);
      s.push_back({x, pos});
      flipped.push_back({x, !pos});
      negated.push_back({-x, pos});
      transformed.push_back({std::exp(3 * x) + 7, pos});
    }
    EXPECT_NEAR(auc(s) + auc(flipped), 1.0, 1e-15);
    EXPECT_NEAR(auc(s) + auc(negated), 1.0, 1e-15);
    EXPECT_EQ(auc(negated), auc(flipped));
    EXPECT_EQ(auc(s), auc(transformed));
  }
}

TEST(TerminalEvent, BoundaryCasesAndBruteForce) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto gamma = test::random_transition(rng, test::random_mask(rng, 2, 0.0));
    const InitialDistribution delta(test::random_simplex(rng, 2));
    const Eigen::MatrixXd L = Eigen::MatrixXd::Random(2, 2);
    const auto d = decode(delta, gamma, L);
    const std::vector<int> all = {0, 1}, none, second = {1};
    EXPECT_NEAR(terminal_event_probability(d, all), 1.0, 1e-15);
    EXPECT_EQ(terminal_event_probability(d, none), 0.0);
    // P(X_2 = 2 | y) by summing the two paths ending in state 2.
    const double p_end2 = delta[0] * std::exp(L(0, 0)) * gamma(0, 1) * std::exp(L(1, 1)) +
                          delta[1] * std::exp(L(0, 1)) * gamma(1, 1) * std::exp(L(1, 1));
    const double total = std::exp(brute_force_likelihood(delta, gamma, L));
    EXPECT_NEAR(terminal_event_probability(d, second), p_end2 / total, 1e-12);
    EXPECT_THROW(terminal_event_probability(d, std::vector<int>{2}), InvalidParameter);
  }
}

TEST(Threshold, StrictInequality) {
  const std::vector<double> p = {0.5, 0.500001, 0.2, 1.0};
  EXPECT_EQ(classify_by_threshold(p), (std::vector<bool>{false, true, false, true}));
  EXPECT_EQ(classify_by_threshold(p, 0.1), (std::vector<bool>{true, true, true, true}));
}

TEST(EventOutcome, PositiveLabelsWin) {
  EventDefinition ev;
  ev.event_states = {3, 5};
  ev.positive_labels = {3, 5};
  ev.negative_labels = {4};
  EXPECT_EQ(unit_outcome(std::vector<Label>{0, {}, 3}, ev), true);
  EXPECT_EQ(unit_outcome(std::vector<Label>{0, {}, 4}, ev), false);
  EXPECT_EQ(unit_outcome(std::vector<Label>{0, 3, 4}, ev), true);
  EXPECT_EQ(unit_outcome(std::vector<Label>{0, {}, {}}, ev), std::nullopt);
}

TEST(Report, CsvAndTableLayout) {
  MetricsReport r;
  r.rows.push_back({0.049, "foraging", "auc", 0.955, 106});
  r.rows.push_back({0.049, "resting", "sensitivity", std::nullopt, 0});
  const auto csv = metrics_csv(r);
  EXPECT_EQ(csv,
            "alpha,target,metric,value,units\n"
            "0.049000000000000002,foraging,auc,0.95499999999999996,106\n"
            "0.049000000000000002,resting,sensitivity,,0\n");
  const auto table = metrics_table(r);
  EXPECT_NE(table.find("foraging"), std::string::npos);
  EXPECT_NE(table.find("0.9550"), std::string::npos);
}

}  // namespace
}  // namespace phmm
