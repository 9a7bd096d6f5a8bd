#include <gtest/gtest.h>

#include <cmath>

#include "phmm/error.hpp"
#include "phmm/estimate.hpp"
#include "phmm/simulate.hpp"
#include "support/gradient_cases.hpp"

namespace phmm {
namespace {

using test::Rng;

ModelSpec two_state_spec() {
  Rng rng(1);
  ModelSpec spec;
  spec.model = test::random_model(rng, 2, 0.0, false);
  Eigen::MatrixXd g(2, 2);
  g << 0.5, 0.5, 0.3, 0.7;
  spec.model.transition = TransitionMatrix(g);
  spec.model.initial = InitialDistribution(Eigen::Vector2d(0.5, 0.5));
  spec.state_names = {"a", "b"};
  return spec;
}

double max_model_difference(const PhmmModel& a, const PhmmModel& b) {
  double d = (a.initial.probs() - b.initial.probs()).cwiseAbs().maxCoeff();
  d = std::max(d, (a.transition.probs() - b.transition.probs()).cwiseAbs().maxCoeff());
  for (int i = 0; i < a.n_states(); ++i) {
    for (int c = 0; c < a.emissions.n_components(); ++c) {
      d = std::max(d, (canonical_coords(a.emissions.emission(i, c)) - canonical_coords(b.emissions.emission(i, c)))
                          .cwiseAbs()
                          .maxCoeff());
    }
  }
  if (const auto* ca = std::get_if<CategoricalLabels>(&a.labels)) {
    d = std::max(d, (ca->beta - std::get<CategoricalLabels>(b.labels).beta).cwiseAbs().maxCoeff());
  }
  return d;
}

// --- working parameterization -------------------------------------------------

TEST(Parameterization, SymmetricRowHasZeroLogit) {
  const ModelSpec spec = two_state_spec();
  const Parameterization p(spec);
  const auto x = p.to_working(spec.model);
  const auto& names = p.coordinate_names();
  // delta (.5,.5) and Gamma row 1 (.5,.5) both map to logit 0.
  int zeros = 0;
  for (int k = 0; k < p.size(); ++k) {
    if (names[k].rfind("delta[", 0) == 0 || names[k].rfind("gamma[1,", 0) == 0) {
      EXPECT_NEAR(x[k], 0.0, 1e-15) << names[k];
      ++zeros;
    }
  }
  EXPECT_EQ(zeros, 2);
}

TEST(Parameterization, ForcedRowHasNoCoordinates) {
  ModelSpec spec = two_state_spec();
  BoolMatrix mask(2, 2);
  mask << false, false, true, false;
  Eigen::MatrixXd g(2, 2);
  g << 0.6, 0.4, 0.0, 1.0;
  spec.model.transition = TransitionMatrix(g, mask);
  const Parameterization p(spec);
  const Parameterization free_p(two_state_spec());
  EXPECT_EQ(p.size(), free_p.size() - 1);
  EXPECT_TRUE(p.transition_support(1) == std::vector<int>{1});
  // Masked entries stay exactly zero under arbitrary working vectors.
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd x = Eigen::VectorXd::Random(p.size()) * 20;
    const auto m = p.from_working(x);
    EXPECT_EQ(m.transition(1, 0), 0.0);
    EXPECT_EQ(m.transition(1, 1), 1.0);
    EXPECT_NEAR(m.transition.probs().row(0).sum(), 1.0, 1e-12);
  }
}

TEST(Parameterization, RoundTripsRandomConstrainedModels) {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const ModelSpec spec = test::random_constrained_spec(rng);
    const Parameterization p(spec);
    const auto back = p.from_working(p.to_working(spec.model));
    EXPECT_LT(max_model_difference(back, spec.model), 1e-10);
    // And the other direction from a random working point.
    Eigen::VectorXd x = Eigen::VectorXd::Random(p.size()) * 3;
    const auto m = p.from_working(x);
    EXPECT_LT((p.to_working(m) - x).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Parameterization, FixedInitialHasNoCoordinates) {
  ModelSpec spec = two_state_spec();
  spec.model.initial = InitialDistribution(Eigen::Vector2d(1.0, 0.0));
  spec.constraints.initial_fixed = true;
  const Parameterization p(spec);
  EXPECT_EQ(p.size(), Parameterization(two_state_spec()).size() - 1);
  for (const auto& n : p.coordinate_names()) EXPECT_NE(n.rfind("delta[", 0), 0u);
  const auto m = p.from_working(Eigen::VectorXd::Random(p.size()));
  EXPECT_EQ(m.initial[0], 1.0);
  EXPECT_EQ(m.initial[1], 0.0);
}

TEST(Parameterization, RejectsModelsBreakingConstraints) {
  ModelSpec spec = two_state_spec();
  const ParamRef ref{0, 0, ParamKind::kLocation, 0};
  spec.constraints.fixed.push_back({ref, 0.0});
  set_param(spec.model.emissions, ref, 0.0);
  const Parameterization p(spec);
  PhmmModel moved = spec.model;
  set_param(moved.emissions, ref, 0.5);
  EXPECT_THROW(p.to_working(moved), ConstraintViolation);
  EXPECT_FALSE(p.working_index(ref).has_value());
}

TEST(Parameterization, SharedValuesAreBitwiseEqual) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const ModelSpec spec = test::random_constrained_spec(rng);
    const Parameterization p(spec);
    const auto m = p.from_working(Eigen::VectorXd::Random(p.size()) * 2);
    for (const auto& group : spec.constraints.share_groups) {
      for (const auto& ref : group) {
        if (ref.kind == ParamKind::kCovariance) continue;
        EXPECT_EQ(get_param(m.emissions, ref), get_param(m.emissions, group.front()));
      }
    }
  }
}

TEST(Constraints, ValidationCatchesConflicts) {
  ModelSpec spec = two_state_spec();
  const ParamRef ref{0, 0, ParamKind::kLocation, 0};
  spec.constraints.fixed.push_back({ref, get_param(spec.model.emissions, ref)});
  spec.constraints.share_groups.push_back({ref, {1, 0, ParamKind::kLocation, 0}});
  EXPECT_THROW(validate(spec.constraints, spec.model), ConstraintViolation);
  spec.constraints.share_groups = {{}};
  EXPECT_THROW(validate(spec.constraints, spec.model), ConstraintViolation);
  spec.constraints.share_groups = {{{5, 0, ParamKind::kLocation, 0}}};
  EXPECT_THROW(validate(spec.constraints, spec.model), ConstraintViolation);
}

// --- gradient ------------------------------------------------------------------

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(5);
  for (int rep = 0; rep < 60; ++rep) {
    const auto gc = test::random_gradient_case(rng);
    const auto cmp = test::compare_gradient(gc);
    EXPECT_LT(cmp.max_error, 1e-4) << "case " << rep << "\nanalytic " << cmp.analytic.transpose()
                                   << "\nnumeric  " << cmp.numeric.transpose();
  }
}

TEST(Gradient, CoordinateWithoutTermsHasZeroDerivative) {
  // State b's emissions never enter when every index is labelled a and the
  // chain cannot leave a.
  ModelSpec spec = two_state_spec();
  BoolMatrix mask(2, 2);
  mask << false, true, false, false;
  Eigen::MatrixXd g(2, 2);
  g << 1.0, 0.0, 0.3, 0.7;
  spec.model.transition = TransitionMatrix(g, mask);
  spec.model.initial = InitialDistribution(Eigen::Vector2d(1.0, 0.0));
  spec.constraints.initial_fixed = true;
  Rng rng(6);
  Dataset data{{"x", "y"}, {test::random_series(rng, 2, 6, 0.0, 0.0)}};
  for (auto& z : data.series[0].labels) z = 0;
  const Parameterization p(spec);
  const WeightedObjective f(p, data, 0.5);
  Eigen::VectorXd grad;
  f(p.to_working(spec.model), &grad);
  for (int c = 0; c < 2; ++c) {
    for (const auto& ref : component_params(spec.model.emissions, 1, c)) {
      EXPECT_EQ(grad[*p.working_index(ref)], 0.0) << to_string(ref, spec.model.emissions);
    }
  }
}

// --- optimizer -------------------------------------------------------------------

TEST(Optimizer, MaximizesConcaveFunctions) {
  const Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    if (g) {
      g->resize(2);
      (*g)[0] = 2 * a + 400 * x[0] * b;
      (*g)[1] = -200 * b;
    }
    return -(a * a + 100 * b * b);
  };
  const auto r = maximize_bfgs(rosen, Eigen::Vector2d(-1.2, 1.0));
  EXPECT_TRUE(r.converged());
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
  EXPECT_GE(r.value, r.initial_value);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_GE(r.trace[k], r.trace[k - 1]);
}

TEST(Optimizer, BacksOffInfeasibleRegionsAndRejectsInfeasibleStart) {
  // log barrier: -inf for x <= 0, maximum at x = 1.
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (x[0] <= 0) return -std::numeric_limits<double>::infinity();
    if (g) *g = Eigen::VectorXd::Constant(1, 1.0 / x[0] - 1.0);
    return std::log(x[0]) - x[0];
  };
  const auto r = maximize_bfgs(f, Eigen::VectorXd::Constant(1, 0.01));
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_THROW(maximize_bfgs(f, Eigen::VectorXd::Constant(1, -1.0)), InvalidParameter);
}

// --- fitting -----------------------------------------------------------------------

class Cs1Fit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    preset_ = new Preset(make_preset("cs1", 1));
    data_ = new Dataset(simulate_phmm(preset_->scenario).data);
  }
  static void TearDownTestSuite() {
    delete preset_;
    delete data_;
  }
  static Preset* preset_;
  static Dataset* data_;
};
Preset* Cs1Fit::preset_ = nullptr;
Dataset* Cs1Fit::data_ = nullptr;

TEST_F(Cs1Fit, RecoversLogMeansWithinThreeStandardErrors) {
  FitOptions opt;
  opt.restarts = 3;
  opt.seed = 11;
  const auto r = fit(preset_->spec, *data_, 1.0, opt);
  EXPECT_TRUE(r.converged());
  const auto ses = emission_standard_errors(preset_->spec, *data_, 1.0, r.model);
  int checked = 0;
  for (const auto& e : ses) {
    if (e.ref.kind != ParamKind::kLocation) continue;
    const double truth = get_param(preset_->spec.model.emissions, e.ref);
    EXPECT_LT(std::abs(e.value - truth), 3 * e.standard_error) << to_string(e.ref, preset_->spec.model.emissions);
    ++checked;
  }
  EXPECT_EQ(checked, 6);
}

TEST_F(Cs1Fit, MoreRestartsNeverDoWorse) {
  FitOptions one;
  one.restarts = 1;
  one.seed = 5;
  FitOptions four = one;
  four.restarts = 4;
  four.threads = 2;
  const auto a = fit(preset_->spec, *data_, 0.049, one);
  const auto b = fit(preset_->spec, *data_, 0.049, four);
  EXPECT_GE(b.objective, a.objective);
  // Restart 0 is the same computation in both runs.
  EXPECT_EQ(a.restarts[0].objective, b.restarts[0].objective);
  EXPECT_EQ(a.restarts[0].seed, b.restarts[0].seed);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& rr : b.restarts) {
    EXPECT_TRUE(std::isfinite(rr.objective));
    EXPECT_GE(rr.objective, rr.initial_objective);
    for (std::size_t k = 1; k < rr.trace.size(); ++k) EXPECT_GE(rr.trace[k], rr.trace[k - 1]);
    best = std::max(best, rr.objective);
  }
  EXPECT_EQ(b.objective, best);
  EXPECT_EQ(b.restarts[b.best_restart].objective, best);
}

TEST_F(Cs1Fit, DeterministicAcrossThreadCounts) {
  FitOptions opt;
  opt.restarts = 3;
  opt.seed = 9;
  const auto a = fit(preset_->spec, *data_, 0.049, opt);
  opt.threads = 3;
  const auto b = fit(preset_->spec, *data_, 0.049, opt);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.working, b.working);
  EXPECT_EQ(a.best_restart, b.best_restart);
}

TEST(Fit, Cs2OutputsHonourConstraints) {
  const auto p = make_preset("cs2", 2);
  auto data = simulate_phmm(p.scenario).data;
  data.series.resize(30);
  FitOptions opt;
  opt.restarts = 2;
  opt.max_iterations = 60;
  const auto r = fit(p.spec, data, 0.01, opt);
  const auto& g = r.model.transition;
  for (int i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g.probs().row(i).sum(), 1.0, 1e-12);
    for (int j = 0; j < g.size(); ++j) {
      if (p.spec.model.transition.is_structural_zero(i, j)) {
        EXPECT_EQ(g(i, j), 0.0);
      }
    }
  }
  EXPECT_EQ(r.model.initial.probs(), p.spec.model.initial.probs());
  for (const auto& fx : p.spec.constraints.fixed) EXPECT_EQ(get_param(r.model.emissions, fx.ref), fx.value);
  for (const auto& group : p.spec.constraints.share_groups) {
    for (const auto& ref : group) EXPECT_EQ(get_param(r.model.emissions, ref), get_param(r.model.emissions, group[0]));
  }
}

TEST(Fit, AlphaZeroWithUnlabelledFreeStateIsRejected) {
  auto p = make_preset("cs1", 1);
  auto data = simulate_phmm(p.scenario).data;
  for (auto& s : data.series) {
    for (auto& z : s.labels) {
      if (z && *z == 2) z.reset();
    }
  }
  EXPECT_THROW(fit(p.spec, data, 0.0), IdentifiabilityError);
  try {
    check_identifiability(p.spec, data, 0.0);
  } catch (const IdentifiabilityError& e) {
    EXPECT_NE(std::string(e.what()).find("foraging"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(check_identifiability(p.spec, data, 0.01));
  // Tying the state to a labelled one makes it identifiable.
  p.spec.constraints.tie_states(p.spec.model.emissions, 1, 2);
  for (int c = 0; c < p.spec.model.emissions.n_components(); ++c) {
    p.spec.model.emissions.set_emission(2, c, p.spec.model.emissions.emission(1, c));
  }
  EXPECT_NO_THROW(check_identifiability(p.spec, data, 0.0));
}

TEST(Fit, RejectsBadInputs) {
  const auto p = make_preset("cs1", 1);
  auto data = simulate_phmm(p.scenario).data;
  EXPECT_THROW(fit(p.spec, data, 1.5), InvalidParameter);
  Dataset wrong = data;
  wrong.feature_names = {"duration", "max_depth"};
  EXPECT_THROW(fit(p.spec, wrong, 0.5), ShapeError);
}

TEST(Fit, RestartSeedsAreStable) {
  EXPECT_EQ(restart_seed(7, 3), restart_seed(7, 3));
  EXPECT_NE(restart_seed(7, 3), restart_seed(7, 4));
  EXPECT_NE(restart_seed(7, 3), restart_seed(8, 3));
}

}  // namespace
}  // namespace phmm
