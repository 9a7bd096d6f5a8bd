#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "phmm/distributions.hpp"
#include "phmm/error.hpp"
#include "support/instances.hpp"

namespace phmm {
namespace {

using test::kInf;
using test::Rng;

const double kLogInvSqrt2Pi = -0.5 * std::log(2.0 * std::numbers::pi);

// Composite Simpson over [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return s * h / 3.0;
}

TEST(LogDensity, StandardNormalAtZero) {
  EXPECT_NEAR(log_density(Normal{0, 1}, 0.0), kLogInvSqrt2Pi, 1e-15);
  EXPECT_NEAR(log_density(Normal{0, 1}, 0.0), -0.9189385332046727, 1e-15);
}

TEST(LogDensity, GammaAtSupportBoundary) {
  EXPECT_EQ(log_density(Gamma{2, 1}, 0.0), -kInf);
  EXPECT_EQ(log_density(Gamma{2, 1}, -1.0), -kInf);
}

TEST(LogDensity, LogNormalByChangeOfVariables) {
  // f_X(1) = f_N(ln 1) / 1
  EXPECT_NEAR(log_density(LogNormal{0, 1}, 1.0), kLogInvSqrt2Pi, 1e-15);
  EXPECT_EQ(log_density(LogNormal{0, 1}, 0.0), -kInf);
  for (double x : {0.1, 0.7, 2.5, 40.0}) {
    EXPECT_NEAR(log_density(LogNormal{0.3, 0.8}, x), test::lognormal_logpdf(x, 0.3, 0.8), 1e-12);
  }
}

TEST(LogDensity, MatchesTextbookFormulas) {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const double m = test::uniform(rng, -3, 3), s = test::uniform(rng, 0.1, 3);
    const double x = test::uniform(rng, -5, 5);
    EXPECT_NEAR(log_density(Normal{m, s}, x), test::normal_logpdf(x, m, s), 1e-12);
    const double gm = test::uniform(rng, 0.2, 4), gs = test::uniform(rng, 0.2, 3);
    const double gx = test::uniform(rng, 0.01, 8);
    EXPECT_NEAR(log_density(Gamma{gm, gs}, gx), test::gamma_logpdf(gx, gm, gs), 1e-10);
  }
}

TEST(LogDensity, RejectsInvalidParameters) {
  EXPECT_THROW(log_density(Normal{0, 0}, 0.0), InvalidParameter);
  EXPECT_THROW(log_density(Normal{0, -1}, 0.0), InvalidParameter);
  EXPECT_THROW(log_density(Normal{std::nan(""), 1}, 0.0), InvalidParameter);
  EXPECT_THROW(log_density(Gamma{-1, 1}, 1.0), InvalidParameter);
  EXPECT_THROW(log_density(LogNormal{0, kInf}, 1.0), InvalidParameter);
  MultivariateLogNormal bad{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Zero()};
  bad.log_cov << 1, 2, 2, 1;  // not positive definite
  EXPECT_THROW(validate(Emission{bad}), InvalidParameter);
}

TEST(LogDensity, NeverNaNOnInteriorGrid) {
  for (double x = 1e-4; x < 30; x *= 1.3) {
    EXPECT_TRUE(std::isfinite(log_density(Gamma{0.5, 2.0}, x)));
    EXPECT_TRUE(std::isfinite(log_density(Gamma{5, 0.5}, x)));
    EXPECT_TRUE(std::isfinite(log_density(LogNormal{1, 0.1}, x)));
    EXPECT_TRUE(std::isfinite(log_density(Normal{0, 1e-3}, x)) ||
                log_density(Normal{0, 1e-3}, x) == -kInf);
    EXPECT_FALSE(std::isnan(log_density(Normal{0, 1e-3}, x)));
  }
}

TEST(ShapeRate, WorkedConversions) {
  auto sr = gamma_mean_sd_to_shape_rate(2, 1);
  EXPECT_DOUBLE_EQ(sr.shape, 4);
  EXPECT_DOUBLE_EQ(sr.rate, 2);
  sr = gamma_mean_sd_to_shape_rate(1, 1);
  EXPECT_DOUBLE_EQ(sr.shape, 1);
  EXPECT_DOUBLE_EQ(sr.rate, 1);
  sr = gamma_mean_sd_to_shape_rate(3, 0.5);
  EXPECT_DOUBLE_EQ(sr.shape, 36);
  EXPECT_DOUBLE_EQ(sr.rate, 12);
  EXPECT_THROW(gamma_mean_sd_to_shape_rate(0, 1), InvalidParameter);
  EXPECT_THROW(gamma_mean_sd_to_shape_rate(1, -1), InvalidParameter);
}

TEST(ShapeRate, RoundTripsMoments) {
  Rng rng(5);
  for (int rep = 0; rep < 500; ++rep) {
    const double m = test::uniform(rng, 1e-3, 50), s = test::uniform(rng, 1e-3, 50);
    const auto [k, r] = gamma_mean_sd_to_shape_rate(m, s);
    EXPECT_NEAR(k / r, m, 1e-12 * m);
    EXPECT_NEAR(std::sqrt(k) / r, s, 1e-12 * s);
  }
}

TEST(LabelLogMass, PerfectAndCategorical) {
  const LabelModel perfect = PerfectLabels{};
  EXPECT_EQ(label_log_mass(perfect, 1, std::nullopt, 3), 0.0);
  EXPECT_EQ(label_log_mass(perfect, 1, 1, 3), 0.0);
  EXPECT_EQ(label_log_mass(perfect, 1, 0, 3), -kInf);

  Eigen::MatrixXd beta(2, 2);
  beta << 0.9, 0.1, 0.3, 0.7;
  const LabelModel cat = CategoricalLabels{beta};
  EXPECT_DOUBLE_EQ(label_log_mass(cat, 0, 1, 2), std::log(0.1));
  EXPECT_EQ(label_log_mass(cat, 0, std::nullopt, 2), 0.0);
  EXPECT_THROW(label_log_mass(cat, 0, 2, 2), InvalidLabel);
  EXPECT_THROW(label_log_mass(perfect, 0, -1, 2), InvalidLabel);
}

TEST(LabelLogMass, PerfectMassIsZeroOrOne) {
  for (int n = 1; n <= 4; ++n) {
    for (int i = 0; i < n; ++i) {
      for (int z = -1; z < n; ++z) {
        const Label lab = z < 0 ? Label() : Label(z);
        const double p = std::exp(label_log_mass(PerfectLabels{}, i, lab, n));
        EXPECT_TRUE(p == 0.0 || p == 1.0);
      }
    }
  }
}

TEST(LabelModel, CategoricalRowsMustBeDistributions) {
  Eigen::MatrixXd beta(2, 2);
  beta << 0.9, 0.2, 0.5, 0.5;
  EXPECT_THROW(validate(LabelModel{CategoricalLabels{beta}}, 2), InvalidParameter);
  beta << 1.1, -0.1, 0.5, 0.5;
  EXPECT_THROW(validate(LabelModel{CategoricalLabels{beta}}, 2), InvalidParameter);
  EXPECT_THROW(validate(LabelModel{CategoricalLabels{Eigen::MatrixXd::Constant(3, 3, 1.0 / 3)}}, 2),
               InvalidParameter);
}

// --- integration to one -----------------------------------------------------

TEST(Normalization, UnivariateFamiliesIntegrateToOne) {
  const Normal n{1.5, 0.7};
  EXPECT_NEAR(simpson([&](double x) { return std::exp(log_density(n, x)); }, 1.5 - 8 * 0.7,
                      1.5 + 8 * 0.7, 4000),
              1.0, 1e-6);
  // Lognormal and gamma are integrated in u = ln x so the grid covers 8 sds
  // of the log scale and the mass near zero.
  const LogNormal ln{0.4, 0.6};
  EXPECT_NEAR(simpson([&](double u) { return std::exp(log_density(ln, std::exp(u)) + u); },
                      0.4 - 8 * 0.6, 0.4 + 8 * 0.6, 4000),
              1.0, 1e-6);
  for (const Gamma g : {Gamma{2, 1}, Gamma{1, 1}, Gamma{0.5, 1}, Gamma{3, 0.5}}) {
    EXPECT_NEAR(simpson([&](double u) { return std::exp(log_density(g, std::exp(u)) + u); },
                        -250.0, std::log(g.mean + 60 * g.sd), 200000),
                1.0, 1e-6)
        << g.mean << " " << g.sd;
  }
}

TEST(Normalization, BivariateLogNormalIntegratesToOne) {
  MultivariateLogNormal e{Eigen::Vector2d(1.0, 3.8), Eigen::Matrix2d()};
  e.log_cov << 0.35 * 0.35, 0.6 * 0.35 * 0.3, 0.6 * 0.35 * 0.3, 0.3 * 0.3;
  const PreparedEmission pe(e);
  const double s1 = 0.35, s2 = 0.3;
  const double total = simpson(
      [&](double u1) {
        return simpson(
            [&](double u2) {
              const double x[2] = {std::exp(u1), std::exp(u2)};
              return std::exp(pe.log_density(x) + u1 + u2);
            },
            3.8 - 8 * s2, 3.8 + 8 * s2, 400);
      },
      1.0 - 8 * s1, 1.0 + 8 * s1, 400);
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(MultivariateLogNormal, EqualsNormalOfLogTimesJacobian) {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = test::uniform_int(rng, 2, 4);
    Eigen::MatrixXd A = Eigen::MatrixXd::Random(d, d);
    Eigen::MatrixXd cov = A * A.transpose() + 0.3 * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd mu = Eigen::VectorXd::Random(d);
    const MultivariateLogNormal e{mu, cov};
    Eigen::VectorXd x(d);
    for (int k = 0; k < d; ++k) x[k] = test::uniform(rng, 0.05, 5);
    // Independent: explicit inverse and determinant.
    const Eigen::VectorXd u = x.array().log().matrix() - mu;
    const double quad = u.dot(cov.inverse() * u);
    const double expected = -0.5 * d * std::log(2 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) -
                            0.5 * quad - x.array().log().sum();
    EXPECT_NEAR(log_density(e, std::span<const double>(x.data(), d)), expected, 1e-9);
  }
  const MultivariateLogNormal e{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
  const double outside[2] = {1.0, 0.0};
  EXPECT_EQ(log_density(e, outside), -kInf);
}

// --- sampling ---------------------------------------------------------------

TEST(Sample, MomentsWithinThreeStandardErrors) {
  const int n = 100000;
  std::mt19937_64 rng(2024);
  auto check = [&](const Emission& e, double mean, double sd) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += sample(e, rng)[0];
    EXPECT_NEAR(s / n, mean, 3 * sd / std::sqrt(n)) << family_name(family_of(e));
  };
  check(Normal{5, kMinScale}, 5, kMinScale);
  check(Normal{-1, 2}, -1, 2);
  check(Gamma{2, 1}, 2, 1);
  check(LogNormal{0.2, 0.5}, std::exp(0.2 + 0.125), std::sqrt((std::exp(0.25) - 1) * std::exp(0.4 + 0.25)));
}

TEST(Sample, DeterministicGivenSeed) {
  std::mt19937_64 a(99), b(99);
  MultivariateLogNormal mv{Eigen::Vector2d(0, 1), Eigen::Matrix2d::Identity()};
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(sample(Gamma{2, 1}, a), sample(Gamma{2, 1}, b));
    EXPECT_EQ(sample(mv, a), sample(mv, b));
  }
}

// --- product emissions -------------------------------------------------------

TEST(EmissionModel, SumsComponentsAndSkipsMissing) {
  Rng rng(3);
  const EmissionModel em = test::random_emissions(rng, 2);
  FeatureMatrix y(3, 2);
  y << 0.5, 1.2, test::kNaN, 2.0, test::kNaN, test::kNaN;
  const Eigen::MatrixXd L = em.log_density_matrix(y);
  for (int t = 0; t < 3; ++t) {
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(L(t, i), test::oracle_emission_log(em, i, y, t), 1e-12);
  }
  EXPECT_EQ(L(2, 0), 0.0);

  const EmissionModel strict(em.features(), em.components(), em.per_state(), MissingPolicy::kError);
  EXPECT_THROW(strict.log_density_matrix(y), InvalidParameter);
}

TEST(EmissionModel, RejectsInconsistentLayouts) {
  std::vector<EmissionComponent> comps = {{{"x"}, {0}, Family::kNormal}};
  EXPECT_THROW(EmissionModel({"x"}, comps, {{Gamma{1, 1}}}), ShapeError);
  EXPECT_THROW(EmissionModel({"x"}, comps, {{Normal{}, Normal{}}}), ShapeError);
  std::vector<EmissionComponent> bad_col = {{{"x"}, {3}, Family::kNormal}};
  EXPECT_THROW(EmissionModel({"x"}, bad_col, {{Normal{}}}), ShapeError);
  FeatureMatrix wrong(2, 3);
  wrong.setZero();
  const EmissionModel ok({"x"}, comps, {{Normal{}}});
  EXPECT_THROW(ok.log_density_matrix(wrong), ShapeError);
}

}  // namespace
}  // namespace phmm
