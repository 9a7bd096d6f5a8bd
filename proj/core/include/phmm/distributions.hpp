#pragma once

#include <Eigen/Core>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace phmm {

// Floor applied to every sd / log-sd (and covariance diagonal) so emissions
// never collapse onto a point mass.
inline constexpr double kMinScale = 1e-6;

struct Normal {
  double mean = 0.0;
  double sd = 1.0;
};

// Parameterized by mean and sd; evaluated through shape/rate.
struct Gamma {
  double mean = 1.0;
  double sd = 1.0;
};

struct LogNormal {
  double log_mean = 0.0;
  double log_sd = 1.0;
};

struct MultivariateLogNormal {
  Eigen::VectorXd log_mean;
  Eigen::MatrixXd log_cov;
};

using Emission = std::variant<Normal, Gamma, LogNormal, MultivariateLogNormal>;

enum class Family { kNormal, kGamma, kLogNormal, kMultivariateLogNormal };

Family family_of(const Emission& e);
std::string_view family_name(Family f);
Family parse_family(std::string_view name);
int dimension(const Emission& e);

struct ShapeRate {
  double shape;
  double rate;
};

ShapeRate gamma_mean_sd_to_shape_rate(double mean, double sd);

// Throws InvalidParameter for non-finite values, scales <= 0, or a covariance
// that is not symmetric positive definite.
void validate(const Emission& e);

// Emission with its normalizing constants and Cholesky factor precomputed.
// Cheap to copy; evaluating many points against one state should go through
// this rather than the free log_density().
class PreparedEmission {
 public:
  explicit PreparedEmission(Emission e);

  const Emission& emission() const { return emission_; }
  int dimension() const { return dim_; }

  // ln f(x). -inf outside the support, never NaN for finite x.
  double log_density(std::span<const double> x) const;

  // Cholesky factor of the log-scale covariance (MultivariateLogNormal only).
  const Eigen::MatrixXd& cholesky() const { return chol_; }

 private:
  Emission emission_;
  int dim_ = 1;
  double constant_ = 0.0;  // additive normalizing term
  double shape_ = 0.0;
  double rate_ = 0.0;
  Eigen::MatrixXd chol_;
};

double log_density(const Emission& e, std::span<const double> x);
double log_density(const Emission& e, double x);

// One draw; vector length equals dimension(e).
std::vector<double> sample(const Emission& e, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Labels

// 0-based state index, or nullopt for an unlabelled index.
using Label = std::optional<int>;

// Labels equal the hidden state with certainty.
struct PerfectLabels {};

// beta(i, z) = P(Z = z | X = i); rows sum to one.
struct CategoricalLabels {
  Eigen::MatrixXd beta;
};

using LabelModel = std::variant<PerfectLabels, CategoricalLabels>;

void validate(const LabelModel& model, int n_states);

// ln g^{(state)}(z). Unlabelled indices contribute 0 under every model.
double label_log_mass(const LabelModel& model, int state, Label z, int n_states);

// ---------------------------------------------------------------------------
// Product of independent components per state

enum class MissingPolicy {
  kSkip,   // NaN feature values contribute a density factor of one
  kError,  // NaN feature values are rejected
};

struct EmissionComponent {
  std::vector<std::string> features;
  std::vector<int> columns;  // indices into EmissionModel::features()
  Family family = Family::kNormal;
};

// Row-major T x F block of feature values; NaN marks a missing value.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class EmissionModel {
 public:
  EmissionModel() = default;

  // per_state[i][c] is the family of component c in state i. Every state
  // carries the same component list.
  EmissionModel(std::vector<std::string> features,
                std::vector<EmissionComponent> components,
                std::vector<std::vector<Emission>> per_state,
                MissingPolicy missing = MissingPolicy::kSkip);

  int n_states() const { return static_cast<int>(per_state_.size()); }
  int n_components() const { return static_cast<int>(components_.size()); }
  int n_features() const { return static_cast<int>(features_.size()); }

  const std::vector<std::string>& features() const { return features_; }
  const std::vector<EmissionComponent>& components() const { return components_; }
  const Emission& emission(int state, int component) const {
    return per_state_[state][component];
  }
  const std::vector<std::vector<Emission>>& per_state() const { return per_state_; }
  MissingPolicy missing_policy() const { return missing_; }

  void set_emission(int state, int component, Emission e);

  // T x N matrix of ln f^{(i)}(y_t), summed over components.
  Eigen::MatrixXd log_density_matrix(const FeatureMatrix& y) const;

 private:
  std::vector<std::string> features_;
  std::vector<EmissionComponent> components_;
  std::vector<std::vector<Emission>> per_state_;
  MissingPolicy missing_ = MissingPolicy::kSkip;
};

}  // namespace phmm
