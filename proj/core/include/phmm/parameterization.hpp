#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phmm/constraints.hpp"
#include "phmm/weighting.hpp"

namespace phmm {

// A model together with what may vary when it is fitted. The values held in
// `model` matter only where they are fixed; everything else is a starting
// point that fit() replaces with random draws.
struct ModelSpec {
  PhmmModel model;
  ConstraintSet constraints;
  std::vector<std::string> state_names;
  std::optional<double> default_alpha;

  int n_states() const { return model.n_states(); }
};

// ---------------------------------------------------------------------------
// Canonical (unconstrained) coordinates of a single emission:
//   normal        [mean, log sd]
//   gamma         [log mean, log sd]
//   lognormal     [log-mean, log log-sd]
//   mvlognormal   [log-mean (d), log-Cholesky factor of log-cov (d(d+1)/2)]
// The log-Cholesky block lists the lower triangle row by row, with the
// diagonal entries stored as logarithms.

Eigen::VectorXd canonical_coords(const Emission& e);
Emission from_canonical(Family family, int dim, const Eigen::VectorXd& coords);
int canonical_size(Family family, int dim);

// Weighted sufficient statistics of one (state, component) pair. For each
// index, `coef` = posterior * weight and the transformed observation is
//   normal: x, gamma: (ln x, x), lognormal / mvlognormal: ln x.
struct SufficientStats {
  double s0 = 0.0;
  Eigen::VectorXd s1;  // sum coef * u
  Eigen::MatrixXd s2;  // sum coef * u u'   (gamma: s2(0,0) = sum coef * x)

  void reset(Family family, int dim);
  void add(Family family, std::span<const double> x, double coef);
};

// Gradient of sum_t coef_t ln f(x_t) with respect to canonical_coords(e).
Eigen::VectorXd canonical_gradient(const Emission& e, const SufficientStats& stats);

// Derivatives of an objective with respect to the log-probabilities and the
// canonical emission coordinates; the input to Parameterization's chain rule.
struct NaturalGradient {
  Eigen::VectorXd initial;     // d / d ln delta_i
  Eigen::MatrixXd transition;  // d / d ln Gamma_ij
  Eigen::MatrixXd labels;      // d / d ln beta_iz (categorical labels)
  std::vector<std::vector<Eigen::VectorXd>> emissions;  // [state][component]

  static NaturalGradient zeros(const PhmmModel& model);
};

// Bijection between the constrained parameter manifold of a ModelSpec and a
// flat unconstrained working vector. Probability rows use a multinomial logit
// over their free entries (first free entry as reference), positive scales a
// logarithm, and locations the identity. Fixed parameters have no working
// coordinate; every share group owns one block.
class Parameterization {
 public:
  explicit Parameterization(const ModelSpec& spec);

  int size() const { return size_; }
  const ModelSpec& spec() const { return spec_; }

  // Throws ConstraintViolation if `model` breaks a fixed value, a share group
  // or the structural-zero mask, or has a zero on a free probability.
  Eigen::VectorXd to_working(const PhmmModel& model) const;
  PhmmModel from_working(const Eigen::VectorXd& working) const;

  Eigen::VectorXd working_gradient(const NaturalGradient& grad, const PhmmModel& at) const;

  // Working index of a scalar emission parameter, nullopt when fixed.
  std::optional<int> working_index(const ParamRef& ref) const;
  // True if that coordinate is the log of the natural parameter.
  bool is_log_coordinate(const ParamRef& ref) const;

  const std::vector<std::string>& coordinate_names() const { return names_; }

  // Free entries of transition row i, in column order.
  const std::vector<int>& transition_support(int row) const;

 private:
  enum class SimplexTarget { kInitial, kTransition, kLabels };
  struct SimplexBlock {
    SimplexTarget target;
    int row;
    std::vector<int> support;
    int offset;
  };
  struct EmissionBlock {
    std::vector<ParamRef> members;
    int canonical_begin;
    int size;
    int offset;
  };

  std::pair<int, int> canonical_range(const ParamRef& ref) const;
  const EmissionBlock* block_of(const ParamRef& ref) const;

  ModelSpec spec_;
  std::vector<SimplexBlock> simplex_;
  std::vector<EmissionBlock> emission_blocks_;
  std::vector<std::vector<int>> transition_support_;
  std::vector<std::string> names_;
  int size_ = 0;
};

}  // namespace phmm
