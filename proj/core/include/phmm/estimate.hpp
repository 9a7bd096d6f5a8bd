#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "phmm/optimizer.hpp"
#include "phmm/parameterization.hpp"

namespace phmm {

// Total alpha-weighted log-likelihood of a dataset as a function of the
// working vector of a Parameterization. The dataset is held by reference and
// must outlive the objective.
class WeightedObjective {
 public:
  WeightedObjective(const Parameterization& param, const Dataset& data, double alpha);

  // Value (and analytic gradient when grad != nullptr). Returns -inf at
  // infeasible or invalid points.
  double operator()(const Eigen::VectorXd& working, Eigen::VectorXd* grad) const;

  double value_at(const PhmmModel& model) const;
  double evaluate_model(const PhmmModel& model, NaturalGradient* grad) const;

  const Parameterization& parameterization() const { return param_; }
  double alpha() const { return alpha_; }

 private:
  const Parameterization& param_;
  const Dataset& data_;
  double alpha_;
  std::vector<std::vector<double>> weights_;
};

struct FitOptions {
  int restarts = 10;
  int max_iterations = 1000;
  double tolerance = 1e-8;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 1;
  int threads = 1;
  // Use central differences instead of the analytic gradient.
  bool numeric_gradient = false;
};

struct RestartRecord {
  int index = 0;
  std::uint64_t seed = 0;
  int iterations = 0;
  int evaluations = 0;
  double initial_objective = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::string status;
  std::vector<double> trace;  // objective after each accepted step
  std::string error;          // set when the restart could not run
};

struct FitResult {
  PhmmModel model;
  Eigen::VectorXd working;
  double objective = 0.0;
  double alpha = 1.0;
  int best_restart = -1;
  std::vector<RestartRecord> restarts;

  bool converged() const { return restarts.at(best_restart).converged; }
};

// Rejects alpha = 0 when some state can neither learn its emissions from a
// label nor inherit them through a fixed value or a share group with a
// labelled state.
void check_identifiability(const ModelSpec& spec, const Dataset& data, double alpha);

// Per-restart seed derived from the run seed; restart r of a run with seed s
// is identical regardless of how many restarts the run has.
std::uint64_t restart_seed(std::uint64_t seed, int restart);

// Random starting model drawn from the data: probability rows from a flat
// Dirichlet over free entries, locations near the state's quantile slot and
// scales log-uniform around the pooled spread. Fixed and shared parameters
// are honored.
PhmmModel random_initial_model(const ModelSpec& spec, const Dataset& data,
                               std::mt19937_64& rng);

// Multi-start maximization of the weighted log-likelihood. Throws
// IdentifiabilityError, FitFailure (no restart produced a finite objective),
// or ShapeError (dataset features differ from the model's).
FitResult fit(const ModelSpec& spec, const Dataset& data, double alpha,
              const FitOptions& options = {});

struct ParameterEstimate {
  ParamRef ref;
  double value = 0.0;
  double standard_error = 0.0;
};

// Standard errors of free scalar emission parameters from the inverse of the
// numeric Hessian at `model`, mapped to natural scale by the delta method.
std::vector<ParameterEstimate> emission_standard_errors(const ModelSpec& spec,
                                                        const Dataset& data, double alpha,
                                                        const PhmmModel& model);

}  // namespace phmm
