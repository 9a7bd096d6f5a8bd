#pragma once

#include <optional>
#include <string>
#include <vector>

#include "phmm/distributions.hpp"
#include "phmm/markov.hpp"

namespace phmm {

// Complete set of PHMM parameters.
struct PhmmModel {
  InitialDistribution initial;
  TransitionMatrix transition;
  EmissionModel emissions;
  LabelModel labels = PerfectLabels{};

  int n_states() const { return transition.size(); }
};

// Mixture weights: labelled indices get (1 - lambda) T / |labelled|,
// unlabelled ones lambda T / (T - |labelled|).
struct LambdaWeights {
  double labelled;
  double unlabelled;
};

LambdaWeights lambda_weights(double lambda, int length, int n_labelled);

double weighted_mixture_log_likelihood(const MixtureWeights& pi,
                                       const EmissionModel& emissions,
                                       const LabelModel& labels,
                                       const LabeledSeries& series, double lambda);

// PHMM weights: 1 on labelled indices, alpha elsewhere.
double alpha_weight(const Label& z, double alpha);
std::vector<double> alpha_weights(const LabeledSeries& series, double alpha);

void check_alpha(double alpha);

double phmm_weighted_log_likelihood(const PhmmModel& model, const LabeledSeries& series,
                                    double alpha);

struct TotalLikelihood {
  double value = 0.0;
  // First series (in dataset order) whose likelihood is zero, if any.
  std::optional<std::string> infeasible_series;
};

// Sum over independent series, accumulated in dataset order.
TotalLikelihood total_log_likelihood(const PhmmModel& model, const Dataset& dataset,
                                     double alpha);

}  // namespace phmm
