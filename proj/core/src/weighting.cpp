#include "phmm/weighting.hpp"

#include <cmath>
#include <limits>

#include "phmm/error.hpp"

namespace phmm {

LambdaWeights lambda_weights(double lambda, int length, int n_labelled) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("lambda must lie in [0, 1]");
  if (length <= 0 || n_labelled < 0 || n_labelled > length) {
    throw InvalidParameter("label count must satisfy 0 <= |labelled| <= T");
  }
  if (n_labelled == 0 && lambda < 1.0) {
    throw DegenerateScheme("no labelled indices but lambda < 1 puts weight on them");
  }
  if (n_labelled == length && lambda > 0.0) {
    throw DegenerateScheme("no unlabelled indices but lambda > 0 puts weight on them");
  }
  const double T = length;
  const double L = n_labelled;
  LambdaWeights w{0.0, 0.0};
  if (lambda < 1.0) w.labelled = (1.0 - lambda) * T / L;
  if (lambda > 0.0) w.unlabelled = lambda * T / (T - L);
  return w;
}

double weighted_mixture_log_likelihood(const MixtureWeights& pi,
                                       const EmissionModel& emissions,
                                       const LabelModel& labels,
                                       const LabeledSeries& series, double lambda) {
  const auto w = lambda_weights(lambda, series.length(), series.label_count());
  std::vector<double> weights(series.length());
  for (int t = 0; t < series.length(); ++t) {
    weights[t] = series.labels[t] ? w.labelled : w.unlabelled;
  }
  return mixture_log_density(pi, emissions, labels, series, weights);
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in [0, 1]");
}

double alpha_weight(const Label& z, double alpha) { return z ? 1.0 : alpha; }

std::vector<double> alpha_weights(const LabeledSeries& series, double alpha) {
  check_alpha(alpha);
  std::vector<double> w(series.length());
  for (int t = 0; t < series.length(); ++t) w[t] = alpha_weight(series.labels[t], alpha);
  return w;
}

double phmm_weighted_log_likelihood(const PhmmModel& model, const LabeledSeries& series,
                                    double alpha) {
  if (series.length() == 0) throw ShapeError("empty series");
  const auto w = alpha_weights(series, alpha);
  const auto log_e = weighted_emission_log_matrix(series, model.emissions, model.labels, w);
  return forward_log_likelihood(model.initial, model.transition, log_e);
}

TotalLikelihood total_log_likelihood(const PhmmModel& model, const Dataset& dataset,
                                     double alpha) {
  TotalLikelihood out;
  for (const auto& s : dataset.series) {
    const double v = phmm_weighted_log_likelihood(model, s, alpha);
    if (v == -std::numeric_limits<double>::infinity() && !out.infeasible_series) {
      out.infeasible_series = s.id;
    }
    out.value += v;
  }
  return out;
}

}  // namespace phmm
