#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "phmm/distributions.hpp"

namespace phmm {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Row vector delta with delta(i) = P(X_1 = i).
class InitialDistribution {
 public:
  InitialDistribution() = default;
  explicit InitialDistribution(Eigen::VectorXd probs);

  static InitialDistribution uniform(int n);

  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](int i) const { return probs_[i]; }
  const Eigen::VectorXd& probs() const { return probs_; }

 private:
  Eigen::VectorXd probs_;
};

// Mixture weights pi share the same invariants as an initial distribution.
using MixtureWeights = InitialDistribution;

// Stationary N x N transition matrix with structural zeros. zero_mask(i, j)
// true means the transition i -> j is impossible by construction; such
// entries are held at exactly 0.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(Eigen::MatrixXd probs);
  TransitionMatrix(Eigen::MatrixXd probs, BoolMatrix zero_mask);

  static TransitionMatrix uniform(const BoolMatrix& zero_mask);

  int size() const { return static_cast<int>(probs_.rows()); }
  double operator()(int i, int j) const { return probs_(i, j); }
  const Eigen::MatrixXd& probs() const { return probs_; }
  const BoolMatrix& zero_mask() const { return zero_mask_; }
  bool is_structural_zero(int i, int j) const { return zero_mask_(i, j); }

 private:
  Eigen::MatrixXd probs_;
  BoolMatrix zero_mask_;
};

// One observed sequence. features has one row per index; labels[t] is the
// 0-based state label or nullopt.
struct LabeledSeries {
  std::string id;
  FeatureMatrix features;
  std::vector<Label> labels;

  int length() const { return static_cast<int>(labels.size()); }
  std::vector<int> labelled_indices() const;
  int label_count() const;
  LabeledSeries without_labels() const;
  // Contiguous slice [begin, end).
  LabeledSeries slice(int begin, int end, std::string new_id) const;
};

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<LabeledSeries> series;

  int total_length() const;
  int total_labels() const;
  const LabeledSeries& find(const std::string& id) const;
};

struct Decoding {
  Eigen::MatrixXd posterior;  // T x N, rows sum to one
  double log_likelihood = 0.0;
  std::vector<int> path;      // Viterbi path, 0-based states
};

// Forward-backward output plus the expected transition counts
// sum_t P(X_{t-1} = i, X_t = j | data), used by the gradient.
struct SmoothingResult {
  Eigen::MatrixXd posterior;
  Eigen::MatrixXd transition_counts;
  double log_likelihood = 0.0;
};

// Entry (t, i) = w_t * (ln f^{(i)}(y_t) + ln g^{(i)}(z_t)), with w_t = 0
// yielding exactly 0 even when the bracket is -inf.
Eigen::MatrixXd weighted_emission_log_matrix(const LabeledSeries& series,
                                             const EmissionModel& emissions,
                                             const LabelModel& labels,
                                             std::span<const double> weights);

// Same, from a precomputed T x N matrix of ln f^{(i)}(y_t).
Eigen::MatrixXd weighted_emission_log_matrix(const Eigen::MatrixXd& log_f,
                                             std::span<const Label> z,
                                             const LabelModel& labels,
                                             std::span<const double> weights);

// ln[delta P_1 prod_t Gamma P_t 1'], -inf when no hidden path is possible.
double forward_log_likelihood(const InitialDistribution& delta,
                              const TransitionMatrix& gamma,
                              const Eigen::MatrixXd& log_emission);

// Posteriors and log-likelihood. Throws InfeasibleModel on a zero likelihood.
Decoding forward_backward(const InitialDistribution& delta,
                          const TransitionMatrix& gamma,
                          const Eigen::MatrixXd& log_emission);

SmoothingResult smooth(const InitialDistribution& delta,
                       const TransitionMatrix& gamma,
                       const Eigen::MatrixXd& log_emission);

// Most probable path; ties go to the lowest state index.
std::vector<int> viterbi(const InitialDistribution& delta,
                         const TransitionMatrix& gamma,
                         const Eigen::MatrixXd& log_emission);

// forward_backward() followed by viterbi().
Decoding decode(const InitialDistribution& delta, const TransitionMatrix& gamma,
                const Eigen::MatrixXd& log_emission);

// ln delta(x_1) + sum ln Gamma(x_{t-1}, x_t) + sum log_emission(t, x_t).
double path_log_probability(const InitialDistribution& delta,
                            const TransitionMatrix& gamma,
                            const Eigen::MatrixXd& log_emission,
                            std::span<const int> path);

// sum_t w_t ln(sum_i pi(i) f^{(i)}(y_t) g^{(i)}(z_t)); -inf when some index
// with w_t > 0 has zero mass.
double mixture_log_density(const MixtureWeights& pi, const EmissionModel& emissions,
                           const LabelModel& labels, const LabeledSeries& series,
                           std::span<const double> weights);

}  // namespace phmm
