#include "phmm/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phmm/error.hpp"

namespace phmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSumTolerance = 1e-12;

void check_probability_vector(const Eigen::VectorXd& p, const char* what) {
  if (p.size() == 0) throw InvalidParameter(std::string(what) + " is empty");
  if (!p.allFinite() || (p.array() < 0.0).any()) {
    throw InvalidParameter(std::string(what) + " has negative or non-finite entries");
  }
  if (std::abs(p.sum() - 1.0) > kSumTolerance) {
    throw InvalidParameter(std::string(what) + " does not sum to one");
  }
}

void check_shapes(const InitialDistribution& delta, const TransitionMatrix& gamma,
                  const Eigen::MatrixXd& log_emission) {
  if (delta.size() != gamma.size() || log_emission.cols() != gamma.size()) {
    throw ShapeError("state count mismatch between delta, Gamma and emissions");
  }
  if (log_emission.rows() == 0) throw ShapeError("empty sequence");
}

// Scaled forward pass. alpha rows are normalized; log_scale[t] is the log of
// the normalizer so that sum(log_scale) is the log-likelihood. Returns false
// if the sequence is impossible.
bool forward_pass(const InitialDistribution& delta, const TransitionMatrix& gamma,
                  const Eigen::MatrixXd& log_e, Eigen::MatrixXd& alpha,
                  Eigen::VectorXd& log_scale) {
  const Eigen::Index T = log_e.rows();
  const Eigen::Index N = log_e.cols();
  alpha.resize(T, N);
  log_scale.resize(T);
  Eigen::RowVectorXd pred = delta.probs().transpose();
  Eigen::RowVectorXd log_term(N);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) pred.noalias() = alpha.row(t - 1) * gamma.probs();
    double m = kNegInf;
    for (Eigen::Index i = 0; i < N; ++i) {
      log_term[i] = pred[i] > 0.0 ? std::log(pred[i]) + log_e(t, i) : kNegInf;
      m = std::max(m, log_term[i]);
    }
    if (m == kNegInf || std::isnan(m)) return false;
    double s = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double a = log_term[i] == kNegInf ? 0.0 : std::exp(log_term[i] - m);
      alpha(t, i) = a;
      s += a;
    }
    alpha.row(t) /= s;
    log_scale[t] = m + std::log(s);
  }
  return true;
}

}  // namespace

InitialDistribution::InitialDistribution(Eigen::VectorXd probs) : probs_(std::move(probs)) {
  check_probability_vector(probs_, "initial distribution");
}

InitialDistribution InitialDistribution::uniform(int n) {
  return InitialDistribution(Eigen::VectorXd::Constant(n, 1.0 / n));
}

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd probs)
    : TransitionMatrix(std::move(probs), BoolMatrix()) {}

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd probs, BoolMatrix zero_mask)
    : probs_(std::move(probs)), zero_mask_(std::move(zero_mask)) {
  const Eigen::Index n = probs_.rows();
  if (n == 0 || probs_.cols() != n) throw ShapeError("transition matrix must be square");
  if (zero_mask_.size() == 0) zero_mask_ = BoolMatrix::Constant(n, n, false);
  if (zero_mask_.rows() != n || zero_mask_.cols() != n) {
    throw ShapeError("structural-zero mask shape mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (zero_mask_.row(i).all()) {
      throw InvalidParameter("transition row " + std::to_string(i + 1) +
                             " has no free entry");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (zero_mask_(i, j) && probs_(i, j) != 0.0) {
        throw InvalidParameter("structural zero at (" + std::to_string(i + 1) + "," +
                               std::to_string(j + 1) + ") holds a nonzero value");
      }
    }
    check_probability_vector(probs_.row(i).transpose(), "transition row");
  }
}

TransitionMatrix TransitionMatrix::uniform(const BoolMatrix& zero_mask) {
  const Eigen::Index n = zero_mask.rows();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto free = (zero_mask.row(i).array() == false).count();
    if (free == 0) throw InvalidParameter("transition row has no free entry");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!zero_mask(i, j)) p(i, j) = 1.0 / static_cast<double>(free);
    }
  }
  return TransitionMatrix(std::move(p), zero_mask);
}

// ---------------------------------------------------------------------------

std::vector<int> LabeledSeries::labelled_indices() const {
  std::vector<int> out;
  for (int t = 0; t < length(); ++t) {
    if (labels[t]) out.push_back(t);
  }
  return out;
}

int LabeledSeries::label_count() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                        [](const Label& z) { return z.has_value(); }));
}

LabeledSeries LabeledSeries::without_labels() const {
  LabeledSeries out = *this;
  std::fill(out.labels.begin(), out.labels.end(), std::nullopt);
  return out;
}

LabeledSeries LabeledSeries::slice(int begin, int end, std::string new_id) const {
  if (begin < 0 || end > length() || begin >= end) throw ShapeError("bad series slice");
  LabeledSeries out;
  out.id = std::move(new_id);
  out.features = features.middleRows(begin, end - begin);
  out.labels.assign(labels.begin() + begin, labels.begin() + end);
  return out;
}

int Dataset::total_length() const {
  int total = 0;
  for (const auto& s : series) total += s.length();
  return total;
}

int Dataset::total_labels() const {
  int total = 0;
  for (const auto& s : series) total += s.label_count();
  return total;
}

const LabeledSeries& Dataset::find(const std::string& id) const {
  for (const auto& s : series) {
    if (s.id == id) return s;
  }
  throw ShapeError("no series with id '" + id + "'");
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd weighted_emission_log_matrix(const Eigen::MatrixXd& log_f,
                                             std::span<const Label> z,
                                             const LabelModel& labels,
                                             std::span<const double> weights) {
  const Eigen::Index T = log_f.rows();
  const int N = static_cast<int>(log_f.cols());
  if (static_cast<Eigen::Index>(z.size()) != T ||
      static_cast<Eigen::Index>(weights.size()) != T) {
    throw ShapeError("labels/weights length differs from series length");
  }
  Eigen::MatrixXd out(T, N);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double w = weights[t];
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidParameter("weights must be >= 0");
    for (int i = 0; i < N; ++i) {
      if (w == 0.0) {
        out(t, i) = 0.0;  // x^0 = 1, including x = 0
        continue;
      }
      const double term = log_f(t, i) + label_log_mass(labels, i, z[t], N);
      out(t, i) = term == kNegInf ? kNegInf : w * term;
    }
  }
  return out;
}

Eigen::MatrixXd weighted_emission_log_matrix(const LabeledSeries& series,
                                             const EmissionModel& emissions,
                                             const LabelModel& labels,
                                             std::span<const double> weights) {
  return weighted_emission_log_matrix(emissions.log_density_matrix(series.features),
                                      series.labels, labels, weights);
}

double forward_log_likelihood(const InitialDistribution& delta,
                              const TransitionMatrix& gamma,
                              const Eigen::MatrixXd& log_emission) {
  check_shapes(delta, gamma, log_emission);
  Eigen::MatrixXd alpha;
  Eigen::VectorXd log_scale;
  if (!forward_pass(delta, gamma, log_emission, alpha, log_scale)) return kNegInf;
  return log_scale.sum();
}

SmoothingResult smooth(const InitialDistribution& delta, const TransitionMatrix& gamma,
                       const Eigen::MatrixXd& log_e) {
  check_shapes(delta, gamma, log_e);
  Eigen::MatrixXd alpha;
  Eigen::VectorXd log_scale;
  if (!forward_pass(delta, gamma, log_e, alpha, log_scale)) {
    throw InfeasibleModel("zero likelihood: no hidden path is consistent with the data");
  }
  const Eigen::Index T = log_e.rows();
  const Eigen::Index N = log_e.cols();
  const Eigen::MatrixXd& G = gamma.probs();

  SmoothingResult out;
  out.log_likelihood = log_scale.sum();
  out.posterior.resize(T, N);
  out.transition_counts = Eigen::MatrixXd::Zero(N, N);

  // Scaled backward variables. States with zero forward mass are excluded,
  // their emission term may be arbitrarily large and carries no weight.
  Eigen::RowVectorXd beta = Eigen::RowVectorXd::Ones(N);
  Eigen::RowVectorXd next(N);  // e_{t+1}(j) * beta_{t+1}(j) / s_{t+1}
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (t < T - 1) {
      for (Eigen::Index j = 0; j < N; ++j) {
        next[j] = alpha(t + 1, j) > 0.0
                      ? std::exp(log_e(t + 1, j) - log_scale[t + 1]) * beta[j]
                      : 0.0;
      }
      for (Eigen::Index i = 0; i < N; ++i) {
        if (alpha(t, i) <= 0.0) continue;
        for (Eigen::Index j = 0; j < N; ++j) {
          out.transition_counts(i, j) += alpha(t, i) * G(i, j) * next[j];
        }
      }
      beta.noalias() = next * G.transpose();
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double p = alpha(t, i) > 0.0 ? alpha(t, i) * beta[i] : 0.0;
      out.posterior(t, i) = p;
      total += p;
    }
    out.posterior.row(t) /= total;
  }
  return out;
}

Decoding forward_backward(const InitialDistribution& delta, const TransitionMatrix& gamma,
                          const Eigen::MatrixXd& log_emission) {
  SmoothingResult s = smooth(delta, gamma, log_emission);
  Decoding d;
  d.posterior = std::move(s.posterior);
  d.log_likelihood = s.log_likelihood;
  return d;
}

std::vector<int> viterbi(const InitialDistribution& delta, const TransitionMatrix& gamma,
                         const Eigen::MatrixXd& log_e) {
  check_shapes(delta, gamma, log_e);
  const Eigen::Index T = log_e.rows();
  const int N = static_cast<int>(log_e.cols());

  Eigen::MatrixXd log_gamma(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      log_gamma(i, j) = gamma(i, j) > 0.0 ? std::log(gamma(i, j)) : kNegInf;
    }
  }
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(T, N);
  Eigen::VectorXd score(N), next(N);
  for (int i = 0; i < N; ++i) {
    score[i] = (delta[i] > 0.0 ? std::log(delta[i]) : kNegInf) + log_e(0, i);
  }
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int j = 0; j < N; ++j) {
      int best = 0;
      double best_val = score[0] + log_gamma(0, j);
      for (int i = 1; i < N; ++i) {
        const double v = score[i] + log_gamma(i, j);
        if (v > best_val) {
          best_val = v;
          best = i;
        }
      }
      back(t, j) = best;
      next[j] = best_val + log_e(t, j);
    }
    score.swap(next);
  }
  int last = 0;
  for (int i = 1; i < N; ++i) {
    if (score[i] > score[last]) last = i;
  }
  if (score[last] == kNegInf || std::isnan(score[last])) {
    throw InfeasibleModel("no hidden path has positive probability");
  }
  std::vector<int> path(T);
  path[T - 1] = last;
  for (Eigen::Index t = T - 1; t > 0; --t) path[t - 1] = back(t, path[t]);
  return path;
}

Decoding decode(const InitialDistribution& delta, const TransitionMatrix& gamma,
                const Eigen::MatrixXd& log_emission) {
  Decoding d = forward_backward(delta, gamma, log_emission);
  d.path = viterbi(delta, gamma, log_emission);
  return d;
}

double path_log_probability(const InitialDistribution& delta, const TransitionMatrix& gamma,
                            const Eigen::MatrixXd& log_e, std::span<const int> path) {
  check_shapes(delta, gamma, log_e);
  if (static_cast<Eigen::Index>(path.size()) != log_e.rows()) {
    throw ShapeError("path length mismatch");
  }
  auto safe_log = [](double p) { return p > 0.0 ? std::log(p) : kNegInf; };
  double lp = safe_log(delta[path[0]]) + log_e(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) {
    lp += safe_log(gamma(path[t - 1], path[t])) + log_e(static_cast<Eigen::Index>(t), path[t]);
  }
  return lp;
}

double mixture_log_density(const MixtureWeights& pi, const EmissionModel& emissions,
                           const LabelModel& labels, const LabeledSeries& series,
                           std::span<const double> weights) {
  const int N = emissions.n_states();
  if (pi.size() != N) throw ShapeError("mixture weight length mismatch");
  if (static_cast<int>(weights.size()) != series.length()) {
    throw ShapeError("weights length differs from series length");
  }
  const Eigen::MatrixXd log_f = emissions.log_density_matrix(series.features);
  double total = 0.0;
  for (int t = 0; t < series.length(); ++t) {
    const double w = weights[t];
    if (!(w >= 0.0)) throw InvalidParameter("weights must be >= 0");
    if (w == 0.0) continue;
    double m = kNegInf;
    Eigen::VectorXd terms(N);
    for (int i = 0; i < N; ++i) {
      terms[i] = (pi[i] > 0.0 ? std::log(pi[i]) : kNegInf) + log_f(t, i) +
                 label_log_mass(labels, i, series.labels[t], N);
      m = std::max(m, terms[i]);
    }
    if (m == kNegInf) return kNegInf;
    total += w * (m + std::log((terms.array() - m).exp().sum()));
  }
  return total;
}

}  // namespace phmm
