#include "phmm/estimate.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "phmm/error.hpp"

namespace phmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Eigen::VectorXd flat_dirichlet(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v[k] = expo(rng) + 1e-12;
  return v / v.sum();
}

double quantile(std::vector<double> sorted_values, double u) {
  if (sorted_values.empty()) return 0.0;
  const double pos = u * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 1.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return sd > 0.0 ? sd : 1.0;
}

std::pair<int, int> canonical_range_of(const EmissionModel& em, const ParamRef& ref) {
  const int d = static_cast<int>(em.components().at(ref.component).columns.size());
  switch (ref.kind) {
    case ParamKind::kLocation: return {ref.index, 1};
    case ParamKind::kScale: return {1, 1};
    case ParamKind::kCovariance: return {d, d * (d + 1) / 2};
  }
  return {0, 0};
}

void check_features(const ModelSpec& spec, const Dataset& data) {
  if (data.feature_names != spec.model.emissions.features()) {
    throw ShapeError("dataset feature columns differ from the model's feature schema");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

WeightedObjective::WeightedObjective(const Parameterization& param, const Dataset& data,
                                     double alpha)
    : param_(param), data_(data), alpha_(alpha) {
  check_alpha(alpha);
  check_features(param.spec(), data);
  weights_.reserve(data.series.size());
  for (const auto& s : data.series) weights_.push_back(alpha_weights(s, alpha));
}

double WeightedObjective::evaluate_model(const PhmmModel& model, NaturalGradient* grad) const {
  const int N = model.n_states();
  const auto& em = model.emissions;
  const bool categorical = std::holds_alternative<CategoricalLabels>(model.labels);

  std::vector<std::vector<SufficientStats>> stats;
  if (grad) {
    *grad = NaturalGradient::zeros(model);
    stats.resize(N);
    for (int i = 0; i < N; ++i) {
      for (const auto& comp : em.components()) {
        stats[i].emplace_back();
        stats[i].back().reset(comp.family, static_cast<int>(comp.columns.size()));
      }
    }
  }

  double total = 0.0;
  std::vector<double> buf;
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    const auto& series = data_.series[s];
    const auto& w = weights_[s];
    const Eigen::MatrixXd log_f = em.log_density_matrix(series.features);
    const Eigen::MatrixXd log_e =
        weighted_emission_log_matrix(log_f, series.labels, model.labels, w);
    if (!grad) {
      const double ll = forward_log_likelihood(model.initial, model.transition, log_e);
      if (ll == kNegInf) return kNegInf;
      total += ll;
      continue;
    }
    SmoothingResult sm;
    try {
      sm = smooth(model.initial, model.transition, log_e);
    } catch (const InfeasibleModel&) {
      return kNegInf;
    }
    total += sm.log_likelihood;
    grad->initial += sm.posterior.row(0).transpose();
    grad->transition += sm.transition_counts;
    if (categorical) {
      for (int t = 0; t < series.length(); ++t) {
        if (const auto& z = series.labels[t]) {
          grad->labels.col(*z) += w[t] * sm.posterior.row(t).transpose();
        }
      }
    }
    for (int c = 0; c < em.n_components(); ++c) {
      const auto& comp = em.components()[c];
      buf.resize(comp.columns.size());
      for (int t = 0; t < series.length(); ++t) {
        if (w[t] == 0.0) continue;
        bool missing = false;
        for (std::size_t k = 0; k < comp.columns.size(); ++k) {
          buf[k] = series.features(t, comp.columns[k]);
          missing = missing || std::isnan(buf[k]);
        }
        if (missing) continue;
        for (int i = 0; i < N; ++i) {
          stats[i][c].add(comp.family, buf, sm.posterior(t, i) * w[t]);
        }
      }
    }
  }
  if (grad) {
    for (int i = 0; i < N; ++i) {
      for (int c = 0; c < em.n_components(); ++c) {
        grad->emissions[i][c] = canonical_gradient(em.emission(i, c), stats[i][c]);
      }
    }
  }
  return total;
}

double WeightedObjective::value_at(const PhmmModel& model) const {
  return evaluate_model(model, nullptr);
}

double WeightedObjective::operator()(const Eigen::VectorXd& working,
                                     Eigen::VectorXd* grad) const {
  try {
    const PhmmModel model = param_.from_working(working);
    if (!grad) return evaluate_model(model, nullptr);
    NaturalGradient ng;
    const double v = evaluate_model(model, &ng);
    if (std::isfinite(v)) *grad = param_.working_gradient(ng, model);
    return std::isfinite(v) ? v : kNegInf;
  } catch (const InvalidParameter&) {
    return kNegInf;
  }
}

// ---------------------------------------------------------------------------

void check_identifiability(const ModelSpec& spec, const Dataset& data, double alpha) {
  if (alpha > 0.0) return;
  const int N = spec.n_states();
  std::vector<int> label_counts(N, 0);
  for (const auto& s : data.series) {
    for (const auto& z : s.labels) {
      if (z && *z >= 0 && *z < N) ++label_counts[*z];
    }
  }
  const auto& em = spec.model.emissions;
  const auto& cons = spec.constraints;
  for (int i = 0; i < N; ++i) {
    if (label_counts[i] > 0) continue;
    for (int c = 0; c < em.n_components(); ++c) {
      for (const auto& ref : component_params(em, i, c)) {
        if (cons.is_fixed(ref)) continue;
        const int g = cons.share_group_of(ref);
        const bool inherited =
            g >= 0 && std::any_of(cons.share_groups[g].begin(), cons.share_groups[g].end(),
                                  [&](const ParamRef& r) { return label_counts[r.state] > 0; });
        if (!inherited) {
          const std::string name =
              i < static_cast<int>(spec.state_names.size()) ? " (" + spec.state_names[i] + ")"
                                                            : "";
          throw IdentifiabilityError(
              "alpha = 0 leaves state " + std::to_string(i + 1) + name +
              " without labelled observations; its emission parameters are not "
              "identifiable (" + to_string(ref, em) + ")");
        }
      }
    }
  }
}

std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  return splitmix64(splitmix64(seed) + static_cast<std::uint64_t>(restart));
}

PhmmModel random_initial_model(const ModelSpec& spec, const Dataset& data,
                               std::mt19937_64& rng) {
  const int N = spec.n_states();
  const auto& base = spec.model.emissions;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> log_factor(std::log(0.5), std::log(2.0));

  Eigen::VectorXd delta = spec.model.initial.probs();
  if (!spec.constraints.initial_fixed) delta = flat_dirichlet(rng, N);

  const auto& mask = spec.model.transition.zero_mask();
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    std::vector<int> support;
    for (int j = 0; j < N; ++j) {
      if (!mask(i, j)) support.push_back(j);
    }
    const Eigen::VectorXd p = flat_dirichlet(rng, static_cast<int>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) gamma(i, support[k]) = p[k];
  }

  LabelModel labels = spec.model.labels;
  if (auto* cat = std::get_if<CategoricalLabels>(&labels); cat && !spec.constraints.labels_fixed) {
    for (int i = 0; i < N; ++i) cat->beta.row(i) = flat_dirichlet(rng, N).transpose();
  }

  std::vector<std::vector<Emission>> per_state(N);
  for (int c = 0; c < base.n_components(); ++c) {
    const auto& comp = base.components()[c];
    const int d = static_cast<int>(comp.columns.size());
    // Transformed observed values per dimension, sorted.
    std::vector<std::vector<double>> values(d);
    for (const auto& s : data.series) {
      for (int t = 0; t < s.length(); ++t) {
        bool usable = true;
        for (int k = 0; k < d; ++k) {
          const double x = s.features(t, comp.columns[k]);
          if (std::isnan(x) || (comp.family != Family::kNormal && x <= 0.0)) usable = false;
        }
        if (!usable) continue;
        for (int k = 0; k < d; ++k) {
          const double x = s.features(t, comp.columns[k]);
          const bool log_scale = comp.family == Family::kLogNormal ||
                                 comp.family == Family::kMultivariateLogNormal;
          values[k].push_back(log_scale ? std::log(x) : x);
        }
      }
    }
    std::vector<double> pooled(d);
    for (int k = 0; k < d; ++k) {
      std::sort(values[k].begin(), values[k].end());
      pooled[k] = sample_sd(values[k]);
    }
    for (int i = 0; i < N; ++i) {
      const double u = (i + unit(rng)) / N;
      auto location = [&](int k, double fallback) {
        return values[k].empty() ? fallback : quantile(values[k], u);
      };
      switch (comp.family) {
        case Family::kNormal:
          per_state[i].push_back(Normal{location(0, 0.0), pooled[0] * std::exp(log_factor(rng))});
          break;
        case Family::kGamma: {
          const double mean = std::max(location(0, 1.0), 1e-6);
          per_state[i].push_back(Gamma{mean, pooled[0] * std::exp(log_factor(rng))});
          break;
        }
        case Family::kLogNormal:
          per_state[i].push_back(
              LogNormal{location(0, 0.0), pooled[0] * std::exp(log_factor(rng))});
          break;
        case Family::kMultivariateLogNormal: {
          MultivariateLogNormal m;
          m.log_mean.resize(d);
          m.log_cov = Eigen::MatrixXd::Zero(d, d);
          for (int k = 0; k < d; ++k) {
            m.log_mean[k] = location(k, 0.0);
            const double sd = pooled[k] * std::exp(log_factor(rng));
            m.log_cov(k, k) = sd * sd;
          }
          per_state[i].push_back(std::move(m));
          break;
        }
      }
    }
  }

  // Share groups take the values drawn for their first member.
  std::vector<std::vector<Eigen::VectorXd>> coords(N);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < base.n_components(); ++c) {
      coords[i].push_back(canonical_coords(per_state[i][c]));
    }
  }
  for (const auto& group : spec.constraints.share_groups) {
    const auto& first = group.front();
    const auto [begin, len] = canonical_range_of(base, first);
    const Eigen::VectorXd v = coords[first.state][first.component].segment(begin, len);
    for (const auto& ref : group) coords[ref.state][ref.component].segment(begin, len) = v;
  }
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < base.n_components(); ++c) {
      const auto& comp = base.components()[c];
      per_state[i][c] =
          from_canonical(comp.family, static_cast<int>(comp.columns.size()), coords[i][c]);
    }
  }
  EmissionModel emissions(base.features(), base.components(), std::move(per_state),
                          base.missing_policy());
  for (const auto& f : spec.constraints.fixed) set_param(emissions, f.ref, f.value);

  return PhmmModel{InitialDistribution(delta), TransitionMatrix(gamma, mask),
                   std::move(emissions), std::move(labels)};
}

FitResult fit(const ModelSpec& spec, const Dataset& data, double alpha,
              const FitOptions& options) {
  check_alpha(alpha);
  if (data.series.empty()) throw FitFailure("empty dataset");
  if (options.restarts < 1) throw InvalidParameter("restarts must be >= 1");
  check_features(spec, data);
  check_identifiability(spec, data, alpha);

  const Parameterization param(spec);
  const WeightedObjective objective(param, data, alpha);
  Objective f = [&objective](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    return objective(x, g);
  };
  if (options.numeric_gradient) {
    f = [&objective](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      const double v = objective(x, nullptr);
      if (g && std::isfinite(v)) {
        *g = numeric_gradient([&](const Eigen::VectorXd& y, Eigen::VectorXd*) {
          return objective(y, nullptr);
        }, x);
      }
      return v;
    };
  }
  OptimizerOptions opt;
  opt.max_iterations = options.max_iterations;
  opt.relative_tolerance = options.tolerance;
  opt.gradient_tolerance = options.gradient_tolerance;

  std::vector<RestartRecord> records(options.restarts);
  std::vector<Eigen::VectorXd> solutions(options.restarts);

  auto run_restart = [&](int r) {
    RestartRecord& rec = records[r];
    rec.index = r;
    rec.seed = restart_seed(options.seed, r);
    std::mt19937_64 rng(rec.seed);
    Eigen::VectorXd w0;
    constexpr int kMaxDraws = 20;
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
      try {
        const Eigen::VectorXd w = param.to_working(random_initial_model(spec, data, rng));
        if (std::isfinite(objective(w, nullptr))) {
          w0 = w;
          break;
        }
      } catch (const Error& e) {
        rec.error = e.what();
      }
    }
    if (w0.size() != param.size()) {
      if (rec.error.empty()) rec.error = "no feasible starting point";
      rec.objective = kNegInf;
      return;
    }
    rec.error.clear();
    const OptimizerResult res = maximize_bfgs(f, w0, opt);
    rec.iterations = res.iterations;
    rec.evaluations = res.evaluations;
    rec.initial_objective = res.initial_value;
    rec.objective = res.value;
    rec.converged = res.converged();
    rec.status = to_string(res.status);
    rec.trace = res.trace;
    solutions[r] = res.x;
  };

  const int n_threads = std::clamp(options.threads, 1, options.restarts);
  if (n_threads == 1) {
    for (int r = 0; r < options.restarts; ++r) run_restart(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> workers;
    for (int k = 0; k < n_threads; ++k) {
      workers.emplace_back([&] {
        for (int r = next++; r < options.restarts; r = next++) run_restart(r);
      });
    }
  }

  FitResult result;
  result.alpha = alpha;
  for (int r = 0; r < options.restarts; ++r) {
    if (!std::isfinite(records[r].objective)) continue;
    if (result.best_restart < 0 || records[r].objective > records[result.best_restart].objective) {
      result.best_restart = r;
    }
  }
  if (result.best_restart < 0) {
    std::string msg = "all " + std::to_string(options.restarts) + " restarts failed";
    for (const auto& rec : records) {
      if (!rec.error.empty()) {
        msg += "; restart " + std::to_string(rec.index) + ": " + rec.error;
        break;
      }
    }
    throw FitFailure(msg);
  }
  result.working = solutions[result.best_restart];
  result.objective = records[result.best_restart].objective;
  result.model = param.from_working(result.working);
  result.restarts = std::move(records);
  return result;
}

std::vector<ParameterEstimate> emission_standard_errors(const ModelSpec& spec,
                                                        const Dataset& data, double alpha,
                                                        const PhmmModel& model) {
  const Parameterization param(spec);
  const WeightedObjective objective(param, data, alpha);
  const Eigen::VectorXd w = param.to_working(model);
  const Eigen::MatrixXd H = numeric_hessian(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return objective(x, g); }, w);
  const Eigen::MatrixXd cov = (-H).fullPivLu().inverse();

  std::vector<ParameterEstimate> out;
  const auto& em = model.emissions;
  for (int i = 0; i < model.n_states(); ++i) {
    for (int c = 0; c < em.n_components(); ++c) {
      for (const auto& ref : component_params(em, i, c)) {
        if (ref.kind == ParamKind::kCovariance) continue;
        const auto k = param.working_index(ref);
        if (!k) continue;
        const double value = get_param(em, ref);
        const double se_working = std::sqrt(std::max(cov(*k, *k), 0.0));
        const double se = param.is_log_coordinate(ref) ? value * se_working : se_working;
        out.push_back({ref, value, se});
      }
    }
  }
  return out;
}

}  // namespace phmm
