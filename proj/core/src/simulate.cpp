#include "phmm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "phmm/error.hpp"
#include "phmm/estimate.hpp"

namespace phmm {
namespace {

int draw(const Eigen::Ref<const Eigen::VectorXd>& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = -1;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

std::string series_name(const std::string& prefix, std::size_t s, std::size_t total) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(total).size());
  std::string n = std::to_string(s + 1);
  if (n.size() < width) n.insert(0, width - n.size(), '0');
  return prefix + n;
}

int label_of(const LabelModel& labels, int state, std::mt19937_64& rng) {
  if (const auto* cat = std::get_if<CategoricalLabels>(&labels)) {
    return draw(cat->beta.row(state).transpose(), rng);
  }
  return state;
}

}  // namespace

void SimulationScenario::validate() const {
  const int N = model.n_states();
  if (N < 1) throw InvalidParameter("scenario model has no states");
  if (lengths.empty()) throw InvalidParameter("scenario has no series");
  for (int len : lengths) {
    if (len < 1) throw InvalidParameter("series lengths must be >= 1");
  }
  if (policy == LabelPolicy::kFixedIndices) {
    if (!label_indices.empty() && label_indices.size() != lengths.size()) {
      throw ShapeError("label index sets must match the number of series");
    }
    for (std::size_t s = 0; s < label_indices.size(); ++s) {
      for (int t : label_indices[s]) {
        if (t < 0 || t >= lengths[s]) throw InvalidParameter("label index out of range");
      }
    }
  } else {
    for (int st : {quota.capture_state, quota.fish_state, quota.no_fish_state}) {
      if (st < 0 || st >= N) throw InvalidParameter("dive-event state out of range");
    }
  }
}

SimulatedData simulate_phmm(const SimulationScenario& sc) {
  sc.validate();
  const auto& model = sc.model;
  const auto& em = model.emissions;
  const int N = model.n_states();
  const std::size_t S = sc.lengths.size();

  SimulatedData out;
  out.data.feature_names = em.features();
  out.hidden.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::mt19937_64 rng(restart_seed(sc.seed, static_cast<int>(s)));
    const int T = sc.lengths[s];
    LabeledSeries series;
    series.id = series_name(sc.id_prefix, s, S);
    series.features.resize(T, em.n_features());
    series.labels.assign(T, std::nullopt);
    auto& path = out.hidden[s];
    path.resize(T);
    for (int t = 0; t < T; ++t) {
      path[t] = t == 0 ? draw(model.initial.probs(), rng)
                       : draw(model.transition.probs().row(path[t - 1]).transpose(), rng);
      for (int c = 0; c < em.n_components(); ++c) {
        const auto x = sample(em.emission(path[t], c), rng);
        const auto& cols = em.components()[c].columns;
        for (std::size_t k = 0; k < cols.size(); ++k) series.features(t, cols[k]) = x[k];
      }
    }
    if (sc.policy == LabelPolicy::kFixedIndices && !sc.label_indices.empty()) {
      for (int t : sc.label_indices[s]) series.labels[t] = label_of(model.labels, path[t], rng);
    }
    out.data.series.push_back(std::move(series));
  }

  if (sc.policy == LabelPolicy::kDiveEvents) {
    // A generator of its own keeps the series draws independent of quotas.
    std::mt19937_64 rng(restart_seed(sc.seed, -1));
    const auto& q = sc.quota;
    std::vector<std::size_t> order(S);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int capture = 0, fish = 0, no_fish = 0;
    for (std::size_t s : order) {
      auto& series = out.data.series[s];
      const auto& path = out.hidden[s];
      series.labels[0] = label_of(model.labels, path[0], rng);
      const auto first_capture = std::find(path.begin(), path.end(), q.capture_state);
      const int last = path.back();
      if (first_capture != path.end() && first_capture != path.begin() &&
          capture < q.capture_labels) {
        const auto t = first_capture - path.begin();
        series.labels[t] = label_of(model.labels, *first_capture, rng);
        ++capture;
      } else if (last == q.fish_state && fish < q.fish_labels && path.size() > 1) {
        series.labels.back() = label_of(model.labels, last, rng);
        ++fish;
      } else if (last == q.no_fish_state && no_fish < q.no_fish_labels && path.size() > 1) {
        series.labels.back() = label_of(model.labels, last, rng);
        ++no_fish;
      }
    }
  }
  (void)N;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class Visit>
void enumerate_paths(int N, int T, Visit&& visit) {
  double count = std::pow(static_cast<double>(N), static_cast<double>(T));
  if (count > 1e6) {
    throw SizeError("exhaustive enumeration of " + std::to_string(N) + "^" + std::to_string(T) +
                    " paths exceeds 1e6");
  }
  std::vector<int> path(T, 0);
  while (true) {
    visit(path);
    int k = T - 1;
    while (k >= 0 && path[k] == N - 1) path[k--] = 0;
    if (k < 0) break;
    ++path[k];
  }
}

double path_score(const InitialDistribution& delta, const TransitionMatrix& gamma,
                  const Eigen::MatrixXd& log_e, const std::vector<int>& path) {
  return path_log_probability(delta, gamma, log_e, path);
}

}  // namespace

double brute_force_likelihood(const InitialDistribution& delta, const TransitionMatrix& gamma,
                              const Eigen::MatrixXd& log_e) {
  const int N = gamma.size();
  const int T = static_cast<int>(log_e.rows());
  std::vector<double> scores;
  enumerate_paths(N, T, [&](const std::vector<int>& p) {
    scores.push_back(path_score(delta, gamma, log_e, p));
  });
  const double m = *std::max_element(scores.begin(), scores.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - m);
  return m + std::log(sum);
}

Eigen::MatrixXd brute_force_posterior(const InitialDistribution& delta,
                                      const TransitionMatrix& gamma,
                                      const Eigen::MatrixXd& log_e) {
  const int N = gamma.size();
  const int T = static_cast<int>(log_e.rows());
  const double ll = brute_force_likelihood(delta, gamma, log_e);
  if (!std::isfinite(ll)) throw InfeasibleModel("no hidden path has positive probability");
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(T, N);
  enumerate_paths(N, T, [&](const std::vector<int>& p) {
    const double w = std::exp(path_score(delta, gamma, log_e, p) - ll);
    for (int t = 0; t < T; ++t) post(t, p[t]) += w;
  });
  return post;
}

std::vector<int> brute_force_map_path(const InitialDistribution& delta,
                                      const TransitionMatrix& gamma,
                                      const Eigen::MatrixXd& log_e) {
  const int N = gamma.size();
  const int T = static_cast<int>(log_e.rows());
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  enumerate_paths(N, T, [&](const std::vector<int>& p) {
    const double s = path_score(delta, gamma, log_e, p);
    if (best.empty() || s > best_score) {
      best_score = s;
      best = p;
    }
  });
  return best;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

// Lengths drawn uniformly from [lo, hi] and nudged to sum to `total`.
std::vector<int> lengths_summing_to(int count, int total, int lo, int hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(lo, hi);
  std::vector<int> v(count);
  for (auto& x : v) x = u(rng);
  int diff = total - std::accumulate(v.begin(), v.end(), 0);
  for (int k = 0; diff != 0; k = (k + 1) % count) {
    const int step = diff > 0 ? 1 : -1;
    if (v[k] + step >= 1) {
      v[k] += step;
      diff -= step;
    }
  }
  return v;
}

std::vector<std::vector<int>> random_label_sets(const std::vector<int>& lengths,
                                                const std::vector<int>& counts,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    std::vector<int> all(lengths[s]);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min<std::size_t>(all.size(), counts[s]));
    std::sort(all.begin(), all.end());
    out.push_back(std::move(all));
  }
  return out;
}

Preset preset_cs1(std::uint64_t seed) {
  Preset p;
  p.name = "cs1";
  const int N = 3;
  Eigen::Matrix3d g;
  g << 0.80, 0.15, 0.05,
       0.20, 0.65, 0.15,
       0.05, 0.20, 0.75;
  const Eigen::Vector3d delta(0.4, 0.3, 0.3);

  const double mu[3][2] = {{1.0, 3.8}, {1.8, 4.3}, {3.1, 5.0}};
  const double sd[3][2] = {{0.35, 0.30}, {0.40, 0.30}, {0.45, 0.35}};
  const double rho = 0.6;
  std::vector<std::vector<Emission>> per_state(N);
  for (int i = 0; i < N; ++i) {
    MultivariateLogNormal m;
    m.log_mean = Eigen::Vector2d(mu[i][0], mu[i][1]);
    m.log_cov.resize(2, 2);
    m.log_cov << sd[i][0] * sd[i][0], rho * sd[i][0] * sd[i][1],
        rho * sd[i][0] * sd[i][1], sd[i][1] * sd[i][1];
    per_state[i].push_back(m);
  }
  EmissionModel em({"max_depth", "duration"},
                   {EmissionComponent{{"max_depth", "duration"}, {0, 1},
                                      Family::kMultivariateLogNormal}},
                   std::move(per_state));
  p.spec.model = PhmmModel{InitialDistribution(delta), TransitionMatrix(g), std::move(em),
                           PerfectLabels{}};
  p.spec.state_names = {"resting", "travelling", "foraging"};
  p.spec.default_alpha = 0.049;

  auto& sc = p.scenario;
  sc.model = p.spec.model;
  sc.lengths = lengths_summing_to(11, 2169, 150, 245, 0xC51);
  std::vector<int> counts(11, 10);
  for (int s = 7; s < 11; ++s) counts[s] = 9;  // 106 labels in total
  sc.label_indices = random_label_sets(sc.lengths, counts, 0xC51 + 1);
  sc.seed = seed;
  sc.id_prefix = "whale";
  return p;
}

Preset preset_cs2(std::uint64_t seed) {
  Preset p;
  p.name = "cs2";
  const int N = 6;
  BoolMatrix mask = BoolMatrix::Constant(N, N, true);
  const std::pair<int, int> free_entries[] = {{0, 0}, {0, 1}, {0, 4}, {1, 1}, {1, 2},
                                              {1, 4}, {2, 1}, {2, 2}, {2, 3}, {2, 4},
                                              {3, 3}, {3, 5}, {4, 4}, {5, 5}};
  for (auto [i, j] : free_entries) mask(i, j) = false;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N, N);
  g(0, 0) = 0.92; g(0, 1) = 0.07; g(0, 4) = 0.01;
  g(1, 1) = 0.93; g(1, 2) = 0.05; g(1, 4) = 0.02;
  g(2, 1) = 0.10; g(2, 2) = 0.82; g(2, 3) = 0.06; g(2, 4) = 0.02;
  g(3, 3) = 0.85; g(3, 5) = 0.15;
  g(4, 4) = 1.0;
  g(5, 5) = 1.0;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(N);
  delta[0] = 1.0;

  // (depth change mean, sd), heading variation (mean, sd), jerk (mean, sd)
  const double par[6][6] = {
      {2.5, 0.8, 0.30, 0.15, 1.0, 0.4},   // descent
      {0.0, 0.5, 0.40, 0.20, 0.9, 0.3},   // bottom
      {0.0, 1.2, 1.50, 0.60, 2.0, 0.8},   // chase
      {0.0, 1.5, 2.50, 0.80, 5.0, 1.5},   // capture
      {-2.5, 0.8, 0.35, 0.15, 1.1, 0.4},  // ascent without fish
      {-2.5, 0.8, 0.35, 0.15, 1.1, 0.4},  // ascent with fish
  };
  std::vector<std::vector<Emission>> per_state(N);
  for (int i = 0; i < N; ++i) {
    per_state[i] = {Normal{par[i][0], par[i][1]}, Gamma{par[i][2], par[i][3]},
                    Gamma{par[i][4], par[i][5]}};
  }
  EmissionModel em({"depth_change", "heading_variation", "jerk_peak"},
                   {EmissionComponent{{"depth_change"}, {0}, Family::kNormal},
                    EmissionComponent{{"heading_variation"}, {1}, Family::kGamma},
                    EmissionComponent{{"jerk_peak"}, {2}, Family::kGamma}},
                   std::move(per_state));
  p.spec.model = PhmmModel{InitialDistribution(delta), TransitionMatrix(g, mask), em,
                           PerfectLabels{}};
  p.spec.state_names = {"descent", "bottom", "chase", "capture", "ascent_without_fish",
                        "ascent_with_fish"};
  p.spec.default_alpha = 0.01;
  auto& cons = p.spec.constraints;
  cons.initial_fixed = true;
  for (int i : {1, 2, 3}) cons.fixed.push_back({ParamRef{i, 0, ParamKind::kLocation, 0}, 0.0});
  cons.tie_states(em, 4, 5);

  auto& sc = p.scenario;
  sc.model = p.spec.model;
  sc.lengths = lengths_summing_to(130, 15821, 70, 174, 0xC52);
  sc.policy = LabelPolicy::kDiveEvents;
  sc.seed = seed;
  sc.id_prefix = "dive";
  return p;
}

// Two classes observed through an overlapping signal x, plus a feature u
// driven by an independent, strongly separated regime. The truth is the
// product chain (class, regime); labels report the class only.
Preset preset_overlap(std::uint64_t seed) {
  Preset p;
  p.name = "overlap";
  const Eigen::Matrix2d gc = (Eigen::Matrix2d() << 0.98, 0.02, 0.02, 0.98).finished();
  const Eigen::Matrix2d gr = (Eigen::Matrix2d() << 0.99, 0.01, 0.01, 0.99).finished();
  const double x_mean[2] = {0.0, 1.0};
  const double u_mean[2] = {0.0, 3.0};

  Eigen::MatrixXd g(4, 4);
  std::vector<std::vector<Emission>> truth(4);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(4, 4);
  for (int c = 0; c < 2; ++c) {
    for (int r = 0; r < 2; ++r) {
      const int i = 2 * c + r;
      for (int c2 = 0; c2 < 2; ++c2) {
        for (int r2 = 0; r2 < 2; ++r2) g(i, 2 * c2 + r2) = gc(c, c2) * gr(r, r2);
      }
      truth[i] = {Normal{x_mean[c], 1.0}, Normal{u_mean[r], 1.0}};
      beta(i, c) = 1.0;
    }
  }
  const std::vector<std::string> features = {"x", "u"};
  const std::vector<EmissionComponent> comps = {
      EmissionComponent{{"x"}, {0}, Family::kNormal},
      EmissionComponent{{"u"}, {1}, Family::kNormal}};

  auto& sc = p.scenario;
  sc.model = PhmmModel{InitialDistribution::uniform(4), TransitionMatrix(g),
                       EmissionModel(features, comps, truth), CategoricalLabels{beta}};
  sc.lengths.assign(8, 500);
  sc.label_indices = random_label_sets(sc.lengths, std::vector<int>(8, 3), seed ^ 0x0E1);
  sc.seed = seed;
  sc.id_prefix = "seq";

  std::vector<std::vector<Emission>> fit_start(2);
  for (int c = 0; c < 2; ++c) fit_start[c] = {Normal{x_mean[c], 1.0}, Normal{1.5, 1.0}};
  p.spec.model = PhmmModel{InitialDistribution::uniform(2),
                           TransitionMatrix((Eigen::Matrix2d() << 0.9, 0.1, 0.1, 0.9).finished()),
                           EmissionModel(features, comps, fit_start), PerfectLabels{}};
  p.spec.state_names = {"class_a", "class_b"};
  p.spec.default_alpha = 0.1;
  p.hidden_to_state = {0, 0, 1, 1};
  return p;
}

}  // namespace

std::vector<std::string> preset_names() { return {"cs1", "cs2", "overlap"}; }

Preset make_preset(const std::string& name, std::uint64_t seed) {
  Preset p;
  if (name == "cs1") p = preset_cs1(seed);
  else if (name == "cs2") p = preset_cs2(seed);
  else if (name == "overlap") p = preset_overlap(seed);
  else throw InvalidParameter("unknown preset '" + name + "' (cs1|cs2|overlap)");
  if (p.hidden_to_state.empty()) {
    p.hidden_to_state.resize(p.scenario.model.n_states());
    std::iota(p.hidden_to_state.begin(), p.hidden_to_state.end(), 0);
  }
  return p;
}

}  // namespace phmm
