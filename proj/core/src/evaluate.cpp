#include "phmm/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "phmm/error.hpp"

namespace phmm {

std::string to_string(FoldScheme scheme) {
  return scheme == FoldScheme::kSubprofile ? "subprofile" : "stratified";
}

FoldScheme parse_fold_scheme(const std::string& name) {
  if (name == "subprofile") return FoldScheme::kSubprofile;
  if (name == "stratified") return FoldScheme::kStratified;
  throw InvalidParameter("unknown fold scheme '" + name + "' (subprofile|stratified)");
}

void FoldPlan::validate(const Dataset& data) const {
  if (folds.empty()) throw InvalidParameter("fold plan has no folds");
  std::set<std::string> ids;
  for (const auto& s : data.series) ids.insert(s.id);
  std::set<std::string> seen;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) throw InvalidParameter("fold " + std::to_string(f) + " is empty");
    for (const auto& id : folds[f]) {
      if (!ids.count(id)) throw InvalidParameter("fold unit '" + id + "' is not in the dataset");
      if (!seen.insert(id).second) {
        throw InvalidParameter("unit '" + id + "' appears in more than one fold");
      }
    }
  }
}

std::pair<LabeledSeries, LabeledSeries> split_subprofiles(const LabeledSeries& series,
                                                          std::uint64_t seed) {
  const auto idx = series.labelled_indices();
  const int L = static_cast<int>(idx.size());
  if (L < 2) {
    throw CannotSplit("series '" + series.id + "' has " + std::to_string(L) +
                      " labels; at least 2 are needed to split it");
  }
  const int first = (L + 1) / 2;
  // First part = [0, cut) holds exactly `first` labels.
  const int lo = idx[first - 1] + 1;
  const int hi = idx[first];
  std::mt19937_64 rng(seed);
  const int cut = std::uniform_int_distribution<int>(lo, hi)(rng);
  return {series.slice(0, cut, series.id + "/a"),
          series.slice(cut, series.length(), series.id + "/b")};
}

Dataset subprofile_dataset(const Dataset& data, std::uint64_t seed) {
  Dataset out;
  out.feature_names = data.feature_names;
  for (std::size_t s = 0; s < data.series.size(); ++s) {
    auto [a, b] = split_subprofiles(data.series[s], restart_seed(seed, static_cast<int>(s)));
    out.series.push_back(std::move(a));
    out.series.push_back(std::move(b));
  }
  return out;
}

FoldPlan subprofile_plan(const Dataset& data, std::uint64_t seed) {
  FoldPlan plan;
  plan.scheme = FoldScheme::kSubprofile;
  plan.seed = seed;
  for (const auto& s : data.series) plan.folds.push_back({s.id});
  return plan;
}

FoldPlan make_stratified_folds(const std::vector<OutcomeUnit>& units, int k,
                               std::uint64_t seed) {
  if (k < 2) throw InvalidParameter("stratified cross-validation needs k >= 2");
  if (k > static_cast<int>(units.size())) {
    throw InvalidParameter("k = " + std::to_string(k) + " exceeds the " +
                           std::to_string(units.size()) + " evaluation units");
  }
  std::vector<std::string> pos, neg;
  for (const auto& u : units) (u.positive ? pos : neg).push_back(u.id);
  if (pos.empty() || neg.empty()) {
    throw InvalidParameter("stratified folds need both outcome classes");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  FoldPlan plan;
  plan.scheme = FoldScheme::kStratified;
  plan.seed = seed;
  plan.folds.resize(k);
  int slot = 0;
  for (const auto* cls : {&pos, &neg}) {
    for (const auto& id : *cls) {
      plan.folds[slot].push_back(id);
      slot = (slot + 1) % k;
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------

Dataset training_set(const Dataset& data, const FoldPlan& plan, int fold) {
  const std::set<std::string> held(plan.folds.at(fold).begin(), plan.folds.at(fold).end());
  Dataset train;
  train.feature_names = data.feature_names;
  for (const auto& s : data.series) {
    if (!held.count(s.id)) train.series.push_back(s);
  }
  return train;
}

Decoding decode_unlabelled(const PhmmModel& model, const LabeledSeries& series) {
  const LabeledSeries bare = series.without_labels();
  const std::vector<double> ones(bare.length(), 1.0);
  const Eigen::MatrixXd log_e =
      weighted_emission_log_matrix(bare, model.emissions, model.labels, ones);
  return decode(model.initial, model.transition, log_e);
}

CvResult cross_validate(const ModelSpec& spec, const Dataset& data, double alpha,
                        const FoldPlan& plan, const CvOptions& options) {
  check_alpha(alpha);
  plan.validate(data);
  const int F = plan.size();

  std::vector<std::optional<FitResult>> fits(F);
  std::vector<std::string> errors(F);
  const int n_threads = std::clamp(options.threads, 1, F);
  auto run_fold = [&](int f) {
    FitOptions fo = options.fit;
    fo.seed = restart_seed(options.fit.seed, f);
    if (n_threads > 1) fo.threads = 1;
    try {
      fits[f] = fit(spec, training_set(data, plan, f), alpha, fo);
    } catch (const Error& e) {
      errors[f] = e.what();
    }
  };
  if (n_threads == 1) {
    for (int f = 0; f < F; ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> workers;
    for (int k = 0; k < n_threads; ++k) {
      workers.emplace_back([&] {
        for (int f = next++; f < F; f = next++) run_fold(f);
      });
    }
  }
  for (int f = 0; f < F; ++f) {
    if (!fits[f]) {
      std::string ids;
      for (const auto& id : plan.folds[f]) ids += (ids.empty() ? "" : ",") + id;
      throw FitFailure("fold " + std::to_string(f) + " (" + ids + "): " + errors[f]);
    }
  }

  std::map<std::string, int> fold_of;
  for (int f = 0; f < F; ++f) {
    for (const auto& id : plan.folds[f]) fold_of[id] = f;
  }
  CvResult out;
  out.alpha = alpha;
  out.plan = plan;
  for (const auto& s : data.series) {
    const auto it = fold_of.find(s.id);
    if (it == fold_of.end()) continue;
    HeldOutUnit unit;
    unit.id = s.id;
    unit.fold = it->second;
    unit.decoding = decode_unlabelled(fits[it->second]->model, s);
    unit.truth = s.labels;
    out.units.push_back(std::move(unit));
  }
  for (int f = 0; f < F; ++f) {
    out.folds.push_back({f, fits[f]->objective, fits[f]->converged(), fits[f]->best_restart});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SensSpec> sensitivity_specificity(std::span<const int> predicted,
                                              std::span<const int> truth, int n_states) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction/truth length mismatch");
  if (truth.empty()) throw UndefinedMetric("no labelled units to score");
  std::vector<SensSpec> out(n_states);
  for (int i = 0; i < n_states; ++i) {
    int tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const bool actual = truth[k] == i;
      const bool said = predicted[k] == i;
      if (actual) (said ? tp : fn)++;
      else (said ? fp : tn)++;
    }
    auto& r = out[i];
    r.positives = tp + fn;
    r.negatives = tn + fp;
    if (r.positives > 0) r.sensitivity = static_cast<double>(tp) / r.positives;
    if (r.negatives > 0) r.specificity = static_cast<double>(tn) / r.negatives;
  }
  return out;
}

double auc(std::span<const ScoredOutcome> scores) {
  std::vector<double> neg;
  std::int64_t n_pos = 0;
  for (const auto& s : scores) {
    if (s.positive) ++n_pos;
    else neg.push_back(s.score);
  }
  if (n_pos == 0 || neg.empty()) {
    throw UndefinedMetric("AUC needs both positive and negative units");
  }
  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney count, kept integral so the result is exact.
  std::int64_t twice = 0;
  for (const auto& s : scores) {
    if (!s.positive) continue;
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s.score);
    const auto hi = std::upper_bound(lo, neg.end(), s.score);
    twice += 2 * (lo - neg.begin()) + (hi - lo);
  }
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(neg.size()));
}

double terminal_event_probability(const Decoding& decoding, std::span<const int> states) {
  const Eigen::Index T = decoding.posterior.rows();
  const Eigen::Index N = decoding.posterior.cols();
  if (T == 0) throw ShapeError("empty decoding");
  double p = 0.0;
  std::set<int> seen;
  for (int i : states) {
    if (i < 0 || i >= N) throw InvalidParameter("event state out of range");
    if (seen.insert(i).second) p += decoding.posterior(T - 1, i);
  }
  return std::min(p, 1.0);
}

std::vector<bool> classify_by_threshold(std::span<const double> probabilities, double threshold) {
  std::vector<bool> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) out.push_back(p > threshold);
  return out;
}

std::string to_string(AucMode mode) { return mode == AucMode::kPooled ? "pooled" : "fold-mean"; }

AucMode parse_auc_mode(const std::string& name) {
  if (name == "pooled") return AucMode::kPooled;
  if (name == "fold-mean") return AucMode::kFoldMean;
  throw InvalidParameter("unknown AUC mode '" + name + "' (pooled|fold-mean)");
}

void MetricsReport::append(const MetricsReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

namespace {

// AUC over all scores, or the mean of the per-fold AUCs that are defined.
std::pair<std::optional<double>, int> auc_by_mode(const std::vector<ScoredOutcome>& scores,
                                                  const std::vector<int>& folds, int n_folds,
                                                  AucMode mode) {
  const int n = static_cast<int>(scores.size());
  if (mode == AucMode::kPooled) {
    try {
      return {auc(scores), n};
    } catch (const UndefinedMetric&) {
      return {std::nullopt, n};
    }
  }
  double sum = 0.0;
  int defined = 0;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<ScoredOutcome> part;
    for (int k = 0; k < n; ++k) {
      if (folds[k] == f) part.push_back(scores[k]);
    }
    try {
      sum += auc(part);
      ++defined;
    } catch (const UndefinedMetric&) {
    }
  }
  if (defined == 0) return {std::nullopt, n};
  return {sum / defined, n};
}

}  // namespace

MetricsReport state_metrics(const CvResult& cv, const std::vector<std::string>& state_names,
                            AucMode mode) {
  std::vector<int> predicted, truth, folds;
  std::vector<Eigen::VectorXd> posts;
  for (const auto& u : cv.units) {
    for (std::size_t t = 0; t < u.truth.size(); ++t) {
      if (!u.truth[t]) continue;
      Eigen::Index arg = 0;
      u.decoding.posterior.row(static_cast<Eigen::Index>(t)).maxCoeff(&arg);
      predicted.push_back(static_cast<int>(arg));
      truth.push_back(*u.truth[t]);
      folds.push_back(u.fold);
      posts.push_back(u.decoding.posterior.row(static_cast<Eigen::Index>(t)).transpose());
    }
  }
  const int N = static_cast<int>(state_names.size());
  MetricsReport report;
  if (truth.empty()) return report;
  const auto ss = sensitivity_specificity(predicted, truth, N);
  for (int i = 0; i < N; ++i) {
    report.rows.push_back({cv.alpha, state_names[i], "sensitivity", ss[i].sensitivity,
                           ss[i].positives});
    report.rows.push_back({cv.alpha, state_names[i], "specificity", ss[i].specificity,
                           ss[i].negatives});
    std::vector<ScoredOutcome> scores;
    for (std::size_t k = 0; k < truth.size(); ++k) scores.push_back({posts[k][i], truth[k] == i});
    const auto [value, n] = auc_by_mode(scores, folds, cv.plan.size(), mode);
    report.rows.push_back({cv.alpha, state_names[i], "auc", value, n});
  }
  return report;
}

std::optional<bool> unit_outcome(std::span<const Label> labels, const EventDefinition& event) {
  bool neg = false;
  for (const auto& z : labels) {
    if (!z) continue;
    if (std::find(event.positive_labels.begin(), event.positive_labels.end(), *z) !=
        event.positive_labels.end()) {
      return true;
    }
    if (std::find(event.negative_labels.begin(), event.negative_labels.end(), *z) !=
        event.negative_labels.end()) {
      neg = true;
    }
  }
  if (neg) return false;
  return std::nullopt;
}

MetricsReport event_metrics(const CvResult& cv, const EventDefinition& event, AucMode mode) {
  std::vector<ScoredOutcome> scores;
  std::vector<int> folds;
  for (const auto& u : cv.units) {
    const auto outcome = unit_outcome(u.truth, event);
    if (!outcome) continue;
    scores.push_back({terminal_event_probability(u.decoding, event.event_states), *outcome});
    folds.push_back(u.fold);
  }
  MetricsReport report;
  if (scores.empty()) return report;
  std::vector<double> probs;
  std::vector<int> predicted, truth;
  for (const auto& s : scores) probs.push_back(s.score);
  const auto cls = classify_by_threshold(probs, event.threshold);
  for (std::size_t k = 0; k < scores.size(); ++k) {
    predicted.push_back(cls[k] ? 1 : 0);
    truth.push_back(scores[k].positive ? 1 : 0);
  }
  const auto ss = sensitivity_specificity(predicted, truth, 2);
  report.rows.push_back({cv.alpha, event.name, "sensitivity", ss[1].sensitivity, ss[1].positives});
  report.rows.push_back({cv.alpha, event.name, "specificity", ss[1].specificity, ss[1].negatives});
  const auto [value, n] = auc_by_mode(scores, folds, cv.plan.size(), mode);
  report.rows.push_back({cv.alpha, event.name, "auc", value, n});
  return report;
}

namespace {

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "alpha,target,metric,value,units\n";
  for (const auto& r : report.rows) {
    os << format17(r.alpha) << ',' << r.target << ',' << r.metric << ','
       << (r.value ? format17(*r.value) : std::string()) << ',' << r.units << '\n';
  }
  return os.str();
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s  %-24s  %-12s  %8s  %6s\n", "alpha", "target", "metric",
                "value", "units");
  os << line;
  for (const auto& r : report.rows) {
    const std::string value = r.value ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", *r.value);
      return std::string(b);
    }()
                                      : std::string("-");
    std::snprintf(line, sizeof line, "%-8.4g  %-24s  %-12s  %8s  %6d\n", r.alpha,
                  r.target.c_str(), r.metric.c_str(), value.c_str(), r.units);
    os << line;
  }
  return os.str();
}

}  // namespace phmm
