#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phmm/estimate.hpp"

namespace phmm {

// ---------------------------------------------------------------------------
// Fold plans

enum class FoldScheme { kSubprofile, kStratified };

std::string to_string(FoldScheme scheme);
FoldScheme parse_fold_scheme(const std::string& name);

// Folds of evaluation-unit ids. Units of the dataset that appear in no fold
// are always part of the training data.
struct FoldPlan {
  std::vector<std::vector<std::string>> folds;
  FoldScheme scheme = FoldScheme::kSubprofile;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(folds.size()); }
  // Throws InvalidParameter on an empty fold, a duplicated id or an id not
  // present in `data`.
  void validate(const Dataset& data) const;
};

// Cuts a series into two contiguous parts carrying ceil(L/2) and floor(L/2)
// of its L labels. The cut is drawn uniformly among the valid positions; the
// parts are named "<id>/a" and "<id>/b". Throws CannotSplit for L < 2.
std::pair<LabeledSeries, LabeledSeries> split_subprofiles(const LabeledSeries& series,
                                                          std::uint64_t seed);

// Every series split in two (series s uses restart_seed(seed, s)), in order.
Dataset subprofile_dataset(const Dataset& data, std::uint64_t seed);

// One fold per series of `data`.
FoldPlan subprofile_plan(const Dataset& data, std::uint64_t seed = 0);

struct OutcomeUnit {
  std::string id;
  bool positive = false;
};

// k folds with per-class counts differing by at most one. Each class is
// shuffled and dealt round-robin; the dealing position carries over from the
// positives to the negatives so fold sizes stay balanced too.
FoldPlan make_stratified_folds(const std::vector<OutcomeUnit>& units, int k,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation

struct CvOptions {
  FitOptions fit;
  int threads = 1;  // folds evaluated concurrently
};

struct HeldOutUnit {
  std::string id;
  int fold = 0;
  Decoding decoding;         // computed with every label removed
  std::vector<Label> truth;  // the labels that were removed
};

struct FoldSummary {
  int fold = 0;
  double objective = 0.0;
  bool converged = false;
  int best_restart = -1;
};

struct CvResult {
  double alpha = 1.0;
  FoldPlan plan;
  std::vector<HeldOutUnit> units;  // in dataset order
  std::vector<FoldSummary> folds;
};

// The fit input of fold `fold`: all series outside it, labels intact, in
// dataset order.
Dataset training_set(const Dataset& data, const FoldPlan& plan, int fold);

// For each fold: fit on the complement, then decode every held-out unit with
// its labels stripped and unit weights. Fold f fits with seed
// restart_seed(options.fit.seed, f). Throws FitFailure naming the fold.
CvResult cross_validate(const ModelSpec& spec, const Dataset& data, double alpha,
                        const FoldPlan& plan, const CvOptions& options = {});

// Decoding of a label-free copy of `series` under `model`.
Decoding decode_unlabelled(const PhmmModel& model, const LabeledSeries& series);

// ---------------------------------------------------------------------------
// Metrics

struct SensSpec {
  std::optional<double> sensitivity;  // absent without positives
  std::optional<double> specificity;  // absent without negatives
  int positives = 0;
  int negatives = 0;
};

// One-vs-rest per state over paired (predicted, true) 0-based states.
std::vector<SensSpec> sensitivity_specificity(std::span<const int> predicted,
                                              std::span<const int> truth, int n_states);

struct ScoredOutcome {
  double score = 0.0;
  bool positive = false;
};

// Mann-Whitney: share of (positive, negative) pairs ordered correctly, ties
// counting one half. Throws UndefinedMetric when a class is missing.
double auc(std::span<const ScoredOutcome> scores);

// Sum of the last posterior row over `states` (0-based); 0 for an empty set.
double terminal_event_probability(const Decoding& decoding, std::span<const int> states);

// p > threshold, strictly.
std::vector<bool> classify_by_threshold(std::span<const double> probabilities,
                                        double threshold = 0.5);

enum class AucMode { kPooled, kFoldMean };

std::string to_string(AucMode mode);
AucMode parse_auc_mode(const std::string& name);

struct MetricRow {
  double alpha = 1.0;
  std::string target;  // state name or event name
  std::string metric;  // sensitivity | specificity | auc | ...
  std::optional<double> value;
  int units = 0;  // evaluation units behind the value
};

struct MetricsReport {
  std::vector<MetricRow> rows;

  void append(const MetricsReport& other);
};

// Per-state metrics over the labelled indices of the held-out units;
// prediction = argmax posterior, AUC score = the state's posterior.
MetricsReport state_metrics(const CvResult& cv, const std::vector<std::string>& state_names,
                            AucMode mode);

// Per-unit event metrics: score = terminal_event_probability(event_states);
// a unit is positive if it carries a label in `positive_labels`, negative if
// it carries one in `negative_labels` (and none of the positives), and is
// skipped otherwise.
struct EventDefinition {
  std::string name = "event";
  std::vector<int> event_states;
  std::vector<int> positive_labels;
  std::vector<int> negative_labels;
  double threshold = 0.5;
};

std::optional<bool> unit_outcome(std::span<const Label> labels, const EventDefinition& event);

MetricsReport event_metrics(const CvResult& cv, const EventDefinition& event, AucMode mode);

std::string metrics_csv(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);

}  // namespace phmm
