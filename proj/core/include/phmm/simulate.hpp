#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phmm/parameterization.hpp"

namespace phmm {

// How label indices are chosen.
//   kFixedIndices: label_indices[s] is the index set of series s.
//   kDiveEvents:   every series is labelled at index 0; then, drawn at random
//                  among eligible series, `capture_labels` series get a label
//                  at their first visit to capture_state, `fish_labels` series
//                  ending in fish_state and `no_fish_labels` series ending in
//                  no_fish_state get a label at their last index.
enum class LabelPolicy { kFixedIndices, kDiveEvents };

struct DiveEventQuota {
  int capture_state = 3;
  int fish_state = 5;
  int no_fish_state = 4;
  int capture_labels = 5;
  int fish_labels = 2;
  int no_fish_labels = 19;
};

struct SimulationScenario {
  PhmmModel model;
  std::vector<int> lengths;
  std::vector<std::vector<int>> label_indices;  // 0-based, per series
  LabelPolicy policy = LabelPolicy::kFixedIndices;
  DiveEventQuota quota;
  std::uint64_t seed = 1;
  std::string id_prefix = "s";

  // Throws InvalidParameter / ShapeError.
  void validate() const;
};

struct SimulatedData {
  Dataset data;
  std::vector<std::vector<int>> hidden;  // 0-based states, per series
};

// Series s is drawn from its own generator seeded with
// restart_seed(scenario.seed, s), so series are independent of each other.
SimulatedData simulate_phmm(const SimulationScenario& scenario);

// ---------------------------------------------------------------------------
// Exhaustive oracles over all N^T paths of a single sequence with the given
// T x N log-emission terms. Throw SizeError when N^T > 1e6.

double brute_force_likelihood(const InitialDistribution& delta, const TransitionMatrix& gamma,
                              const Eigen::MatrixXd& log_emission);
Eigen::MatrixXd brute_force_posterior(const InitialDistribution& delta,
                                      const TransitionMatrix& gamma,
                                      const Eigen::MatrixXd& log_emission);
// First maximizer in lexicographic path order.
std::vector<int> brute_force_map_path(const InitialDistribution& delta,
                                      const TransitionMatrix& gamma,
                                      const Eigen::MatrixXd& log_emission);

// ---------------------------------------------------------------------------
// Shipped scenarios. `spec` carries the fitting constraints and the truth
// as its model; the scenario simulates from that truth.

struct Preset {
  std::string name;
  ModelSpec spec;
  SimulationScenario scenario;
  // Fitted-model state that each simulated hidden state corresponds to.
  std::vector<int> hidden_to_state;
};

std::vector<std::string> preset_names();
// "cs1": 3 dive types, bivariate log-normal dive summaries, 11 series.
// "cs2": 6 sub-dive states with the structured transition mask, 130 dives.
// "overlap": 2 states with overlapping emissions, a nuisance regime and
//            under 1% labels.
Preset make_preset(const std::string& name, std::uint64_t seed = 1);

}  // namespace phmm
