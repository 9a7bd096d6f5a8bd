#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "phmm/estimate.hpp"
#include "phmm/evaluate.hpp"
#include "phmm/simulate.hpp"

namespace phmm::cli {

using json = nlohmann::ordered_json;

// A model config file: the model spec plus an optional event definition used
// by the dive-level commands. States, components, labels and mvlognormal
// coordinates are 1-based in files.
struct ModelConfig {
  ModelSpec spec;
  std::optional<EventDefinition> event;
};

ModelConfig config_from_json(const json& j);
json config_to_json(const ModelSpec& spec, const std::optional<EventDefinition>& event = {});
ModelConfig read_model_config(const std::filesystem::path& path);

struct ScenarioFile {
  SimulationScenario scenario;
  std::vector<std::string> state_names;
  std::vector<int> hidden_to_state;  // 0-based
};

// {"model": <model config>, "scenario": {...}}
ScenarioFile scenario_from_json(const json& j);
json scenario_to_json(const Preset& preset);
ScenarioFile read_scenario(const std::filesystem::path& path);

// The fitted model is embedded as a complete model config, so a fit result
// can seed another run.
json fit_result_to_json(const FitResult& result, const ModelSpec& spec,
                        const std::vector<ParameterEstimate>* standard_errors = nullptr);
// The fitted model stored in a fit-result file, checked against `spec`.
PhmmModel read_fitted_model(const std::filesystem::path& path, const ModelSpec& spec);

json read_json(const std::filesystem::path& path);

}  // namespace phmm::cli
