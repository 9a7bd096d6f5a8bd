#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "phmm/distributions.hpp"

namespace phmm {

struct PhmmModel;

// Which natural parameter of an emission component a constraint addresses.
//   kLocation   - mean (normal, gamma) or log-mean (lognormal, mvlognormal[index])
//   kScale      - sd (normal, gamma) or log-sd (lognormal)
//   kCovariance - the whole log-scale covariance of an mvlognormal
enum class ParamKind { kLocation, kScale, kCovariance };

struct ParamRef {
  int state = 0;      // 0-based
  int component = 0;  // index into EmissionModel::components()
  ParamKind kind = ParamKind::kLocation;
  int index = 0;      // coordinate of an mvlognormal log-mean

  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

std::string to_string(const ParamRef& ref, const EmissionModel& emissions);

// Natural parameter name used in config files ("mean", "sd", "log_mean", ...).
std::string_view param_name(Family family, ParamKind kind);
ParamKind parse_param_kind(Family family, std::string_view name);

// Every ParamRef that exists for one (state, component).
std::vector<ParamRef> component_params(const EmissionModel& emissions, int state,
                                       int component);

struct FixedParam {
  ParamRef ref;
  double value = 0.0;
};

struct ConstraintSet {
  std::vector<FixedParam> fixed;
  // Each group is forced to a single common value during fitting.
  std::vector<std::vector<ParamRef>> share_groups;
  bool initial_fixed = false;
  // Categorical label probabilities are estimated unless this is set.
  bool labels_fixed = false;

  // Share every emission parameter of state a with state b.
  void tie_states(const EmissionModel& emissions, int a, int b);
  bool is_fixed(const ParamRef& ref) const;
  // Index of the share group containing ref, or -1.
  int share_group_of(const ParamRef& ref) const;
};

// Throws ConstraintViolation when the declarations are inconsistent with each
// other or with the model's component layout.
void validate(const ConstraintSet& constraints, const PhmmModel& model);

// Reads/writes a single scalar natural parameter. Not valid for kCovariance.
double get_param(const EmissionModel& emissions, const ParamRef& ref);
void set_param(EmissionModel& emissions, const ParamRef& ref, double value);

}  // namespace phmm
