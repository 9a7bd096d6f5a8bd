#include "phmm/constraints.hpp"

#include <algorithm>

#include "phmm/error.hpp"
#include "phmm/weighting.hpp"

namespace phmm {
namespace {

void check_ref(const EmissionModel& emissions, const ParamRef& ref) {
  if (ref.state < 0 || ref.state >= emissions.n_states() || ref.component < 0 ||
      ref.component >= emissions.n_components()) {
    throw ConstraintViolation("parameter reference out of range");
  }
  const auto& comp = emissions.components()[ref.component];
  const bool multi = comp.family == Family::kMultivariateLogNormal;
  if (ref.kind == ParamKind::kCovariance && !multi) {
    throw ConstraintViolation("log_cov only exists for mvlognormal components");
  }
  if (ref.kind == ParamKind::kScale && multi) {
    throw ConstraintViolation("mvlognormal scales are addressed through log_cov");
  }
  const int dim = static_cast<int>(comp.columns.size());
  if (ref.index < 0 || (ref.kind == ParamKind::kLocation && ref.index >= dim) ||
      (ref.kind != ParamKind::kLocation && ref.index != 0)) {
    throw ConstraintViolation("parameter coordinate out of range");
  }
}

}  // namespace

std::string_view param_name(Family family, ParamKind kind) {
  const bool log_scale = family == Family::kLogNormal || family == Family::kMultivariateLogNormal;
  switch (kind) {
    case ParamKind::kLocation: return log_scale ? "log_mean" : "mean";
    case ParamKind::kScale: return log_scale ? "log_sd" : "sd";
    case ParamKind::kCovariance: return "log_cov";
  }
  return "?";
}

ParamKind parse_param_kind(Family family, std::string_view name) {
  for (auto kind : {ParamKind::kLocation, ParamKind::kScale, ParamKind::kCovariance}) {
    if (param_name(family, kind) == name) return kind;
  }
  throw ConstraintViolation("unknown parameter '" + std::string(name) + "' for family " +
                            std::string(family_name(family)));
}

std::string to_string(const ParamRef& ref, const EmissionModel& emissions) {
  const auto& comp = emissions.components().at(ref.component);
  std::string name;
  for (std::size_t k = 0; k < comp.features.size(); ++k) {
    name += (k ? "+" : "") + comp.features[k];
  }
  std::string out = "state " + std::to_string(ref.state + 1) + " " + name + "." +
                    std::string(param_name(comp.family, ref.kind));
  if (comp.family == Family::kMultivariateLogNormal && ref.kind == ParamKind::kLocation) {
    out += "[" + std::to_string(ref.index) + "]";
  }
  return out;
}

std::vector<ParamRef> component_params(const EmissionModel& emissions, int state,
                                       int component) {
  const auto& comp = emissions.components().at(component);
  std::vector<ParamRef> out;
  if (comp.family == Family::kMultivariateLogNormal) {
    for (int k = 0; k < static_cast<int>(comp.columns.size()); ++k) {
      out.push_back({state, component, ParamKind::kLocation, k});
    }
    out.push_back({state, component, ParamKind::kCovariance, 0});
  } else {
    out.push_back({state, component, ParamKind::kLocation, 0});
    out.push_back({state, component, ParamKind::kScale, 0});
  }
  return out;
}

void ConstraintSet::tie_states(const EmissionModel& emissions, int a, int b) {
  for (int c = 0; c < emissions.n_components(); ++c) {
    const auto pa = component_params(emissions, a, c);
    const auto pb = component_params(emissions, b, c);
    for (std::size_t k = 0; k < pa.size(); ++k) {
      const int ga = share_group_of(pa[k]);
      const int gb = share_group_of(pb[k]);
      if (ga >= 0 && gb >= 0) {
        if (ga == gb) continue;
        auto& dst = share_groups[ga];
        auto src = share_groups[gb];
        dst.insert(dst.end(), src.begin(), src.end());
        share_groups.erase(share_groups.begin() + gb);
      } else if (ga >= 0) {
        share_groups[ga].push_back(pb[k]);
      } else if (gb >= 0) {
        share_groups[gb].push_back(pa[k]);
      } else {
        share_groups.push_back({pa[k], pb[k]});
      }
    }
  }
}

bool ConstraintSet::is_fixed(const ParamRef& ref) const {
  return std::any_of(fixed.begin(), fixed.end(),
                     [&](const FixedParam& f) { return f.ref == ref; });
}

int ConstraintSet::share_group_of(const ParamRef& ref) const {
  for (std::size_t g = 0; g < share_groups.size(); ++g) {
    if (std::find(share_groups[g].begin(), share_groups[g].end(), ref) !=
        share_groups[g].end()) {
      return static_cast<int>(g);
    }
  }
  return -1;
}

double get_param(const EmissionModel& emissions, const ParamRef& ref) {
  check_ref(emissions, ref);
  const Emission& e = emissions.emission(ref.state, ref.component);
  if (const auto* n = std::get_if<Normal>(&e)) {
    return ref.kind == ParamKind::kLocation ? n->mean : n->sd;
  }
  if (const auto* g = std::get_if<Gamma>(&e)) {
    return ref.kind == ParamKind::kLocation ? g->mean : g->sd;
  }
  if (const auto* l = std::get_if<LogNormal>(&e)) {
    return ref.kind == ParamKind::kLocation ? l->log_mean : l->log_sd;
  }
  const auto& m = std::get<MultivariateLogNormal>(e);
  if (ref.kind != ParamKind::kLocation) {
    throw ConstraintViolation("log_cov is not a scalar parameter");
  }
  return m.log_mean[ref.index];
}

void set_param(EmissionModel& emissions, const ParamRef& ref, double value) {
  check_ref(emissions, ref);
  Emission e = emissions.emission(ref.state, ref.component);
  if (auto* n = std::get_if<Normal>(&e)) {
    (ref.kind == ParamKind::kLocation ? n->mean : n->sd) = value;
  } else if (auto* g = std::get_if<Gamma>(&e)) {
    (ref.kind == ParamKind::kLocation ? g->mean : g->sd) = value;
  } else if (auto* l = std::get_if<LogNormal>(&e)) {
    (ref.kind == ParamKind::kLocation ? l->log_mean : l->log_sd) = value;
  } else {
    auto& m = std::get<MultivariateLogNormal>(e);
    if (ref.kind != ParamKind::kLocation) {
      throw ConstraintViolation("log_cov is not a scalar parameter");
    }
    m.log_mean[ref.index] = value;
  }
  emissions.set_emission(ref.state, ref.component, std::move(e));
}

void validate(const ConstraintSet& constraints, const PhmmModel& model) {
  const auto& em = model.emissions;
  for (const auto& f : constraints.fixed) {
    check_ref(em, f.ref);
    if (f.ref.kind == ParamKind::kCovariance) {
      throw ConstraintViolation("fixing a whole covariance is not supported");
    }
    if (constraints.share_group_of(f.ref) >= 0) {
      throw ConstraintViolation("parameter is both fixed and shared: " + to_string(f.ref, em));
    }
    const auto n_fixed = std::count_if(constraints.fixed.begin(), constraints.fixed.end(),
                                       [&](const FixedParam& o) { return o.ref == f.ref; });
    if (n_fixed > 1) throw ConstraintViolation("parameter fixed twice: " + to_string(f.ref, em));
  }
  for (const auto& group : constraints.share_groups) {
    if (group.size() < 2) throw ConstraintViolation("share group needs at least two members");
    for (const auto& ref : group) check_ref(em, ref);
    const auto& first = group.front();
    const auto& comp0 = em.components()[first.component];
    for (const auto& ref : group) {
      const auto& comp = em.components()[ref.component];
      if (comp.family != comp0.family || comp.columns.size() != comp0.columns.size() ||
          ref.kind != first.kind) {
        throw ConstraintViolation("share group mixes incompatible parameters");
      }
    }
  }
  for (std::size_t g = 0; g < constraints.share_groups.size(); ++g) {
    for (const auto& ref : constraints.share_groups[g]) {
      if (constraints.share_group_of(ref) != static_cast<int>(g)) {
        throw ConstraintViolation("parameter appears in several share groups: " +
                                  to_string(ref, em));
      }
    }
  }
}

}  // namespace phmm
