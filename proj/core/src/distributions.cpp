#include "phmm/distributions.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>

#include "phmm/error.hpp"

namespace phmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidParameter(std::string("non-finite ") + what);
  }
}

void require_scale(double v, const char* what) {
  require_finite(v, what);
  if (v <= 0.0) throw InvalidParameter(std::string(what) + " must be positive");
}

}  // namespace

Family family_of(const Emission& e) {
  return std::visit(
      Overloaded{[](const Normal&) { return Family::kNormal; },
                 [](const Gamma&) { return Family::kGamma; },
                 [](const LogNormal&) { return Family::kLogNormal; },
                 [](const MultivariateLogNormal&) {
                   return Family::kMultivariateLogNormal;
                 }},
      e);
}

std::string_view family_name(Family f) {
  switch (f) {
    case Family::kNormal: return "normal";
    case Family::kGamma: return "gamma";
    case Family::kLogNormal: return "lognormal";
    case Family::kMultivariateLogNormal: return "mvlognormal";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "normal") return Family::kNormal;
  if (name == "gamma") return Family::kGamma;
  if (name == "lognormal") return Family::kLogNormal;
  if (name == "mvlognormal") return Family::kMultivariateLogNormal;
  throw InvalidParameter("unknown emission family '" + std::string(name) + "'");
}

int dimension(const Emission& e) {
  if (const auto* m = std::get_if<MultivariateLogNormal>(&e)) {
    return static_cast<int>(m->log_mean.size());
  }
  return 1;
}

ShapeRate gamma_mean_sd_to_shape_rate(double mean, double sd) {
  require_scale(mean, "gamma mean");
  require_scale(sd, "gamma sd");
  const double cv = mean / sd;
  return {cv * cv, mean / (sd * sd)};
}

void validate(const Emission& e) {
  std::visit(
      Overloaded{
          [](const Normal& n) {
            require_finite(n.mean, "normal mean");
            require_scale(n.sd, "normal sd");
          },
          [](const Gamma& g) { gamma_mean_sd_to_shape_rate(g.mean, g.sd); },
          [](const LogNormal& l) {
            require_finite(l.log_mean, "lognormal log-mean");
            require_scale(l.log_sd, "lognormal log-sd");
          },
          [](const MultivariateLogNormal& m) {
            const auto d = m.log_mean.size();
            if (d < 2) throw InvalidParameter("mvlognormal needs dimension >= 2");
            if (m.log_cov.rows() != d || m.log_cov.cols() != d) {
              throw InvalidParameter("mvlognormal covariance shape mismatch");
            }
            if (!m.log_mean.allFinite() || !m.log_cov.allFinite()) {
              throw InvalidParameter("non-finite mvlognormal parameter");
            }
            if (!m.log_cov.isApprox(m.log_cov.transpose(), 1e-12)) {
              throw InvalidParameter("mvlognormal covariance not symmetric");
            }
            Eigen::LLT<Eigen::MatrixXd> llt(m.log_cov);
            if (llt.info() != Eigen::Success) {
              throw InvalidParameter("mvlognormal covariance not positive definite");
            }
          }},
      e);
}

PreparedEmission::PreparedEmission(Emission e) : emission_(std::move(e)) {
  validate(emission_);
  std::visit(Overloaded{[&](const Normal& n) {
                          constant_ = -kHalfLog2Pi - std::log(n.sd);
                        },
                        [&](const Gamma& g) {
                          const auto sr = gamma_mean_sd_to_shape_rate(g.mean, g.sd);
                          shape_ = sr.shape;
                          rate_ = sr.rate;
                          constant_ = shape_ * std::log(rate_) - std::lgamma(shape_);
                        },
                        [&](const LogNormal& l) {
                          constant_ = -kHalfLog2Pi - std::log(l.log_sd);
                        },
                        [&](const MultivariateLogNormal& m) {
                          dim_ = static_cast<int>(m.log_mean.size());
                          chol_ = Eigen::LLT<Eigen::MatrixXd>(m.log_cov).matrixL();
                          constant_ = -dim_ * kHalfLog2Pi -
                                      chol_.diagonal().array().log().sum();
                        }},
             emission_);
}

double PreparedEmission::log_density(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw ShapeError("observation dimension does not match emission");
  }
  return std::visit(
      Overloaded{
          [&](const Normal& n) {
            const double z = (x[0] - n.mean) / n.sd;
            return constant_ - 0.5 * z * z;
          },
          [&](const Gamma&) {
            if (x[0] <= 0.0) return kNegInf;
            return constant_ + (shape_ - 1.0) * std::log(x[0]) - rate_ * x[0];
          },
          [&](const LogNormal& l) {
            if (x[0] <= 0.0) return kNegInf;
            const double lx = std::log(x[0]);
            const double z = (lx - l.log_mean) / l.log_sd;
            return constant_ - 0.5 * z * z - lx;
          },
          [&](const MultivariateLogNormal& m) {
            Eigen::VectorXd u(dim_);
            double jacobian = 0.0;
            for (int k = 0; k < dim_; ++k) {
              if (x[k] <= 0.0) return kNegInf;
              u[k] = std::log(x[k]);
              jacobian += u[k];
            }
            const Eigen::VectorXd v =
                chol_.triangularView<Eigen::Lower>().solve(u - m.log_mean);
            return constant_ - 0.5 * v.squaredNorm() - jacobian;
          }},
      emission_);
}

double log_density(const Emission& e, std::span<const double> x) {
  return PreparedEmission(e).log_density(x);
}

double log_density(const Emission& e, double x) {
  return log_density(e, std::span<const double>(&x, 1));
}

std::vector<double> sample(const Emission& e, std::mt19937_64& rng) {
  validate(e);
  return std::visit(
      Overloaded{
          [&](const Normal& n) {
            return std::vector<double>{std::normal_distribution<double>(n.mean, n.sd)(rng)};
          },
          [&](const Gamma& g) {
            const auto sr = gamma_mean_sd_to_shape_rate(g.mean, g.sd);
            return std::vector<double>{
                std::gamma_distribution<double>(sr.shape, 1.0 / sr.rate)(rng)};
          },
          [&](const LogNormal& l) {
            return std::vector<double>{
                std::lognormal_distribution<double>(l.log_mean, l.log_sd)(rng)};
          },
          [&](const MultivariateLogNormal& m) {
            const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(m.log_cov).matrixL();
            std::normal_distribution<double> std_normal;
            Eigen::VectorXd z(m.log_mean.size());
            for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = std_normal(rng);
            const Eigen::VectorXd u = m.log_mean + chol * z;
            std::vector<double> out(u.size());
            for (Eigen::Index k = 0; k < u.size(); ++k) out[k] = std::exp(u[k]);
            return out;
          }},
      e);
}

// ---------------------------------------------------------------------------

void validate(const LabelModel& model, int n_states) {
  if (const auto* c = std::get_if<CategoricalLabels>(&model)) {
    if (c->beta.rows() != n_states || c->beta.cols() != n_states) {
      throw InvalidParameter("categorical label matrix must be N x N");
    }
    for (int i = 0; i < n_states; ++i) {
      if ((c->beta.row(i).array() < 0.0).any() || !c->beta.row(i).allFinite()) {
        throw InvalidParameter("categorical label row has invalid entries");
      }
      if (std::abs(c->beta.row(i).sum() - 1.0) > 1e-12) {
        throw InvalidParameter("categorical label row does not sum to one");
      }
    }
  }
}

double label_log_mass(const LabelModel& model, int state, Label z, int n_states) {
  if (state < 0 || state >= n_states) throw InvalidLabel("state out of range");
  if (!z) return 0.0;
  if (*z < 0 || *z >= n_states) throw InvalidLabel("label out of range");
  return std::visit(Overloaded{[&](const PerfectLabels&) {
                                 return *z == state ? 0.0 : kNegInf;
                               },
                               [&](const CategoricalLabels& c) {
                                 return std::log(c.beta(state, *z));
                               }},
                    model);
}

// ---------------------------------------------------------------------------

EmissionModel::EmissionModel(std::vector<std::string> features,
                             std::vector<EmissionComponent> components,
                             std::vector<std::vector<Emission>> per_state,
                             MissingPolicy missing)
    : features_(std::move(features)),
      components_(std::move(components)),
      per_state_(std::move(per_state)),
      missing_(missing) {
  for (const auto& comp : components_) {
    if (comp.columns.size() != comp.features.size() || comp.columns.empty()) {
      throw ShapeError("emission component has inconsistent feature columns");
    }
    for (int col : comp.columns) {
      if (col < 0 || col >= n_features()) throw ShapeError("component column out of range");
    }
    const bool multi = comp.family == Family::kMultivariateLogNormal;
    if (multi != (comp.columns.size() > 1)) {
      throw ShapeError("only mvlognormal components may span several features");
    }
  }
  for (const auto& row : per_state_) {
    if (static_cast<int>(row.size()) != n_components()) {
      throw ShapeError("every state must list one emission per component");
    }
    for (int c = 0; c < n_components(); ++c) {
      if (family_of(row[c]) != components_[c].family ||
          dimension(row[c]) != static_cast<int>(components_[c].columns.size())) {
        throw ShapeError("state emission family differs from component declaration");
      }
      validate(row[c]);
    }
  }
}

void EmissionModel::set_emission(int state, int component, Emission e) {
  if (family_of(e) != components_.at(component).family) {
    throw ShapeError("replacement emission has a different family");
  }
  validate(e);
  per_state_.at(state).at(component) = std::move(e);
}

Eigen::MatrixXd EmissionModel::log_density_matrix(const FeatureMatrix& y) const {
  if (y.cols() != n_features()) throw ShapeError("feature column count mismatch");
  const Eigen::Index T = y.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, n_states());
  std::vector<double> buf;
  for (int c = 0; c < n_components(); ++c) {
    const auto& cols = components_[c].columns;
    std::vector<PreparedEmission> prepared;
    prepared.reserve(per_state_.size());
    for (const auto& row : per_state_) prepared.emplace_back(row[c]);
    buf.resize(cols.size());
    for (Eigen::Index t = 0; t < T; ++t) {
      bool missing = false;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        buf[k] = y(t, cols[k]);
        if (std::isnan(buf[k])) missing = true;
      }
      if (missing) {
        if (missing_ == MissingPolicy::kError) {
          throw InvalidParameter("missing feature value under strict policy");
        }
        continue;
      }
      for (int i = 0; i < n_states(); ++i) {
        out(t, i) += prepared[i].log_density(buf);
      }
    }
  }
  return out;
}

}  // namespace phmm
