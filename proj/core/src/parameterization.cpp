#include "phmm/parameterization.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>

#include "phmm/error.hpp"

namespace phmm {
namespace {

const double kLogMinScale = std::log(kMinScale);
constexpr double kMaxLog = 700.0;

double clamp_log_scale(double v) { return std::clamp(v, kLogMinScale, kMaxLog); }

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::abs(a));
}

Eigen::VectorXd simplex_from_working(std::span<const double> w, int n_support) {
  Eigen::VectorXd v(n_support);
  v[0] = 0.0;
  for (int k = 1; k < n_support; ++k) v[k] = w[k - 1];
  const double m = v.maxCoeff();
  v = (v.array() - m).exp();
  return v / v.sum();
}

}  // namespace

// ---------------------------------------------------------------------------

int canonical_size(Family family, int dim) {
  if (family == Family::kMultivariateLogNormal) return dim + dim * (dim + 1) / 2;
  return 2;
}

Eigen::VectorXd canonical_coords(const Emission& e) {
  validate(e);
  if (const auto* n = std::get_if<Normal>(&e)) {
    return Eigen::Vector2d(n->mean, std::log(n->sd));
  }
  if (const auto* g = std::get_if<Gamma>(&e)) {
    return Eigen::Vector2d(std::log(g->mean), std::log(g->sd));
  }
  if (const auto* l = std::get_if<LogNormal>(&e)) {
    return Eigen::Vector2d(l->log_mean, std::log(l->log_sd));
  }
  const auto& m = std::get<MultivariateLogNormal>(e);
  const int d = static_cast<int>(m.log_mean.size());
  Eigen::VectorXd out(canonical_size(Family::kMultivariateLogNormal, d));
  out.head(d) = m.log_mean;
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(m.log_cov).matrixL();
  int k = d;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c <= r; ++c) out[k++] = r == c ? std::log(L(r, r)) : L(r, c);
  }
  return out;
}

Emission from_canonical(Family family, int dim, const Eigen::VectorXd& coords) {
  switch (family) {
    case Family::kNormal:
      return Normal{coords[0], std::exp(clamp_log_scale(coords[1]))};
    case Family::kGamma:
      return Gamma{std::exp(std::clamp(coords[0], -kMaxLog, kMaxLog)),
                   std::exp(clamp_log_scale(coords[1]))};
    case Family::kLogNormal:
      return LogNormal{coords[0], std::exp(clamp_log_scale(coords[1]))};
    case Family::kMultivariateLogNormal: {
      MultivariateLogNormal m;
      m.log_mean = coords.head(dim);
      Eigen::MatrixXd L = Eigen::MatrixXd::Zero(dim, dim);
      int k = dim;
      for (int r = 0; r < dim; ++r) {
        for (int c = 0; c <= r; ++c) {
          L(r, c) = r == c ? std::exp(clamp_log_scale(coords[k])) : coords[k];
          ++k;
        }
      }
      Eigen::MatrixXd cov = L * L.transpose();
      for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < r; ++c) cov(c, r) = cov(r, c);
      }
      m.log_cov = std::move(cov);
      return m;
    }
  }
  throw InvalidParameter("unknown family");
}

void SufficientStats::reset(Family family, int dim) {
  const int d = family == Family::kMultivariateLogNormal ? dim : 1;
  s0 = 0.0;
  s1 = Eigen::VectorXd::Zero(d);
  s2 = Eigen::MatrixXd::Zero(d, d);
}

void SufficientStats::add(Family family, std::span<const double> x, double coef) {
  if (coef == 0.0) return;
  s0 += coef;
  switch (family) {
    case Family::kNormal:
      s1[0] += coef * x[0];
      s2(0, 0) += coef * x[0] * x[0];
      break;
    case Family::kGamma:
      s1[0] += coef * std::log(x[0]);
      s2(0, 0) += coef * x[0];
      break;
    case Family::kLogNormal: {
      const double u = std::log(x[0]);
      s1[0] += coef * u;
      s2(0, 0) += coef * u * u;
      break;
    }
    case Family::kMultivariateLogNormal: {
      const auto d = static_cast<Eigen::Index>(x.size());
      for (Eigen::Index r = 0; r < d; ++r) {
        const double ur = std::log(x[r]);
        s1[r] += coef * ur;
        for (Eigen::Index c = 0; c <= r; ++c) s2(r, c) += coef * ur * std::log(x[c]);
      }
      break;
    }
  }
}

Eigen::VectorXd canonical_gradient(const Emission& e, const SufficientStats& st) {
  if (const auto* n = std::get_if<Normal>(&e)) {
    const double var = n->sd * n->sd;
    const double mu = n->mean;
    const double ss = st.s2(0, 0) - 2.0 * mu * st.s1[0] + mu * mu * st.s0;
    return Eigen::Vector2d((st.s1[0] - mu * st.s0) / var, ss / var - st.s0);
  }
  if (const auto* l = std::get_if<LogNormal>(&e)) {
    const double var = l->log_sd * l->log_sd;
    const double mu = l->log_mean;
    const double ss = st.s2(0, 0) - 2.0 * mu * st.s1[0] + mu * mu * st.s0;
    return Eigen::Vector2d((st.s1[0] - mu * st.s0) / var, ss / var - st.s0);
  }
  if (const auto* g = std::get_if<Gamma>(&e)) {
    const auto [k, r] = gamma_mean_sd_to_shape_rate(g->mean, g->sd);
    const double a = st.s0 * (std::log(r) - boost::math::digamma(k)) + st.s1[0];
    const double sx = st.s2(0, 0);
    return Eigen::Vector2d(2.0 * k * a + k * st.s0 - r * sx,
                           -2.0 * k * a - 2.0 * k * st.s0 + 2.0 * r * sx);
  }
  const auto& m = std::get<MultivariateLogNormal>(e);
  const int d = static_cast<int>(m.log_mean.size());
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(m.log_cov).matrixL();
  const auto Ltri = L.triangularView<Eigen::Lower>();
  const Eigen::VectorXd& mu = m.log_mean;

  Eigen::MatrixXd s2 = st.s2.selfadjointView<Eigen::Lower>();
  const Eigen::MatrixXd R = s2 - st.s1 * mu.transpose() - mu * st.s1.transpose() +
                            st.s0 * mu * mu.transpose();
  Eigen::VectorXd out(canonical_size(Family::kMultivariateLogNormal, d));
  // d/dmu = Sigma^{-1} (s1 - s0 mu)
  Eigen::VectorXd r1 = st.s1 - st.s0 * mu;
  Ltri.solveInPlace(r1);
  Ltri.transpose().solveInPlace(r1);
  out.head(d) = r1;
  // d/dL = L^{-T} (L^{-1} R L^{-T} - s0 I)
  Eigen::MatrixXd M = R;
  Ltri.solveInPlace(M);
  M.transposeInPlace();
  Ltri.solveInPlace(M);
  M -= st.s0 * Eigen::MatrixXd::Identity(d, d);
  Ltri.transpose().solveInPlace(M);
  int k = d;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c <= r; ++c) out[k++] = r == c ? M(r, r) * L(r, r) : M(r, c);
  }
  return out;
}

NaturalGradient NaturalGradient::zeros(const PhmmModel& model) {
  const int N = model.n_states();
  NaturalGradient g;
  g.initial = Eigen::VectorXd::Zero(N);
  g.transition = Eigen::MatrixXd::Zero(N, N);
  g.labels = Eigen::MatrixXd::Zero(N, N);
  g.emissions.resize(N);
  for (int i = 0; i < N; ++i) {
    for (const auto& comp : model.emissions.components()) {
      g.emissions[i].push_back(Eigen::VectorXd::Zero(
          canonical_size(comp.family, static_cast<int>(comp.columns.size()))));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Parameterization::Parameterization(const ModelSpec& spec) : spec_(spec) {
  validate(spec_.constraints, spec_.model);
  for (const auto& f : spec_.constraints.fixed) {
    set_param(spec_.model.emissions, f.ref, f.value);
  }
  const int N = spec_.n_states();
  const auto& em = spec_.model.emissions;
  if (em.n_states() != N) throw ShapeError("emission state count differs from Gamma");

  if (!spec_.constraints.initial_fixed) {
    std::vector<int> all(N);
    for (int i = 0; i < N; ++i) all[i] = i;
    simplex_.push_back({SimplexTarget::kInitial, 0, all, size_});
    for (int i = 1; i < N; ++i) names_.push_back("delta[" + std::to_string(i + 1) + "]");
    size_ += N - 1;
  }
  transition_support_.resize(N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (!spec_.model.transition.is_structural_zero(i, j)) transition_support_[i].push_back(j);
    }
    const auto& sup = transition_support_[i];
    simplex_.push_back({SimplexTarget::kTransition, i, sup, size_});
    for (std::size_t k = 1; k < sup.size(); ++k) {
      names_.push_back("gamma[" + std::to_string(i + 1) + "," + std::to_string(sup[k] + 1) + "]");
    }
    size_ += static_cast<int>(sup.size()) - 1;
  }
  if (std::holds_alternative<CategoricalLabels>(spec_.model.labels) &&
      !spec_.constraints.labels_fixed) {
    std::vector<int> all(N);
    for (int i = 0; i < N; ++i) all[i] = i;
    for (int i = 0; i < N; ++i) {
      simplex_.push_back({SimplexTarget::kLabels, i, all, size_});
      for (int z = 1; z < N; ++z) {
        names_.push_back("beta[" + std::to_string(i + 1) + "," + std::to_string(z + 1) + "]");
      }
      size_ += N - 1;
    }
  }

  std::vector<bool> group_done(spec_.constraints.share_groups.size(), false);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < em.n_components(); ++c) {
      for (const auto& ref : component_params(em, i, c)) {
        if (spec_.constraints.is_fixed(ref)) continue;
        const int g = spec_.constraints.share_group_of(ref);
        EmissionBlock block;
        if (g >= 0) {
          if (group_done[g]) continue;
          group_done[g] = true;
          block.members = spec_.constraints.share_groups[g];
        } else {
          block.members = {ref};
        }
        const auto [begin, len] = canonical_range(ref);
        block.canonical_begin = begin;
        block.size = len;
        block.offset = size_;
        size_ += len;
        std::string name = to_string(ref, em);
        if (block.members.size() > 1) name += " (shared)";
        if (len == 1) {
          names_.push_back(name);
        } else {
          for (int k = 0; k < len; ++k) names_.push_back(name + "#" + std::to_string(k));
        }
        emission_blocks_.push_back(std::move(block));
      }
    }
  }
}

std::pair<int, int> Parameterization::canonical_range(const ParamRef& ref) const {
  const auto& comp = spec_.model.emissions.components().at(ref.component);
  const int d = static_cast<int>(comp.columns.size());
  switch (ref.kind) {
    case ParamKind::kLocation: return {ref.index, 1};
    case ParamKind::kScale: return {1, 1};
    case ParamKind::kCovariance: return {d, d * (d + 1) / 2};
  }
  return {0, 0};
}

const Parameterization::EmissionBlock* Parameterization::block_of(const ParamRef& ref) const {
  for (const auto& b : emission_blocks_) {
    if (std::find(b.members.begin(), b.members.end(), ref) != b.members.end()) return &b;
  }
  return nullptr;
}

std::optional<int> Parameterization::working_index(const ParamRef& ref) const {
  const auto* b = block_of(ref);
  if (!b || b->size != 1) return std::nullopt;
  return b->offset;
}

bool Parameterization::is_log_coordinate(const ParamRef& ref) const {
  const auto family = spec_.model.emissions.components().at(ref.component).family;
  return ref.kind == ParamKind::kScale ||
         (ref.kind == ParamKind::kLocation && family == Family::kGamma);
}

const std::vector<int>& Parameterization::transition_support(int row) const {
  return transition_support_.at(row);
}

Eigen::VectorXd Parameterization::to_working(const PhmmModel& model) const {
  const int N = spec_.n_states();
  if (model.n_states() != N || model.emissions.n_states() != N ||
      model.emissions.n_components() != spec_.model.emissions.n_components()) {
    throw ConstraintViolation("model shape differs from the model spec");
  }
  if (model.transition.zero_mask() != spec_.model.transition.zero_mask()) {
    throw ConstraintViolation("transition mask differs from the model spec");
  }
  Eigen::VectorXd w(size_);

  auto fill_simplex = [&](const SimplexBlock& b, const Eigen::VectorXd& row) {
    const double ref = row[b.support[0]];
    for (std::size_t k = 0; k < b.support.size(); ++k) {
      if (!(row[b.support[k]] > 0.0)) {
        throw ConstraintViolation("free probability entries must be positive");
      }
      if (k > 0) w[b.offset + static_cast<int>(k) - 1] = std::log(row[b.support[k]] / ref);
    }
  };

  if (spec_.constraints.initial_fixed) {
    for (int i = 0; i < N; ++i) {
      if (!close(model.initial[i], spec_.model.initial[i], 1e-12)) {
        throw ConstraintViolation("initial distribution differs from its fixed value");
      }
    }
  }
  const auto* cat_model = std::get_if<CategoricalLabels>(&model.labels);
  const auto* cat_spec = std::get_if<CategoricalLabels>(&spec_.model.labels);
  if ((cat_model == nullptr) != (cat_spec == nullptr)) {
    throw ConstraintViolation("label model kind differs from the model spec");
  }
  if (cat_spec && spec_.constraints.labels_fixed && !cat_model->beta.isApprox(cat_spec->beta, 1e-12)) {
    throw ConstraintViolation("label probabilities differ from their fixed values");
  }
  for (const auto& b : simplex_) {
    switch (b.target) {
      case SimplexTarget::kInitial: fill_simplex(b, model.initial.probs()); break;
      case SimplexTarget::kTransition:
        fill_simplex(b, model.transition.probs().row(b.row).transpose());
        break;
      case SimplexTarget::kLabels: fill_simplex(b, cat_model->beta.row(b.row).transpose()); break;
    }
  }

  const auto& em = model.emissions;
  for (int c = 0; c < em.n_components(); ++c) {
    if (em.components()[c].family != spec_.model.emissions.components()[c].family) {
      throw ConstraintViolation("emission family differs from the model spec");
    }
  }
  for (const auto& f : spec_.constraints.fixed) {
    if (!close(f.value, get_param(em, f.ref), 1e-12)) {
      throw ConstraintViolation("fixed parameter changed: " + to_string(f.ref, em));
    }
  }
  for (const auto& b : emission_blocks_) {
    const auto& first = b.members.front();
    const Eigen::VectorXd head = canonical_coords(em.emission(first.state, first.component))
                                     .segment(b.canonical_begin, b.size);
    for (const auto& other : b.members) {
      const Eigen::VectorXd v = canonical_coords(em.emission(other.state, other.component))
                                    .segment(b.canonical_begin, b.size);
      for (int k = 0; k < b.size; ++k) {
        if (!close(head[k], v[k], 1e-10)) {
          throw ConstraintViolation("shared parameters differ: " + to_string(other, em));
        }
      }
    }
    w.segment(b.offset, b.size) = head;
  }
  return w;
}

PhmmModel Parameterization::from_working(const Eigen::VectorXd& w) const {
  if (w.size() != size_) throw ShapeError("working vector has the wrong length");
  const int N = spec_.n_states();
  Eigen::VectorXd delta = spec_.model.initial.probs();
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd beta;
  if (const auto* cat = std::get_if<CategoricalLabels>(&spec_.model.labels)) beta = cat->beta;

  for (const auto& b : simplex_) {
    const int n = static_cast<int>(b.support.size());
    const Eigen::VectorXd p =
        simplex_from_working(std::span<const double>(w.data() + b.offset, n - 1), n);
    for (int k = 0; k < n; ++k) {
      switch (b.target) {
        case SimplexTarget::kInitial: delta[b.support[k]] = p[k]; break;
        case SimplexTarget::kTransition: gamma(b.row, b.support[k]) = p[k]; break;
        case SimplexTarget::kLabels: beta(b.row, b.support[k]) = p[k]; break;
      }
    }
  }

  const auto& base = spec_.model.emissions;
  std::vector<std::vector<Eigen::VectorXd>> coords(N);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < base.n_components(); ++c) {
      coords[i].push_back(canonical_coords(base.emission(i, c)));
    }
  }
  for (const auto& b : emission_blocks_) {
    for (const auto& ref : b.members) {
      coords[ref.state][ref.component].segment(b.canonical_begin, b.size) =
          w.segment(b.offset, b.size);
    }
  }
  std::vector<std::vector<Emission>> per_state(N);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < base.n_components(); ++c) {
      const auto& comp = base.components()[c];
      per_state[i].push_back(
          from_canonical(comp.family, static_cast<int>(comp.columns.size()), coords[i][c]));
    }
  }

  PhmmModel out{InitialDistribution(delta),
                TransitionMatrix(gamma, spec_.model.transition.zero_mask()),
                EmissionModel(base.features(), base.components(), std::move(per_state),
                              base.missing_policy()),
                spec_.model.labels};
  if (beta.size() != 0) out.labels = CategoricalLabels{beta};
  // exp(log v) need not reproduce v bit for bit
  for (const auto& f : spec_.constraints.fixed) set_param(out.emissions, f.ref, f.value);
  return out;
}

Eigen::VectorXd Parameterization::working_gradient(const NaturalGradient& g,
                                                   const PhmmModel& at) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size_);
  for (const auto& b : simplex_) {
    Eigen::VectorXd p, n;
    switch (b.target) {
      case SimplexTarget::kInitial:
        p = at.initial.probs();
        n = g.initial;
        break;
      case SimplexTarget::kTransition:
        p = at.transition.probs().row(b.row).transpose();
        n = g.transition.row(b.row).transpose();
        break;
      case SimplexTarget::kLabels:
        p = std::get<CategoricalLabels>(at.labels).beta.row(b.row).transpose();
        n = g.labels.row(b.row).transpose();
        break;
    }
    double total = 0.0;
    for (int j : b.support) total += n[j];
    for (std::size_t k = 1; k < b.support.size(); ++k) {
      const int j = b.support[k];
      out[b.offset + static_cast<int>(k) - 1] = n[j] - p[j] * total;
    }
  }
  for (const auto& b : emission_blocks_) {
    for (const auto& ref : b.members) {
      out.segment(b.offset, b.size) +=
          g.emissions[ref.state][ref.component].segment(b.canonical_begin, b.size);
    }
  }
  return out;
}

}  // namespace phmm
