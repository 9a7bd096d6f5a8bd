#include "phmm/cli/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "phmm/error.hpp"

namespace phmm::cli {
namespace {

[[noreturn]] void bad(const std::string& msg) { throw InvalidParameter("config: " + msg); }

const json& need(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing key '") + key + "'");
  return j.at(key);
}

Eigen::VectorXd to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class M>
M to_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<typename M::Scalar>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  M out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m) bad("ragged matrix");
    for (Eigen::Index k = 0; k < m; ++k) out(i, k) = rows[i][k];
  }
  return out;
}

json from_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <class M>
json from_matrix(const M& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Emission emission_from_json(const json& j, Family expected) {
  const Family f = parse_family(need(j, "type").get<std::string>());
  if (f != expected) bad("emission record type differs from its component family");
  switch (f) {
    case Family::kNormal: return Normal{need(j, "mean").get<double>(), need(j, "sd").get<double>()};
    case Family::kGamma: return Gamma{need(j, "mean").get<double>(), need(j, "sd").get<double>()};
    case Family::kLogNormal:
      return LogNormal{need(j, "log_mean").get<double>(), need(j, "log_sd").get<double>()};
    case Family::kMultivariateLogNormal:
      return MultivariateLogNormal{to_vector(need(j, "log_mean")),
                                   to_matrix<Eigen::MatrixXd>(need(j, "log_cov"))};
  }
  bad("unknown family");
}

json emission_to_json(const Emission& e) {
  json j;
  j["type"] = std::string(family_name(family_of(e)));
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Normal> || std::is_same_v<T, Gamma>) {
          j["mean"] = d.mean;
          j["sd"] = d.sd;
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          j["log_mean"] = d.log_mean;
          j["log_sd"] = d.log_sd;
        } else {
          j["log_mean"] = from_vector(d.log_mean);
          j["log_cov"] = from_matrix(d.log_cov);
        }
      },
      e);
  return j;
}

ParamRef ref_from_json(const json& j, const EmissionModel& em, int n_states) {
  ParamRef ref;
  ref.state = need(j, "state").get<int>() - 1;
  if (ref.state < 0 || ref.state >= n_states) bad("constraint state out of range");
  if (j.contains("component")) {
    ref.component = j.at("component").get<int>() - 1;
  } else {
    const auto name = need(j, "feature").get<std::string>();
    ref.component = -1;
    for (int c = 0; c < em.n_components(); ++c) {
      const auto& fs = em.components()[c].features;
      if (std::find(fs.begin(), fs.end(), name) != fs.end()) ref.component = c;
    }
    if (ref.component < 0) bad("constraint names unknown feature '" + name + "'");
  }
  if (ref.component < 0 || ref.component >= em.n_components()) bad("constraint component out of range");
  const Family fam = em.components()[ref.component].family;
  ref.kind = parse_param_kind(fam, need(j, "param").get<std::string>());
  ref.index = j.contains("index") ? j.at("index").get<int>() - 1 : 0;
  return ref;
}

json ref_to_json(const ParamRef& ref, const EmissionModel& em) {
  json j;
  j["state"] = ref.state + 1;
  j["component"] = ref.component + 1;
  j["param"] = std::string(param_name(em.components()[ref.component].family, ref.kind));
  if (em.components()[ref.component].family == Family::kMultivariateLogNormal &&
      ref.kind == ParamKind::kLocation) {
    j["index"] = ref.index + 1;
  }
  return j;
}

std::vector<int> states_from_json(const json& j, int n_states) {
  std::vector<int> out;
  for (int s : j.get<std::vector<int>>()) {
    if (s < 1 || s > n_states) bad("state " + std::to_string(s) + " out of range");
    out.push_back(s - 1);
  }
  return out;
}

json states_to_json(const std::vector<int>& v) {
  json j = json::array();
  for (int s : v) j.push_back(s + 1);
  return j;
}

}  // namespace

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  auto& spec = cfg.spec;
  const int N = need(j, "states").get<int>();
  if (N < 1) bad("'states' must be >= 1");
  if (j.contains("state_names")) {
    spec.state_names = j.at("state_names").get<std::vector<std::string>>();
    if (static_cast<int>(spec.state_names.size()) != N) bad("state_names length differs from states");
  } else {
    for (int i = 1; i <= N; ++i) spec.state_names.push_back("state" + std::to_string(i));
  }
  const auto features = need(j, "features").get<std::vector<std::string>>();
  std::vector<EmissionComponent> comps;
  std::vector<std::vector<Emission>> per_state(N);
  for (const auto& jc : need(j, "emissions")) {
    EmissionComponent comp;
    comp.features = need(jc, "features").get<std::vector<std::string>>();
    comp.family = parse_family(need(jc, "family").get<std::string>());
    for (const auto& f : comp.features) {
      const auto it = std::find(features.begin(), features.end(), f);
      if (it == features.end()) bad("emission uses undeclared feature '" + f + "'");
      comp.columns.push_back(static_cast<int>(it - features.begin()));
    }
    const auto& records = need(jc, "states");
    if (static_cast<int>(records.size()) != N) bad("each emission needs one record per state");
    for (int i = 0; i < N; ++i) per_state[i].push_back(emission_from_json(records[i], comp.family));
    comps.push_back(std::move(comp));
  }
  MissingPolicy missing = MissingPolicy::kSkip;
  if (j.contains("missing")) {
    const auto m = j.at("missing").get<std::string>();
    if (m == "error") missing = MissingPolicy::kError;
    else if (m != "skip") bad("'missing' must be skip or error");
  }
  EmissionModel em(features, std::move(comps), std::move(per_state), missing);

  InitialDistribution delta = InitialDistribution::uniform(N);
  if (j.contains("initial")) {
    const auto& ji = j.at("initial");
    if (ji.contains("values")) delta = InitialDistribution(to_vector(ji.at("values")));
    spec.constraints.initial_fixed = ji.value("fixed", false);
  }
  BoolMatrix mask = BoolMatrix::Constant(N, N, false);
  TransitionMatrix gamma;
  const json jt = j.value("transition", json::object());
  if (jt.contains("structural_zeros")) mask = to_matrix<BoolMatrix>(jt.at("structural_zeros"));
  if (mask.rows() != N || mask.cols() != N) bad("structural_zeros must be N x N");
  gamma = jt.contains("values") ? TransitionMatrix(to_matrix<Eigen::MatrixXd>(jt.at("values")), mask)
                                : TransitionMatrix::uniform(mask);

  LabelModel labels = PerfectLabels{};
  if (j.contains("labels")) {
    const auto& jl = j.at("labels");
    const auto type = need(jl, "type").get<std::string>();
    if (type == "categorical") {
      labels = CategoricalLabels{to_matrix<Eigen::MatrixXd>(need(jl, "beta"))};
      spec.constraints.labels_fixed = jl.value("fixed", false);
    } else if (type != "perfect") {
      bad("labels.type must be perfect or categorical");
    }
  }
  spec.model = PhmmModel{std::move(delta), std::move(gamma), std::move(em), std::move(labels)};
  if (spec.model.initial.size() != N || spec.model.transition.size() != N) {
    bad("initial/transition sizes differ from states");
  }
  validate(spec.model.labels, N);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < spec.model.emissions.n_components(); ++c) {
      validate(spec.model.emissions.emission(i, c));
    }
  }

  if (j.contains("constraints")) {
    const auto& jc = j.at("constraints");
    const auto& emr = spec.model.emissions;
    for (const auto& f : jc.value("fixed", json::array())) {
      spec.constraints.fixed.push_back({ref_from_json(f, emr, N), need(f, "value").get<double>()});
    }
    for (const auto& g : jc.value("share", json::array())) {
      std::vector<ParamRef> group;
      for (const auto& r : g) group.push_back(ref_from_json(r, emr, N));
      spec.constraints.share_groups.push_back(std::move(group));
    }
    for (const auto& pair : jc.value("tie_states", json::array())) {
      const auto st = states_from_json(pair, N);
      if (st.size() != 2) bad("tie_states entries are pairs of states");
      spec.constraints.tie_states(emr, st[0], st[1]);
    }
  }
  if (j.contains("alpha")) {
    spec.default_alpha = j.at("alpha").get<double>();
    check_alpha(*spec.default_alpha);
  }
  validate(spec.constraints, spec.model);
  // Building the parameterization checks the constraints against the layout.
  Parameterization{spec};

  if (j.contains("event")) {
    const auto& je = j.at("event");
    EventDefinition ev;
    ev.name = je.value("name", std::string("event"));
    ev.event_states = states_from_json(need(je, "states"), N);
    ev.positive_labels = states_from_json(je.value("positive_labels", json::array()), N);
    ev.negative_labels = states_from_json(je.value("negative_labels", json::array()), N);
    ev.threshold = je.value("threshold", 0.5);
    cfg.event = std::move(ev);
  }
  return cfg;
}

json config_to_json(const ModelSpec& spec, const std::optional<EventDefinition>& event) {
  const auto& m = spec.model;
  const auto& em = m.emissions;
  const int N = m.n_states();
  json j;
  j["states"] = N;
  j["state_names"] = spec.state_names;
  j["features"] = em.features();
  j["missing"] = em.missing_policy() == MissingPolicy::kError ? "error" : "skip";
  json comps = json::array();
  for (int c = 0; c < em.n_components(); ++c) {
    json jc;
    jc["features"] = em.components()[c].features;
    jc["family"] = std::string(family_name(em.components()[c].family));
    json recs = json::array();
    for (int i = 0; i < N; ++i) recs.push_back(emission_to_json(em.emission(i, c)));
    jc["states"] = recs;
    comps.push_back(jc);
  }
  j["emissions"] = comps;
  j["initial"] = {{"values", from_vector(m.initial.probs())},
                  {"fixed", spec.constraints.initial_fixed}};
  j["transition"] = {{"values", from_matrix(m.transition.probs())},
                     {"structural_zeros", from_matrix(m.transition.zero_mask())}};
  if (const auto* cat = std::get_if<CategoricalLabels>(&m.labels)) {
    j["labels"] = {{"type", "categorical"},
                   {"beta", from_matrix(cat->beta)},
                   {"fixed", spec.constraints.labels_fixed}};
  } else {
    j["labels"] = {{"type", "perfect"}};
  }
  json fixed = json::array();
  for (const auto& f : spec.constraints.fixed) {
    json r = ref_to_json(f.ref, em);
    r["value"] = f.value;
    fixed.push_back(r);
  }
  json share = json::array();
  for (const auto& g : spec.constraints.share_groups) {
    json group = json::array();
    for (const auto& r : g) group.push_back(ref_to_json(r, em));
    share.push_back(group);
  }
  j["constraints"] = {{"fixed", fixed}, {"share", share}};
  if (spec.default_alpha) j["alpha"] = *spec.default_alpha;
  if (event) {
    j["event"] = {{"name", event->name},
                  {"states", states_to_json(event->event_states)},
                  {"positive_labels", states_to_json(event->positive_labels)},
                  {"negative_labels", states_to_json(event->negative_labels)},
                  {"threshold", event->threshold}};
  }
  return j;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("'" + path.string() + "': " + e.what());
  }
}

namespace {

template <class F>
auto wrap_json_errors(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("'" + path.string() + "': " + e.what());
  } catch (const Error& e) {
    throw InvalidParameter("'" + path.string() + "': " + e.what());
  }
}

}  // namespace

ModelConfig read_model_config(const std::filesystem::path& path) {
  const json j = read_json(path);
  return wrap_json_errors(path, [&] { return config_from_json(j); });
}

ScenarioFile scenario_from_json(const json& j) {
  ScenarioFile out;
  const ModelConfig truth = config_from_json(need(j, "model"));
  const auto& js = need(j, "scenario");
  auto& sc = out.scenario;
  sc.model = truth.spec.model;
  out.state_names = truth.spec.state_names;
  const int N = sc.model.n_states();
  sc.lengths = need(js, "lengths").get<std::vector<int>>();
  const auto policy = js.value("policy", std::string("fixed-indices"));
  if (policy == "fixed-indices") {
    sc.policy = LabelPolicy::kFixedIndices;
    for (const auto& set : js.value("label_indices", json::array())) {
      std::vector<int> idx;
      for (int t : set.get<std::vector<int>>()) idx.push_back(t - 1);
      sc.label_indices.push_back(std::move(idx));
    }
  } else if (policy == "dive-events") {
    sc.policy = LabelPolicy::kDiveEvents;
    const json q = js.value("quota", json::object());
    sc.quota.capture_state = q.value("capture_state", 4) - 1;
    sc.quota.fish_state = q.value("fish_state", 6) - 1;
    sc.quota.no_fish_state = q.value("no_fish_state", 5) - 1;
    sc.quota.capture_labels = q.value("capture_labels", 5);
    sc.quota.fish_labels = q.value("fish_labels", 2);
    sc.quota.no_fish_labels = q.value("no_fish_labels", 19);
  } else {
    bad("scenario.policy must be fixed-indices or dive-events");
  }
  sc.id_prefix = js.value("id_prefix", std::string("s"));
  if (js.contains("hidden_to_state")) {
    for (int s : js.at("hidden_to_state").get<std::vector<int>>()) out.hidden_to_state.push_back(s - 1);
    if (static_cast<int>(out.hidden_to_state.size()) != N) bad("hidden_to_state needs one entry per state");
  } else {
    for (int i = 0; i < N; ++i) out.hidden_to_state.push_back(i);
  }
  sc.validate();
  return out;
}

json scenario_to_json(const Preset& preset) {
  const auto& sc = preset.scenario;
  ModelSpec truth;
  truth.model = sc.model;
  for (int i = 1; i <= sc.model.n_states(); ++i) {
    const bool same = sc.model.n_states() == preset.spec.n_states();
    truth.state_names.push_back(same ? preset.spec.state_names[i - 1] : "hidden" + std::to_string(i));
  }
  json js;
  js["lengths"] = sc.lengths;
  if (sc.policy == LabelPolicy::kFixedIndices) {
    js["policy"] = "fixed-indices";
    json sets = json::array();
    for (const auto& set : sc.label_indices) {
      json idx = json::array();
      for (int t : set) idx.push_back(t + 1);
      sets.push_back(idx);
    }
    js["label_indices"] = sets;
  } else {
    js["policy"] = "dive-events";
    js["quota"] = {{"capture_state", sc.quota.capture_state + 1},
                   {"fish_state", sc.quota.fish_state + 1},
                   {"no_fish_state", sc.quota.no_fish_state + 1},
                   {"capture_labels", sc.quota.capture_labels},
                   {"fish_labels", sc.quota.fish_labels},
                   {"no_fish_labels", sc.quota.no_fish_labels}};
  }
  js["id_prefix"] = sc.id_prefix;
  js["hidden_to_state"] = states_to_json(preset.hidden_to_state);
  return {{"model", config_to_json(truth)}, {"scenario", js}};
}

ScenarioFile read_scenario(const std::filesystem::path& path) {
  const json j = read_json(path);
  return wrap_json_errors(path, [&] { return scenario_from_json(j); });
}

json fit_result_to_json(const FitResult& result, const ModelSpec& spec,
                        const std::vector<ParameterEstimate>* standard_errors) {
  json j;
  j["alpha"] = result.alpha;
  j["objective"] = result.objective;
  j["converged"] = result.converged();
  j["best_restart"] = result.best_restart;
  json restarts = json::array();
  for (const auto& r : result.restarts) {
    json jr;
    jr["index"] = r.index;
    jr["seed"] = r.seed;
    jr["iterations"] = r.iterations;
    jr["evaluations"] = r.evaluations;
    jr["initial_objective"] = r.initial_objective;
    jr["objective"] = r.objective;
    jr["converged"] = r.converged;
    jr["status"] = r.status;
    if (!r.error.empty()) jr["error"] = r.error;
    restarts.push_back(jr);
  }
  j["restarts"] = restarts;
  j["trace"] = result.restarts.at(result.best_restart).trace;
  ModelSpec fitted = spec;
  fitted.model = result.model;
  fitted.default_alpha = result.alpha;
  j["model"] = config_to_json(fitted);
  if (standard_errors) {
    json ses = json::array();
    for (const auto& e : *standard_errors) {
      json r = ref_to_json(e.ref, result.model.emissions);
      r["name"] = to_string(e.ref, result.model.emissions);
      r["value"] = e.value;
      r["standard_error"] = e.standard_error;
      ses.push_back(r);
    }
    j["standard_errors"] = ses;
  }
  return j;
}

PhmmModel read_fitted_model(const std::filesystem::path& path, const ModelSpec& spec) {
  const json j = read_json(path);
  return wrap_json_errors(path, [&] {
    const ModelConfig cfg = config_from_json(need(j, "model"));
    const auto& a = cfg.spec.model;
    const auto& b = spec.model;
    bool same = a.n_states() == b.n_states() &&
                a.emissions.features() == b.emissions.features() &&
                a.emissions.n_components() == b.emissions.n_components() &&
                a.transition.zero_mask() == b.transition.zero_mask() &&
                a.labels.index() == b.labels.index();
    for (int c = 0; same && c < a.emissions.n_components(); ++c) {
      same = a.emissions.components()[c].family == b.emissions.components()[c].family &&
             a.emissions.components()[c].columns == b.emissions.components()[c].columns;
    }
    if (!same) bad("fitted model layout differs from the model config");
    return a;
  });
}

}  // namespace phmm::cli
