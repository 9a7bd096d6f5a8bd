#include "phmm/cli/commands.hpp"

#include <CLI11.hpp>
#include <climits>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "phmm/cli/config.hpp"
#include "phmm/cli/io.hpp"
#include "phmm/error.hpp"

namespace phmm::cli {
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = ".";

  fs::path out(const std::string& name) const { return fs::path(output_dir) / name; }
};

// "4,6" (1-based) or "all" -> 0-based states.
std::vector<int> parse_state_list(const std::string& text, int n_states) {
  std::vector<int> out;
  if (text == "all") {
    for (int i = 0; i < n_states; ++i) out.push_back(i);
    return out;
  }
  for (const auto& field : split_csv_line(text)) {
    if (field.empty()) continue;
    const int s = parse_int(field, "state list");
    if (s < 1 || s > n_states) {
      throw InvalidParameter("state " + std::to_string(s) + " out of range 1.." +
                             std::to_string(n_states));
    }
    out.push_back(s - 1);
  }
  return out;
}

void check_labels(const Dataset& data, int n_states) {
  for (const auto& s : data.series) {
    for (const auto& z : s.labels) {
      if (z && *z >= n_states) {
        throw InvalidLabel("series '" + s.id + "' has label " + std::to_string(*z + 1) +
                           " but the model has " + std::to_string(n_states) + " states");
      }
    }
  }
}

Dataset load_data(const std::string& path, const ModelSpec& spec) {
  Dataset d = read_dataset(path, spec.model.emissions.features());
  check_labels(d, spec.n_states());
  return d;
}

double resolve_alpha(const std::optional<double>& flag, const ModelSpec& spec) {
  if (flag) return *flag;
  if (spec.default_alpha) return *spec.default_alpha;
  throw InvalidParameter("no --alpha given and the config has no default alpha");
}

std::optional<EventDefinition> preset_event(const std::string& name) {
  if (name != "cs2") return std::nullopt;
  EventDefinition ev;
  ev.name = "foraging";
  ev.event_states = {3, 5};
  ev.positive_labels = {3, 5};
  ev.negative_labels = {4};
  return ev;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string preset;
  std::string export_dir;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g, std::ostream& out) {
  ScenarioFile sf;
  if (!a.preset.empty()) {
    const Preset p = make_preset(a.preset, g.seed);
    if (!a.export_dir.empty()) {
      const fs::path dir(a.export_dir);
      write_file_atomic(dir / (a.preset + ".json"),
                        config_to_json(p.spec, preset_event(a.preset)).dump(2) + "\n");
      write_file_atomic(dir / (a.preset + ".scenario.json"), scenario_to_json(p).dump(2) + "\n");
    }
    sf.scenario = p.scenario;
    sf.state_names = p.spec.state_names;
    sf.hidden_to_state = p.hidden_to_state;
  } else {
    sf = read_scenario(a.scenario);
  }
  sf.scenario.seed = g.seed;
  const SimulatedData sim = simulate_phmm(sf.scenario);
  write_file_atomic(g.out("dataset.csv"), dataset_csv(sim.data));
  std::ostringstream truth;
  truth << "series_id,t,hidden,state\n";
  for (std::size_t s = 0; s < sim.hidden.size(); ++s) {
    for (std::size_t t = 0; t < sim.hidden[s].size(); ++t) {
      const int h = sim.hidden[s][t];
      truth << sim.data.series[s].id << ',' << t + 1 << ',' << h + 1 << ','
            << sf.hidden_to_state.at(h) + 1 << '\n';
    }
  }
  write_file_atomic(g.out("truth.csv"), truth.str());
  out << "simulated " << sim.data.series.size() << " series, " << sim.data.total_length()
      << " rows, " << sim.data.total_labels() << " labels\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::vector<std::string> traces;
  std::vector<std::string> events;
  int case_study = 1;
  double depth_threshold = 0.5;
  double min_duration = 30.0;
  double min_max_depth = 30.0;
  double window = 2.0;
  std::string bottom_mask = "depth";
};

int cmd_featurize(const FeaturizeArgs& a, const Globals& g, std::ostream& out,
                  std::ostream& err) {
  if (!a.events.empty() && a.events.size() != a.traces.size()) {
    throw InvalidParameter("give one --events file per --trace, or none");
  }
  Dataset data;
  std::ostringstream table;
  std::vector<DiveStatistics> stats;
  bool have_roll = true;
  std::vector<std::string> warnings;
  if (a.case_study == 1) {
    data.feature_names = {"max_depth", "duration"};
    table << "series_id,dive_id,begin,end,max_depth,duration\n";
  } else {
    data.feature_names = {"depth_change", "heading_variation", "jerk_peak"};
    table << "dive_id,window,begin,end,depth_change,heading_variation,jerk_peak,mean_depth,label\n";
  }
  for (std::size_t k = 0; k < a.traces.size(); ++k) {
    const fs::path path(a.traces[k]);
    const SensorTrace trace = read_trace(path, path.stem().string());
    if (a.case_study == 1) {
      for (const auto& d : segment_dives(trace, a.depth_threshold, a.min_duration)) {
        table << trace.id << ',' << d.id << ',' << d.begin << ',' << d.end << ','
              << format_double(d.max_depth) << ',' << format_double(d.duration) << '\n';
      }
      data.series.push_back(featurize_dives(trace, a.depth_threshold, a.min_duration));
      continue;
    }
    WindowPipelineOptions opt;
    opt.depth_threshold = a.depth_threshold;
    opt.min_duration = a.min_duration;
    opt.min_max_depth = a.min_max_depth;
    opt.window_seconds = a.window;
    opt.mask = a.bottom_mask == "share" ? deepest_share_mask() : depth_fraction_mask();
    auto dives = featurize_windows(trace, opt, &warnings);
    std::optional<EventLog> log;
    if (!a.events.empty()) log = read_events(a.events[k]);
    have_roll = have_roll && trace.roll.has_value();
    for (auto& wd : dives) {
      if (log) {
        const auto labels = label_windows_from_events(trace, wd.dive, wd.windows, wd.ascent_sample,
                                                      log->for_dive(trace, wd.dive), &warnings);
        for (std::size_t w = 0; w < labels.size(); ++w) wd.windows[w].label = labels[w];
      }
      for (const auto& w : wd.windows) {
        table << w.dive_id << ',' << w.index + 1 << ',' << w.begin << ',' << w.end << ','
              << format_double(w.depth_change) << ',' << format_double(w.heading_variation) << ','
              << format_double(w.jerk_peak) << ',' << format_double(w.mean_depth) << ',';
        if (w.label) table << *w.label + 1;
        table << '\n';
      }
      data.series.push_back(to_series(wd));
      if (trace.roll) {
        try {
          stats.push_back(dive_statistics(trace, wd.dive));
        } catch (const DegenerateDive& e) {
          warnings.push_back(std::string(e.what()) + "; no baseline statistics");
        }
      }
    }
  }
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  write_file_atomic(g.out("dataset.csv"), dataset_csv(data));
  write_file_atomic(g.out(a.case_study == 1 ? "dives.csv" : "windows.csv"), table.str());
  if (a.case_study == 2 && have_roll) {
    write_file_atomic(g.out("dive_stats.csv"), dive_statistics_csv(stats));
  }
  out << "featurized " << data.series.size() << " series, " << data.total_length() << " rows, "
      << data.total_labels() << " labels\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string config;
  std::optional<double> alpha;
  int restarts = 10;
  int max_iter = 1000;
  bool standard_errors = false;
  std::string output = "fit.json";
};

int cmd_fit(const FitArgs& a, const Globals& g, std::ostream& out) {
  const ModelConfig cfg = read_model_config(a.config);
  const Dataset data = load_data(a.data, cfg.spec);
  const double alpha = resolve_alpha(a.alpha, cfg.spec);
  FitOptions fo;
  fo.restarts = a.restarts;
  fo.max_iterations = a.max_iter;
  fo.seed = g.seed;
  fo.threads = g.threads;
  const FitResult r = fit(cfg.spec, data, alpha, fo);
  std::vector<ParameterEstimate> ses;
  if (a.standard_errors) ses = emission_standard_errors(cfg.spec, data, alpha, r.model);
  const json j = fit_result_to_json(r, cfg.spec, a.standard_errors ? &ses : nullptr);
  write_file_atomic(g.out(a.output), j.dump(2) + "\n");
  out << "alpha " << format_double(alpha) << ": objective " << format_double(r.objective)
      << ", best restart " << r.best_restart << " (" << r.restarts[r.best_restart].status << ")\n";
  return r.converged() ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------

struct CvArgs {
  std::string data;
  std::string config;
  std::vector<double> alphas;
  std::string scheme = "subprofile";
  int k = 4;
  int restarts = 10;
  int max_iter = 1000;
  std::string auc_mode = "auto";
  std::string event_states;
  std::string positive_labels;
  std::string negative_labels;
};

EventDefinition resolve_event(const ModelConfig& cfg, const std::string& states,
                              const std::string& pos, const std::string& neg,
                              std::optional<double> threshold) {
  EventDefinition ev = cfg.event.value_or(EventDefinition{});
  const int N = cfg.spec.n_states();
  if (!states.empty()) ev.event_states = parse_state_list(states, N);
  if (!pos.empty()) ev.positive_labels = parse_state_list(pos, N);
  if (!neg.empty()) ev.negative_labels = parse_state_list(neg, N);
  if (threshold) ev.threshold = *threshold;
  return ev;
}

int cmd_cv(const CvArgs& a, const Globals& g, std::ostream& out) {
  const ModelConfig cfg = read_model_config(a.config);
  Dataset data = load_data(a.data, cfg.spec);
  std::vector<double> alphas = a.alphas;
  if (alphas.empty()) alphas.push_back(resolve_alpha(std::nullopt, cfg.spec));
  for (double al : alphas) check_alpha(al);
  const FoldScheme scheme = parse_fold_scheme(a.scheme);
  const AucMode mode = a.auc_mode == "auto"
                           ? (scheme == FoldScheme::kSubprofile ? AucMode::kPooled : AucMode::kFoldMean)
                           : parse_auc_mode(a.auc_mode);

  FoldPlan plan;
  EventDefinition event;
  if (scheme == FoldScheme::kSubprofile) {
    data = subprofile_dataset(data, g.seed);
    plan = subprofile_plan(data, g.seed);
  } else {
    event = resolve_event(cfg, a.event_states, a.positive_labels, a.negative_labels, std::nullopt);
    if (event.positive_labels.empty() || event.negative_labels.empty() || event.event_states.empty()) {
      throw InvalidParameter("stratified cross-validation needs an event definition "
                             "(config 'event' or --event-states/--positive-labels/--negative-labels)");
    }
    std::vector<OutcomeUnit> units;
    for (const auto& s : data.series) {
      if (const auto o = unit_outcome(s.labels, event)) units.push_back({s.id, *o});
    }
    plan = make_stratified_folds(units, a.k, g.seed);
  }

  CvOptions co;
  co.fit.restarts = a.restarts;
  co.fit.max_iterations = a.max_iter;
  co.fit.seed = g.seed;
  co.threads = g.threads;
  MetricsReport report;
  std::ostringstream post, vit;
  post << "alpha,series_id,t,state,probability\n";
  vit << "alpha,series_id,t,state\n";
  for (double alpha : alphas) {
    const CvResult cv = cross_validate(cfg.spec, data, alpha, plan, co);
    report.append(scheme == FoldScheme::kSubprofile ? state_metrics(cv, cfg.spec.state_names, mode)
                                                    : event_metrics(cv, event, mode));
    const std::string a_str = format_double(alpha);
    for (const auto& u : cv.units) {
      const auto& P = u.decoding.posterior;
      for (Eigen::Index t = 0; t < P.rows(); ++t) {
        for (Eigen::Index i = 0; i < P.cols(); ++i) {
          post << a_str << ',' << u.id << ',' << t + 1 << ',' << i + 1 << ',' << format_double(P(t, i))
               << '\n';
        }
        vit << a_str << ',' << u.id << ',' << t + 1 << ',' << u.decoding.path[t] + 1 << '\n';
      }
    }
  }
  write_file_atomic(g.out("metrics.csv"), metrics_csv(report));
  write_file_atomic(g.out("posteriors.csv"), post.str());
  write_file_atomic(g.out("viterbi.csv"), vit.str());
  out << to_string(scheme) << " cross-validation, " << plan.size() << " folds, AUC mode "
      << to_string(mode) << "\n"
      << metrics_table(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DecodeArgs {
  std::string data;
  std::string config;
  std::string fit;
  std::string states;
  std::optional<double> threshold;
};

int cmd_decode(const DecodeArgs& a, const Globals& g, std::ostream& out) {
  const ModelConfig cfg = read_model_config(a.config);
  const Dataset data = load_data(a.data, cfg.spec);
  if (!fs::exists(a.fit)) throw std::runtime_error("cannot open '" + a.fit + "'");
  const PhmmModel model = read_fitted_model(a.fit, cfg.spec);
  const EventDefinition ev = resolve_event(cfg, a.states, "", "", a.threshold);
  if (ev.event_states.empty()) {
    throw InvalidParameter("no --states given and the config defines no event");
  }
  std::ostringstream probs, vit;
  probs << "series_id,probability,predicted\n";
  vit << "series_id,t,state\n";
  int positives = 0;
  for (const auto& s : data.series) {
    const Decoding d = decode_unlabelled(model, s);
    const double p = terminal_event_probability(d, ev.event_states);
    const bool yes = classify_by_threshold(std::span<const double>(&p, 1), ev.threshold)[0];
    positives += yes;
    probs << s.id << ',' << format_double(p) << ',' << (yes ? 1 : 0) << '\n';
    for (std::size_t t = 0; t < d.path.size(); ++t) vit << s.id << ',' << t + 1 << ',' << d.path[t] + 1 << '\n';
  }
  write_file_atomic(g.out("decode.csv"), probs.str());
  write_file_atomic(g.out("viterbi.csv"), vit.str());
  out << "predicted " << ev.name << ": " << positives << " of " << data.series.size()
      << " series (threshold " << format_double(ev.threshold) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BaselineArgs {
  std::string dive_stats;
  std::string confirmed;
  std::string data;
  std::string config;
};

int cmd_baseline(const BaselineArgs& a, const Globals& g, std::ostream& out) {
  const auto stats = read_dive_statistics(a.dive_stats);
  std::vector<std::string> confirmed;
  std::map<std::string, bool> outcome;
  if (!a.data.empty()) {
    if (a.config.empty()) throw InvalidParameter("--data needs --config for the event definition");
    const ModelConfig cfg = read_model_config(a.config);
    if (!cfg.event) throw InvalidParameter("the config defines no event");
    const Dataset data = load_data(a.data, cfg.spec);
    for (const auto& s : data.series) {
      if (const auto o = unit_outcome(s.labels, *cfg.event)) {
        outcome[s.id] = *o;
        if (*o) confirmed.push_back(s.id);
      }
    }
  }
  if (!a.confirmed.empty()) confirmed = split_csv_line(a.confirmed);
  const BaselineResult r = tennessen_baseline(stats, confirmed);

  std::ostringstream pred, thr;
  pred << "dive_id,score,predicted\n";
  std::vector<ScoredOutcome> scored;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    pred << stats[k].dive_id << ',' << format_double(r.score[k]) << ',' << (r.predicted[k] ? 1 : 0)
         << '\n';
    if (const auto it = outcome.find(stats[k].dive_id); it != outcome.end()) {
      scored.push_back({r.score[k], it->second});
    }
  }
  thr << "statistic,threshold\n"
      << "jerk_ratio," << format_double(r.thresholds.jerk_ratio) << '\n'
      << "roll_at_peak," << format_double(r.thresholds.roll_at_peak) << '\n'
      << "heading_circular_variance," << format_double(r.thresholds.heading_circular_variance)
      << '\n';
  write_file_atomic(g.out("baseline.csv"), pred.str());
  write_file_atomic(g.out("thresholds.csv"), thr.str());
  const auto n_pos = std::count(r.predicted.begin(), r.predicted.end(), true);
  out << "thresholds: jerk_ratio " << format_double(r.thresholds.jerk_ratio) << ", roll_at_peak "
      << format_double(r.thresholds.roll_at_peak) << ", heading_circular_variance "
      << format_double(r.thresholds.heading_circular_variance) << "\n"
      << "predicted positive: " << n_pos << " of " << stats.size() << " dives\n";
  if (!scored.empty()) {
    try {
      out << "AUC over " << scored.size() << " dives with known outcome: "
          << format_double(auc(scored)) << "\n";
    } catch (const UndefinedMetric& e) {
      out << "AUC undefined: " << e.what() << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weighted-likelihood partially hidden Markov models", "phmm"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "Directory for result files")->capture_default_str();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a labelled dataset from a scenario");
  auto* src = sim->add_option_group("source");
  src->add_option("--scenario", sa.scenario, "Scenario file")->check(CLI::ExistingFile);
  src->add_option("--preset", sa.preset, "Shipped scenario: cs1, cs2 or overlap")
      ->check(CLI::IsMember(preset_names()));
  src->require_option(1);
  sim->add_option("--export-preset", sa.export_dir,
                  "Also write the preset's model config and scenario file to this directory");

  FeaturizeArgs fa;
  auto* feat = app.add_subcommand("featurize", "Turn raw tag traces into a dataset");
  feat->add_option("--trace", fa.traces, "Trace CSV (time_s,depth_m,heading_rad,ax,ay,az[,roll_rad])")
      ->required()
      ->check(CLI::ExistingFile);
  feat->add_option("--case", fa.case_study, "1: dive summaries, 2: two-second windows")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  feat->add_option("--events", fa.events, "Event CSV (time_s,event), one per trace")->check(CLI::ExistingFile);
  feat->add_option("--depth-threshold", fa.depth_threshold)->capture_default_str();
  feat->add_option("--min-duration", fa.min_duration)->capture_default_str();
  feat->add_option("--min-max-depth", fa.min_max_depth, "Case 2 keeps dives deeper than this")
      ->capture_default_str();
  feat->add_option("--window", fa.window, "Window length (s)")->check(CLI::PositiveNumber)->capture_default_str();
  feat->add_option("--bottom-mask", fa.bottom_mask, "depth: >= 0.7 max depth; share: deepest 70%")
      ->check(CLI::IsMember({"depth", "share"}))
      ->capture_default_str();

  FitArgs fi;
  auto* fitc = app.add_subcommand("fit", "Fit a model by weighted maximum likelihood");
  fitc->add_option("--data", fi.data)->required()->check(CLI::ExistingFile);
  fitc->add_option("--config", fi.config)->required()->check(CLI::ExistingFile);
  fitc->add_option("--alpha", fi.alpha, "Weight of unlabelled indices, in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  fitc->add_option("--restarts", fi.restarts)->check(CLI::PositiveNumber)->capture_default_str();
  fitc->add_option("--max-iter", fi.max_iter)->check(CLI::PositiveNumber)->capture_default_str();
  fitc->add_flag("--standard-errors", fi.standard_errors, "Report emission standard errors");
  fitc->add_option("--output", fi.output, "Result file name")->capture_default_str();

  CvArgs ca;
  auto* cvc = app.add_subcommand("cv", "Cross-validate over a grid of alphas");
  cvc->add_option("--data", ca.data)->required()->check(CLI::ExistingFile);
  cvc->add_option("--config", ca.config)->required()->check(CLI::ExistingFile);
  cvc->add_option("--alphas", ca.alphas, "Comma-separated alphas")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  cvc->add_option("--scheme", ca.scheme)
      ->check(CLI::IsMember({"subprofile", "stratified"}))
      ->capture_default_str();
  cvc->add_option("--k", ca.k, "Folds for the stratified scheme")
      ->check(CLI::Range(2, INT_MAX))
      ->capture_default_str();
  cvc->add_option("--restarts", ca.restarts)->check(CLI::PositiveNumber)->capture_default_str();
  cvc->add_option("--max-iter", ca.max_iter)->check(CLI::PositiveNumber)->capture_default_str();
  cvc->add_option("--auc-mode", ca.auc_mode, "pooled, fold-mean or auto")
      ->check(CLI::IsMember({"auto", "pooled", "fold-mean"}))
      ->capture_default_str();
  cvc->add_option("--event-states", ca.event_states, "e.g. 4,6");
  cvc->add_option("--positive-labels", ca.positive_labels);
  cvc->add_option("--negative-labels", ca.negative_labels);

  DecodeArgs da;
  auto* dec = app.add_subcommand("decode", "Terminal event probabilities under a fitted model");
  dec->add_option("--data", da.data)->required()->check(CLI::ExistingFile);
  dec->add_option("--config", da.config)->required()->check(CLI::ExistingFile);
  dec->add_option("--fit", da.fit, "Fit result file")->required();
  dec->add_option("--states", da.states, "Event states, e.g. 4,6, or all");
  dec->add_option("--threshold", da.threshold)->check(CLI::Range(0.0, 1.0));

  BaselineArgs ba;
  auto* base = app.add_subcommand("baseline", "Threshold baseline on dive statistics");
  base->add_option("--dive-stats", ba.dive_stats)->required()->check(CLI::ExistingFile);
  base->add_option("--confirmed", ba.confirmed, "Comma-separated confirmed capture dive ids");
  base->add_option("--data", ba.data, "Window dataset whose labels give outcomes")->check(CLI::ExistingFile);
  base->add_option("--config", ba.config)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sa, g, out);
    if (*feat) return cmd_featurize(fa, g, out, err);
    if (*fitc) return cmd_fit(fi, g, out);
    if (*cvc) return cmd_cv(ca, g, out);
    if (*dec) return cmd_decode(da, g, out);
    if (*base) return cmd_baseline(ba, g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace phmm::cli
