#include "phmm/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "phmm/error.hpp"

namespace phmm {
namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double upper = v[n / 2];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + n / 2);
  return 0.5 * (lower + upper);
}

double step_norm(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void require_motion_channels(const SensorTrace& trace) {
  if (trace.heading.empty()) throw ChannelMissing("trace '" + trace.id + "' has no heading");
  if (trace.accel.empty()) throw ChannelMissing("trace '" + trace.id + "' has no acceleration");
}

}  // namespace

void SensorTrace::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidParameter("sampling rate must be > 0");
  const std::size_t n = depth.size();
  auto check = [&](std::size_t m, const char* name) {
    if (m != 0 && m != n) {
      throw ShapeError(std::string("channel '") + name + "' length differs from depth");
    }
  };
  check(heading.size(), "heading");
  check(accel.size(), "accel");
  if (roll) check(roll->size(), "roll");
}

std::vector<DiveRecord> segment_dives(const SensorTrace& trace, double depth_threshold,
                                      double min_duration) {
  trace.validate();
  std::vector<DiveRecord> out;
  const int n = trace.size();
  int k = 0;
  while (k < n) {
    if (!(trace.depth[k] >= depth_threshold)) {
      ++k;
      continue;
    }
    const int begin = k;
    double max_depth = trace.depth[k];
    while (k < n && trace.depth[k] >= depth_threshold) max_depth = std::max(max_depth, trace.depth[k++]);
    const double duration = (k - begin) / trace.rate;
    if (duration >= min_duration) {
      DiveRecord d;
      d.id = trace.id + "/dive" + std::to_string(out.size() + 1);
      d.begin = begin;
      d.end = k;
      d.max_depth = max_depth;
      d.duration = duration;
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::array<double, 2> dive_summary_cs1(const DiveRecord& dive) {
  return {dive.max_depth, dive.duration};
}

double wrap_angle(double radians) {
  constexpr double kPi = std::numbers::pi;
  double w = std::remainder(radians, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

std::vector<WindowRecord> window_features(const SensorTrace& trace, const DiveRecord& dive,
                                          double window_seconds) {
  require_motion_channels(trace);
  trace.validate();
  const int per_window = static_cast<int>(std::lround(window_seconds * trace.rate));
  if (per_window < 1) throw InvalidParameter("window shorter than one sample");
  const int n_windows = (dive.end - dive.begin) / per_window;
  if (n_windows < 1) throw InvalidParameter("dive '" + dive.id + "' is shorter than one window");
  std::vector<WindowRecord> out(n_windows);
  for (int w = 0; w < n_windows; ++w) {
    auto& r = out[w];
    r.dive_id = dive.id;
    r.index = w;
    r.begin = dive.begin + w * per_window;
    r.end = r.begin + per_window;
    r.depth_change = trace.depth[r.end - 1] - trace.depth[r.begin];
    double depth_sum = trace.depth[r.begin];
    for (int k = r.begin + 1; k < r.end; ++k) {
      r.heading_variation += std::abs(wrap_angle(trace.heading[k] - trace.heading[k - 1]));
      r.jerk_peak = std::max(r.jerk_peak, step_norm(trace.accel[k], trace.accel[k - 1]));
      depth_sum += trace.depth[k];
    }
    r.mean_depth = depth_sum / per_window;
  }
  return out;
}

BottomMask depth_fraction_mask(double fraction) {
  return [fraction](const std::vector<WindowRecord>& windows, double max_depth) {
    std::vector<bool> m(windows.size());
    for (std::size_t k = 0; k < windows.size(); ++k) {
      m[k] = windows[k].mean_depth >= fraction * max_depth;
    }
    return m;
  };
}

BottomMask deepest_share_mask(double fraction) {
  return [fraction](const std::vector<WindowRecord>& windows, double) {
    std::vector<std::size_t> order(windows.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return windows[a].mean_depth > windows[b].mean_depth;
    });
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * windows.size() - 1e-12));
    std::vector<bool> m(windows.size(), false);
    for (std::size_t k = 0; k < keep && k < order.size(); ++k) m[order[k]] = true;
    return m;
  };
}

std::vector<double> normalize_jerk(const std::vector<WindowRecord>& windows, double max_depth,
                                   const BottomMask& mask) {
  const auto bottom = mask(windows, max_depth);
  std::vector<double> jerks;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (bottom[k]) jerks.push_back(windows[k].jerk_peak);
  }
  const std::string id = windows.empty() ? std::string("?") : windows.front().dive_id;
  if (jerks.empty()) throw DegenerateDive("dive '" + id + "' has no bottom-phase window");
  const double med = median(std::move(jerks));
  if (!(med > 0.0)) throw DegenerateDive("dive '" + id + "' has zero median bottom jerk");
  std::vector<double> out(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) out[k] = windows[k].jerk_peak / med;
  return out;
}

int ascent_start(const SensorTrace& trace, const DiveRecord& dive, double fraction) {
  int last = dive.begin;
  for (int k = dive.begin; k < dive.end; ++k) {
    if (trace.depth[k] >= fraction * dive.max_depth) last = k;
  }
  return last + 1;
}

std::vector<Label> label_windows_from_events(const SensorTrace& trace, const DiveRecord& dive,
                                             const std::vector<WindowRecord>& windows,
                                             int ascent_sample, const DiveEvents& events,
                                             std::vector<std::string>* warnings,
                                             double lookback) {
  if (ascent_sample < dive.begin || ascent_sample > dive.end) {
    throw InvalidParameter("ascent start outside dive '" + dive.id + "'");
  }
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(dive.id + ": " + msg);
  };
  std::vector<Label> labels(windows.size());
  if (windows.empty()) return labels;
  labels[0] = 0;

  const double t_begin = trace.time_of(dive.begin);
  const double t_end = trace.time_of(dive.end);
  const double t_ascent = trace.time_of(ascent_sample);
  std::vector<double> crunches = events.crunch_times;
  std::sort(crunches.begin(), crunches.end());

  bool any_crunch = false;
  for (double c : crunches) {
    if (c < t_begin || c >= t_end) {
      warn("crunch at " + std::to_string(c) + " s lies outside the dive; ignored");
      continue;
    }
    any_crunch = true;
    if (t_ascent - c > lookback) {
      warn("crunch at " + std::to_string(c) + " s is more than " + std::to_string(lookback) +
           " s before the ascent; ignored");
      continue;
    }
    if (c < t_ascent) {
      const int sample = static_cast<int>(std::floor((c - trace.start_time) * trace.rate));
      const auto it = std::find_if(windows.begin(), windows.end(), [&](const WindowRecord& w) {
        return sample >= w.begin && sample < w.end;
      });
      if (it == windows.end()) {
        warn("crunch at " + std::to_string(c) + " s falls in the dropped partial window");
        continue;
      }
      if (it->index == 0) {
        warn("capture crunch in the first window; the descent label is kept");
      } else {
        labels[it->index] = 3;
      }
      return labels;
    }
    labels.back() = 5;
    return labels;
  }
  if (events.video_covered && !any_crunch && !events.visual_foraging && windows.size() > 1) {
    labels.back() = 4;
  }
  return labels;
}

// ---------------------------------------------------------------------------

DiveStatistics dive_statistics(const SensorTrace& trace, const DiveRecord& dive,
                               double fraction) {
  require_motion_channels(trace);
  if (!trace.roll) throw ChannelMissing("trace '" + trace.id + "' has no roll channel");
  DiveStatistics s;
  s.dive_id = dive.id;
  std::vector<double> jerks;
  double peak = -1.0;
  int peak_at = -1;
  double c = 0.0, sn = 0.0;
  int n_heading = 0;
  for (int k = dive.begin; k < dive.end; ++k) {
    if (trace.depth[k] < fraction * dive.max_depth) continue;
    c += std::cos(trace.heading[k]);
    sn += std::sin(trace.heading[k]);
    ++n_heading;
    if (k == dive.begin) continue;
    const double j = step_norm(trace.accel[k], trace.accel[k - 1]);
    jerks.push_back(j);
    if (j > peak) {
      peak = j;
      peak_at = k;
    }
  }
  if (jerks.empty()) throw DegenerateDive("dive '" + dive.id + "' has no bottom-phase samples");
  const double med = median(jerks);
  if (!(med > 0.0)) throw DegenerateDive("dive '" + dive.id + "' has zero median bottom jerk");
  s.jerk_ratio = peak / med;
  s.roll_at_peak = std::abs((*trace.roll)[peak_at]);
  s.heading_circular_variance = 1.0 - std::hypot(c, sn) / n_heading;
  return s;
}

BaselineResult tennessen_baseline(const std::vector<DiveStatistics>& dives,
                                  const std::vector<std::string>& confirmed_ids) {
  BaselineResult r;
  bool any = false;
  for (const auto& d : dives) {
    if (std::find(confirmed_ids.begin(), confirmed_ids.end(), d.dive_id) == confirmed_ids.end()) {
      continue;
    }
    if (!any) {
      r.thresholds = {d.jerk_ratio, d.roll_at_peak, d.heading_circular_variance};
      any = true;
    } else {
      r.thresholds.jerk_ratio = std::min(r.thresholds.jerk_ratio, d.jerk_ratio);
      r.thresholds.roll_at_peak = std::min(r.thresholds.roll_at_peak, d.roll_at_peak);
      r.thresholds.heading_circular_variance =
          std::min(r.thresholds.heading_circular_variance, d.heading_circular_variance);
    }
  }
  if (!any) throw CannotCalibrate("no confirmed capture dive among the supplied dives");
  for (const auto& d : dives) {
    const double score = std::min({d.jerk_ratio - r.thresholds.jerk_ratio,
                                   d.roll_at_peak - r.thresholds.roll_at_peak,
                                   d.heading_circular_variance -
                                       r.thresholds.heading_circular_variance});
    r.score.push_back(score);
    r.predicted.push_back(d.jerk_ratio >= r.thresholds.jerk_ratio &&
                          d.roll_at_peak >= r.thresholds.roll_at_peak &&
                          d.heading_circular_variance >= r.thresholds.heading_circular_variance);
  }
  return r;
}

// ---------------------------------------------------------------------------

LabeledSeries featurize_dives(const SensorTrace& trace, double depth_threshold,
                              double min_duration) {
  const auto dives = segment_dives(trace, depth_threshold, min_duration);
  LabeledSeries s;
  s.id = trace.id;
  s.features.resize(static_cast<Eigen::Index>(dives.size()), 2);
  for (std::size_t k = 0; k < dives.size(); ++k) {
    const auto y = dive_summary_cs1(dives[k]);
    s.features(static_cast<Eigen::Index>(k), 0) = y[0];
    s.features(static_cast<Eigen::Index>(k), 1) = y[1];
    s.labels.push_back(dives[k].label);
  }
  return s;
}

std::vector<WindowedDive> featurize_windows(const SensorTrace& trace,
                                            const WindowPipelineOptions& options,
                                            std::vector<std::string>* warnings) {
  require_motion_channels(trace);
  std::vector<WindowedDive> out;
  for (auto& dive : segment_dives(trace, options.depth_threshold, options.min_duration)) {
    if (!(dive.max_depth > options.min_max_depth)) continue;
    WindowedDive wd;
    wd.windows = window_features(trace, dive, options.window_seconds);
    try {
      const auto j = normalize_jerk(wd.windows, dive.max_depth, options.mask);
      for (std::size_t k = 0; k < j.size(); ++k) wd.windows[k].jerk_peak = j[k];
    } catch (const DegenerateDive& e) {
      if (warnings) warnings->push_back(std::string(e.what()) + "; dive skipped");
      continue;
    }
    wd.ascent_sample = ascent_start(trace, dive);
    wd.dive = std::move(dive);
    out.push_back(std::move(wd));
  }
  return out;
}

LabeledSeries to_series(const WindowedDive& dive) {
  LabeledSeries s;
  s.id = dive.dive.id;
  const auto n = static_cast<Eigen::Index>(dive.windows.size());
  s.features.resize(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& w = dive.windows[static_cast<std::size_t>(k)];
    s.features(k, 0) = w.depth_change;
    s.features(k, 1) = w.heading_variation;
    s.features(k, 2) = w.jerk_peak;
    s.labels.push_back(w.label);
  }
  return s;
}

}  // namespace phmm
