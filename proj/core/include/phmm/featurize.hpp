#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phmm/markov.hpp"

namespace phmm {

// Uniformly sampled tag channels. Sample k is taken at start_time + k / rate.
struct SensorTrace {
  std::string id;
  double rate = 50.0;  // Hz
  double start_time = 0.0;
  std::vector<double> depth;  // m
  std::vector<double> heading;  // rad
  std::vector<std::array<double, 3>> accel;  // m/s^2
  std::optional<std::vector<double>> roll;  // rad

  int size() const { return static_cast<int>(depth.size()); }
  double time_of(int sample) const { return start_time + sample / rate; }
  // Throws InvalidParameter / ShapeError on a bad rate or unequal channels.
  void validate() const;
};

struct DiveRecord {
  std::string id;
  int begin = 0;  // first sample
  int end = 0;    // one past the last sample
  double max_depth = 0.0;
  double duration = 0.0;  // s
  Label label;
};

// Maximal runs with depth >= depth_threshold lasting >= min_duration seconds,
// in time order. Dive k of trace "x" is named "x/dive<k>" (1-based).
std::vector<DiveRecord> segment_dives(const SensorTrace& trace, double depth_threshold = 0.5,
                                      double min_duration = 30.0);

// (max depth, duration) for the dive-level model.
std::array<double, 2> dive_summary_cs1(const DiveRecord& dive);

struct WindowRecord {
  std::string dive_id;
  int index = 0;  // 0-based window number within the dive
  int begin = 0;  // first sample (trace index)
  int end = 0;
  double depth_change = 0.0;  // last minus first depth reading
  double heading_variation = 0.0;
  double jerk_peak = 0.0;  // raw until normalize_jerk
  double mean_depth = 0.0;
  Label label;
};

// Windows tiling the dive from its first sample; a trailing partial window
// is dropped. Heading steps are wrapped to (-pi, pi]. Throws ChannelMissing
// when heading or acceleration are absent.
std::vector<WindowRecord> window_features(const SensorTrace& trace, const DiveRecord& dive,
                                          double window_seconds = 2.0);

// Wraps an angle difference to (-pi, pi].
double wrap_angle(double radians);

// Selects the bottom-phase windows of a dive.
using BottomMask =
    std::function<std::vector<bool>(const std::vector<WindowRecord>& windows, double max_depth)>;

// Windows whose mean depth is at least `fraction` of the dive's max depth.
BottomMask depth_fraction_mask(double fraction = 0.7);
// The deepest ceil(fraction * n) windows by mean depth (ties to the earlier).
BottomMask deepest_share_mask(double fraction = 0.7);

// Jerk peaks divided by their median over the bottom phase. Throws
// DegenerateDive when the bottom phase is empty or its median is zero.
std::vector<double> normalize_jerk(const std::vector<WindowRecord>& windows, double max_depth,
                                   const BottomMask& mask = depth_fraction_mask());

// Sample index at which ascent begins: one past the last sample whose depth
// reaches 0.7 of the dive's max depth.
int ascent_start(const SensorTrace& trace, const DiveRecord& dive, double fraction = 0.7);

struct DiveEvents {
  std::vector<double> crunch_times;  // trace time, s
  bool video_covered = false;        // recorder on for the whole dive
  bool visual_foraging = false;      // e.g. scales seen on video
};

// 0-based labels per window, following the crunch rules: window 0 descent
// (0); the first crunch within `lookback` s before ascent labels its window
// capture (3); otherwise a first crunch during ascent labels the final window
// ascent-with-fish (5); otherwise, with full video and no crunch or visual
// sign of foraging, the final window is ascent-without-fish (4). Crunches
// outside the dive or beyond the last full window are ignored with a warning.
std::vector<Label> label_windows_from_events(const SensorTrace& trace, const DiveRecord& dive,
                                             const std::vector<WindowRecord>& windows,
                                             int ascent_sample, const DiveEvents& events,
                                             std::vector<std::string>* warnings = nullptr,
                                             double lookback = 30.0);

// ---------------------------------------------------------------------------
// Threshold baseline

struct DiveStatistics {
  std::string dive_id;
  double jerk_ratio = 0.0;  // max / median sample jerk over the bottom phase
  double roll_at_peak = 0.0;  // |roll| at the bottom-phase jerk peak
  double heading_circular_variance = 0.0;  // 1 - mean resultant length
};

// Bottom phase = samples at depth >= fraction * max depth. Throws
// ChannelMissing without roll and DegenerateDive on a zero median jerk.
DiveStatistics dive_statistics(const SensorTrace& trace, const DiveRecord& dive,
                               double fraction = 0.7);

struct BaselineThresholds {
  double jerk_ratio = 0.0;
  double roll_at_peak = 0.0;
  double heading_circular_variance = 0.0;
};

struct BaselineResult {
  BaselineThresholds thresholds;
  std::vector<bool> predicted;  // every statistic >= its threshold
  std::vector<double> score;    // min over statistics of (statistic - threshold)
};

// Thresholds are the minima over the confirmed capture dives. Throws
// CannotCalibrate when none of `confirmed_ids` is among `dives`.
BaselineResult tennessen_baseline(const std::vector<DiveStatistics>& dives,
                                  const std::vector<std::string>& confirmed_ids);

// ---------------------------------------------------------------------------
// Pipelines

// One series per trace: one row per dive with features (max_depth, duration).
LabeledSeries featurize_dives(const SensorTrace& trace, double depth_threshold = 0.5,
                              double min_duration = 30.0);

struct WindowPipelineOptions {
  double depth_threshold = 0.5;
  double min_duration = 30.0;
  double min_max_depth = 30.0;  // keep dives strictly deeper than this
  double window_seconds = 2.0;
  BottomMask mask = depth_fraction_mask();
};

struct WindowedDive {
  DiveRecord dive;
  std::vector<WindowRecord> windows;  // jerk_peak normalized
  int ascent_sample = 0;
};

// Window-level featurization of every qualifying dive. Dives whose bottom
// phase is degenerate are skipped with a warning.
std::vector<WindowedDive> featurize_windows(const SensorTrace& trace,
                                            const WindowPipelineOptions& options = {},
                                            std::vector<std::string>* warnings = nullptr);

// Series with features (depth_change, heading_variation, jerk_peak) and the
// window labels.
LabeledSeries to_series(const WindowedDive& dive);

}  // namespace phmm
