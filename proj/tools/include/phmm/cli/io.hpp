#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "phmm/featurize.hpp"
#include "phmm/markov.hpp"

namespace phmm::cli {

// 17 significant digits: parses back to the identical double.
std::string format_double(double v);

// Writes via a temporary file in the same directory and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Splits one CSV line on commas (no quoting; fields never contain commas).
std::vector<std::string> split_csv_line(std::string_view line);

// Rows of a CSV file; the first row is the header. Blank lines are skipped.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

double parse_double(const std::string& field, std::string_view what);
int parse_int(const std::string& field, std::string_view what);

// Dataset file: series_id, t, <features...>, label. An empty (or "NA")
// feature is missing; an empty label is no label; labels are 1-based in the
// file. `expected_features` reorders columns into model order; extra columns
// are an error.
Dataset read_dataset(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_features);
std::string dataset_csv(const Dataset& data);

// Raw trace: time_s, depth_m, heading_rad, ax, ay, az[, roll_rad]. Missing
// channels simply leave the trace channel empty.
SensorTrace read_trace(const std::filesystem::path& path, std::string id);

// Event file: time_s, event with event one of crunch, video_start,
// video_end, visual_foraging.
struct EventLog {
  std::vector<double> crunches;
  std::vector<std::pair<double, double>> video;  // covered intervals
  std::vector<double> visual_foraging;

  DiveEvents for_dive(const SensorTrace& trace, const DiveRecord& dive) const;
};
EventLog read_events(const std::filesystem::path& path);

std::string dive_statistics_csv(const std::vector<DiveStatistics>& stats);
std::vector<DiveStatistics> read_dive_statistics(const std::filesystem::path& path);

}  // namespace phmm::cli
