#include "phmm/cli/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "phmm/error.hpp"

namespace phmm::cli {

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw InvalidParameter("'" + path.string() + "' is empty");
  return rows;
}

double parse_double(const std::string& field, std::string_view what) {
  if (field.empty() || field == "NA" || field == "nan" || field == "NaN") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidParameter("bad number '" + field + "' in " + std::string(what));
  }
  return v;
}

int parse_int(const std::string& field, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidParameter("bad integer '" + field + "' in " + std::string(what));
  }
  return v;
}

Dataset read_dataset(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_features) {
  const auto rows = read_csv(path);
  const auto& header = rows.front();
  const std::string where = "'" + path.string() + "'";
  if (header.size() < 3 || header.front() != "series_id" || header[1] != "t" ||
      header.back() != "label") {
    throw InvalidParameter(where + ": header must be series_id,t,<features...>,label");
  }
  const std::vector<std::string> file_features(header.begin() + 2, header.end() - 1);
  std::vector<int> column_of(expected_features.size(), -1);
  for (std::size_t k = 0; k < file_features.size(); ++k) {
    const auto it = std::find(expected_features.begin(), expected_features.end(), file_features[k]);
    if (it == expected_features.end()) {
      throw ShapeError(where + ": column '" + file_features[k] + "' is not a model feature");
    }
    column_of[it - expected_features.begin()] = static_cast<int>(k) + 2;
  }
  for (std::size_t f = 0; f < expected_features.size(); ++f) {
    if (column_of[f] < 0) throw ShapeError(where + ": missing feature column '" + expected_features[f] + "'");
  }

  Dataset data;
  data.feature_names = expected_features;
  std::map<std::string, bool> seen;
  std::size_t r = 1;
  while (r < rows.size()) {
    const std::string id = rows[r].at(0);
    if (seen.count(id)) throw InvalidParameter(where + ": rows of series '" + id + "' are not contiguous");
    seen[id] = true;
    std::size_t end = r;
    while (end < rows.size() && rows[end].at(0) == id) ++end;
    LabeledSeries s;
    s.id = id;
    s.features.resize(static_cast<Eigen::Index>(end - r), static_cast<Eigen::Index>(expected_features.size()));
    double last_t = -std::numeric_limits<double>::infinity();
    for (std::size_t k = r; k < end; ++k) {
      const auto& row = rows[k];
      const std::string line = where + " line " + std::to_string(k + 1);
      if (row.size() != header.size()) throw ShapeError(line + ": wrong number of fields");
      const double t = parse_double(row[1], line);
      if (!(t > last_t)) throw InvalidParameter(line + ": t must increase strictly within a series");
      last_t = t;
      for (std::size_t f = 0; f < expected_features.size(); ++f) {
        s.features(static_cast<Eigen::Index>(k - r), static_cast<Eigen::Index>(f)) =
            parse_double(row[column_of[f]], line);
      }
      const std::string& lab = row.back();
      if (lab.empty()) {
        s.labels.push_back(std::nullopt);
      } else {
        const int z = parse_int(lab, line);
        if (z < 1) throw InvalidLabel(line + ": labels are 1-based");
        s.labels.push_back(z - 1);
      }
    }
    data.series.push_back(std::move(s));
    r = end;
  }
  return data;
}

std::string dataset_csv(const Dataset& data) {
  std::ostringstream os;
  os << "series_id,t";
  for (const auto& f : data.feature_names) os << ',' << f;
  os << ",label\n";
  for (const auto& s : data.series) {
    for (int t = 0; t < s.length(); ++t) {
      os << s.id << ',' << t + 1;
      for (Eigen::Index f = 0; f < s.features.cols(); ++f) os << ',' << format_double(s.features(t, f));
      os << ',';
      if (s.labels[t]) os << *s.labels[t] + 1;
      os << '\n';
    }
  }
  return os.str();
}

SensorTrace read_trace(const std::filesystem::path& path, std::string id) {
  const auto rows = read_csv(path);
  const auto& header = rows.front();
  auto col = [&](const char* name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_time = col("time_s"), c_depth = col("depth_m"), c_head = col("heading_rad");
  const int c_ax = col("ax"), c_ay = col("ay"), c_az = col("az"), c_roll = col("roll_rad");
  if (c_time < 0) throw ChannelMissing("'" + path.string() + "' has no time_s column");
  if (c_depth < 0) throw ChannelMissing("'" + path.string() + "' has no depth_m column");
  const bool has_accel = c_ax >= 0 && c_ay >= 0 && c_az >= 0;

  SensorTrace tr;
  tr.id = std::move(id);
  std::vector<double> times;
  if (c_roll >= 0) tr.roll.emplace();
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    const std::string line = "'" + path.string() + "' line " + std::to_string(k + 1);
    if (row.size() != header.size()) throw ShapeError(line + ": wrong number of fields");
    times.push_back(parse_double(row[c_time], line));
    tr.depth.push_back(parse_double(row[c_depth], line));
    if (c_head >= 0) tr.heading.push_back(parse_double(row[c_head], line));
    if (has_accel) {
      tr.accel.push_back({parse_double(row[c_ax], line), parse_double(row[c_ay], line),
                          parse_double(row[c_az], line)});
    }
    if (c_roll >= 0) tr.roll->push_back(parse_double(row[c_roll], line));
  }
  if (times.size() >= 2) {
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (!(dt > 0.0)) throw InvalidParameter("'" + path.string() + "': time_s must increase");
    for (std::size_t k = 1; k < times.size(); ++k) {
      if (std::abs(times[k] - times[k - 1] - dt) > 1e-3 * dt) {
        throw InvalidParameter("'" + path.string() + "': sampling is not uniform");
      }
    }
    tr.rate = 1.0 / dt;
  }
  if (!times.empty()) tr.start_time = times.front();
  tr.validate();
  return tr;
}

DiveEvents EventLog::for_dive(const SensorTrace& trace, const DiveRecord& dive) const {
  const double begin = trace.time_of(dive.begin);
  const double end = trace.time_of(dive.end);
  DiveEvents ev;
  for (double c : crunches) {
    if (c >= begin && c < end) ev.crunch_times.push_back(c);
  }
  for (const auto& [a, b] : video) {
    if (a <= begin && b >= trace.time_of(dive.end - 1)) ev.video_covered = true;
  }
  for (double v : visual_foraging) {
    if (v >= begin && v < end) ev.visual_foraging = true;
  }
  return ev;
}

EventLog read_events(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  const auto& header = rows.front();
  if (header.size() != 2 || header[0] != "time_s" || header[1] != "event") {
    throw InvalidParameter("'" + path.string() + "': header must be time_s,event");
  }
  EventLog log;
  std::optional<double> open;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const std::string line = "'" + path.string() + "' line " + std::to_string(k + 1);
    if (rows[k].size() != 2) throw ShapeError(line + ": wrong number of fields");
    const double t = parse_double(rows[k][0], line);
    const std::string& e = rows[k][1];
    if (e == "crunch") {
      log.crunches.push_back(t);
    } else if (e == "visual_foraging") {
      log.visual_foraging.push_back(t);
    } else if (e == "video_start") {
      open = t;
    } else if (e == "video_end") {
      if (!open) throw InvalidParameter(line + ": video_end without video_start");
      log.video.emplace_back(*open, t);
      open.reset();
    } else {
      throw InvalidParameter(line + ": unknown event '" + e + "'");
    }
  }
  if (open) log.video.emplace_back(*open, std::numeric_limits<double>::infinity());
  return log;
}

std::string dive_statistics_csv(const std::vector<DiveStatistics>& stats) {
  std::ostringstream os;
  os << "dive_id,jerk_ratio,roll_at_peak,heading_circular_variance\n";
  for (const auto& s : stats) {
    os << s.dive_id << ',' << format_double(s.jerk_ratio) << ',' << format_double(s.roll_at_peak)
       << ',' << format_double(s.heading_circular_variance) << '\n';
  }
  return os.str();
}

std::vector<DiveStatistics> read_dive_statistics(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.front() != std::vector<std::string>{"dive_id", "jerk_ratio", "roll_at_peak",
                                               "heading_circular_variance"}) {
    throw InvalidParameter("'" + path.string() +
                           "': header must be dive_id,jerk_ratio,roll_at_peak,heading_circular_variance");
  }
  std::vector<DiveStatistics> out;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const std::string line = "'" + path.string() + "' line " + std::to_string(k + 1);
    if (rows[k].size() != 4) throw ShapeError(line + ": wrong number of fields");
    out.push_back({rows[k][0], parse_double(rows[k][1], line), parse_double(rows[k][2], line),
                   parse_double(rows[k][3], line)});
  }
  return out;
}

}  // namespace phmm::cli
