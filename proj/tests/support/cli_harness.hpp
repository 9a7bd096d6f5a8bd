#pragma once

// In-process driver for the phmm command line plus synthetic tag files.

#include <filesystem>
#include <fstream>
#include <map>
#include <unistd.h>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phmm/cli/commands.hpp"
#include "phmm/cli/io.hpp"

namespace phmm::test {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("phmm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "phmm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Every regular file under `dir`, keyed by relative path.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = cli::read_file(e.path());
  }
  return files;
}

// A 10 Hz trace with `dives` dives of increasing depth, each 100 s long with
// 20 s descent, 60 s bottom and 20 s ascent, separated by 20 s at the surface.
// Dive k (1-based) has a jerk burst and a roll at t = start + 50 s when
// `burst[k-1]` is set.
inline std::string synthetic_trace_csv(int dives, const std::vector<bool>& burst, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::ostringstream os;
  os << "time_s,depth_m,heading_rad,ax,ay,az,roll_rad\n";
  const double rate = 10.0;
  int k = 0;
  auto emit = [&](double depth, double heading, double ax, double roll) {
    os << cli::format_double(k / rate) << ',' << cli::format_double(depth) << ',' << cli::format_double(heading)
       << ',' << cli::format_double(ax) << ',' << cli::format_double(noise(rng)) << ','
       << cli::format_double(9.8 + noise(rng)) << ',' << cli::format_double(roll) << '\n';
    ++k;
  };
  for (int s = 0; s < 200; ++s) emit(0.0, 0.0, noise(rng), 0.0);
  for (int d = 0; d < dives; ++d) {
    const double max_depth = 40.0 + 10.0 * d;
    const bool hit = d < static_cast<int>(burst.size()) && burst[d];
    for (int s = 0; s < 1000; ++s) {
      const double t = s / rate;
      double depth = t < 20 ? 0.6 + (max_depth - 0.6) * t / 20 : t < 80 ? max_depth : max_depth - (max_depth - 0.6) * (t - 80) / 20;
      const bool spike = hit && s >= 500 && s < 505;
      emit(depth, hit && s >= 400 && s < 600 ? 0.3 * std::sin(s * 0.7) : 0.01 * std::sin(s * 0.01),
           spike ? (s % 2 ? 4.0 : -4.0) : noise(rng), spike ? 1.1 : 0.05);
    }
    for (int s = 0; s < 200; ++s) emit(0.0, 0.0, noise(rng), 0.0);
  }
  return os.str();
}

// Trace time of the start of dive d (0-based) in synthetic_trace_csv.
inline double synthetic_dive_start(int d) { return 20.0 + 120.0 * d; }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace phmm::test
