#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lapspec/dynamics.hpp"
#include "lapspec/freq_estimation.hpp"
#include "lapspec/graph.hpp"
#include "lapspec/oracle.hpp"

namespace lapspec::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything a command needs, resolved from flags or read back from a manifest.
struct RunConfig {
  std::string command;

  // Topology source; exactly one of these for simulate/validate/rounds.
  std::string graph_file;
  std::string schedule_file;
  std::string topology;  // built-in: path:N, star:LEAVES, complete:N, cycle:N

  std::string trace_file;  // estimate, spectrogram

  std::uint64_t seed = 1;
  std::string init = "random";  // random | ones
  double t_end = 50.0;
  double fs = kDefaultSampleRate;
  double step = 0.0;  // 0: (1/fs)/10
  unsigned threads = 1;

  std::size_t agent = 0;
  bool per_segment = false;
  double window = 50.0;
  std::size_t nmax = 8;
  double se = 1.0;
  double amplitude_floor = 1e-3;

  double stft_window = 2.0 * kPi;  // seconds
  double hop = 0.5;                // seconds
  double threshold = 0.1;
  std::size_t zero_pad = 4;

  double rank_tol = kDefaultRankTol;
  double cluster_tol = kDefaultClusterTol;
  double t_min = 2.0 * kPi;  // rounds

  std::string out_dir = ".";  // not part of the manifest

  SimConfig sim_config() const;
  FreqEstimatorConfig estimator_config(double signal_fs) const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Throws ConfigError on unknown keys or wrong types.
RunConfig config_from_json(const nlohmann::json& j);

// Schedule from whichever topology source is set. Throws ConfigError if none
// or more than one is given.
TopologySchedule resolve_schedule(const RunConfig& cfg);
Graph builtin_topology(const std::string& spec);

// Outputs are written under cfg.out_dir; the returned manifest lists them by
// file name and is also written there as <command>.manifest.json.
nlohmann::json run_simulate(const RunConfig& cfg);
nlohmann::json run_estimate(const RunConfig& cfg);
nlohmann::json run_validate(const RunConfig& cfg);
nlohmann::json run_spectrogram(const RunConfig& cfg);
nlohmann::json run_rounds(const RunConfig& cfg);
nlohmann::json run_command(const RunConfig& cfg);

// The validation report itself, without touching the file system.
nlohmann::json validation_report(const RunConfig& cfg);

// Entry point; returns the process exit code.
int main(int argc, char** argv);

}  // namespace lapspec::cli
