#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lapspec/graph.hpp"

namespace lapspec {

// Invalid simulation or estimator configuration, detected before any work.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integration produced a non-finite value.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;
// Default output sampling rate: 100 samples per 2*pi seconds.
inline constexpr double kDefaultSampleRate = 100.0 / (2.0 * kPi);

// (x_i, z_i) of a single agent, or its time derivative.
struct AgentState {
  double x = 0.0;
  double z = 0.0;
};

struct NetworkState {
  std::vector<double> x;
  std::vector<double> z;
  double t = 0.0;

  std::size_t size() const { return x.size(); }
};

double energy(const NetworkState& s);

struct SimConfig {
  double h = (1.0 / kDefaultSampleRate) / 10.0;  // RK4 step, seconds
  double fs = kDefaultSampleRate;                // output samples per second
  double t_end = 50.0;                           // seconds
  std::uint64_t seed = 1;
  bool count_messages = true;
  unsigned threads = 1;  // agent evaluation workers per stage; output is independent of this

  // Default step h = (1/fs)/10.
  static SimConfig with_rate(double fs, double t_end);

  // Output samples covered by t_end: floor(t_end * fs) + 1. A relative slack of
  // 1e-9 keeps grids such as t_end = 2*pi, fs = 100/(2*pi) at 101 samples.
  std::size_t sample_count() const;
  std::size_t steps_per_sample() const;
};

// Throws ConfigError: non-positive h/fs/t_end, sampling period not an integer
// multiple of h, Nyquist guard 2*pi*fs > 2*(1 + 2*max_degree) violated on any
// segment, or schedule shorter than t_end.
void validate(const SimConfig& cfg, const TopologySchedule& schedule);

struct TraceSegment {
  std::size_t index = 0;   // position in the schedule
  double t_start = 0.0;    // snapped to the RK4 step grid
  double t_end = 0.0;
  std::size_t first_sample = 0;
  std::size_t last_sample = 0;  // inclusive; boundary samples belong to both neighbours
};

// Uniformly sampled trajectories; x[i][k] is agent i at times[k].
struct Trace {
  double fs = kDefaultSampleRate;
  std::vector<double> times;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> z;
  std::vector<TraceSegment> segments;

  std::size_t agent_count() const { return x.size(); }
  std::size_t sample_count() const { return times.size(); }
  NetworkState state_at(std::size_t sample) const;
};

struct MessageCounter {
  std::uint64_t total = 0;
  std::vector<std::uint64_t> per_agent;
  std::uint64_t per_sample_rounds = 0;  // 4 * RK4 steps per output sample
  std::uint64_t rounds = 0;             // synchronous exchange rounds executed
};

struct SimResult {
  Trace trace;
  MessageCounter messages;
  NetworkState final_state;
};

// x_i(0), z_i(0) independently uniform on {-1, +1}; x drawn first, then z.
NetworkState random_init(std::size_t n, std::uint64_t seed);

// Right-hand side of the local interaction rule for one agent, from its own
// state and the states its neighbours sent this stage.
AgentState local_derivative(AgentState self, std::span<const AgentState> neighbor_values);

// [[0, I+L], [-(I+L), 0]]; centralized form of the network dynamics. Only the
// oracle and tests use it; the simulator runs on messages.
Eigen::MatrixXd build_system_matrix(const LaplacianMatrix& L);

// One classical RK4 step executed as four synchronous exchange rounds.
NetworkState rk4_step(const NetworkState& state, const Graph& g, double h);

SimResult simulate(const TopologySchedule& schedule, const SimConfig& cfg, const NetworkState& init);

// ceil(4 * max_degree * t_min * fs), with 1e-9 relative slack against rounding.
std::uint64_t round_bound(std::size_t max_degree, double t_min, double fs);

}  // namespace lapspec
