#include "lapspec/dynamics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <barrier>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

namespace lapspec {

namespace {

// RK4 stage offsets: the stage-s value is state + kStageOffset[s] * h * k_{s-1}.
constexpr std::array<double, 4> kStageOffset{0.0, 0.5, 0.5, 1.0};

struct Agent {
  AgentState committed;
  AgentState published;  // value sent to neighbours in the current round
  std::array<AgentState, 4> slope;
  std::uint64_t messages_sent = 0;
};

// Synchronous message-passing network. Each RK4 stage is one round: agents
// publish their stage value, a barrier separates publishing from reading, and
// each agent reads only its neighbours' published values.
class SynchronousNetwork {
 public:
  SynchronousNetwork(const NetworkState& init, unsigned threads)
      : agents_(init.size()), threads_(std::max(1u, threads)) {
    for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].committed = {init.x[i], init.z[i]};
    threads_ = static_cast<unsigned>(std::min<std::size_t>(threads_, std::max<std::size_t>(1, agents_.size())));
  }

  // Runs `steps` RK4 steps. graph_at(step) picks the topology active for a step;
  // after_step(step) runs on one thread while all agents are quiescent.
  template <class GraphAt, class AfterStep>
  void run(std::size_t steps, double h, bool count, GraphAt&& graph_at, AfterStep&& after_step) {
    if (steps == 0) return;
    std::atomic<bool> non_finite{false};
    std::barrier sync(static_cast<std::ptrdiff_t>(threads_));

    auto worker = [&](unsigned w) {
      const std::size_t n = agents_.size();
      const std::size_t lo = n * w / threads_;
      const std::size_t hi = n * (w + 1) / threads_;
      std::vector<AgentState> inbox;
      for (std::size_t step = 0; step < steps; ++step) {
        const Graph& g = graph_at(step);
        for (std::size_t s = 0; s < 4; ++s) {
          for (std::size_t i = lo; i < hi; ++i) {
            Agent& a = agents_[i];
            const double c = kStageOffset[s] * h;
            a.published = s == 0 ? a.committed
                                 : AgentState{a.committed.x + c * a.slope[s - 1].x,
                                              a.committed.z + c * a.slope[s - 1].z};
          }
          sync.arrive_and_wait();
          for (std::size_t i = lo; i < hi; ++i) {
            const auto& nb = g.neighbors(i);
            inbox.clear();
            for (std::size_t j : nb) inbox.push_back(agents_[j].published);
            if (count) agents_[i].messages_sent += nb.size();
            agents_[i].slope[s] = local_derivative(agents_[i].published, inbox);
          }
          sync.arrive_and_wait();
        }
        for (std::size_t i = lo; i < hi; ++i) {
          Agent& a = agents_[i];
          const auto& k = a.slope;
          a.committed.x += h / 6.0 * (k[0].x + 2.0 * k[1].x + 2.0 * k[2].x + k[3].x);
          a.committed.z += h / 6.0 * (k[0].z + 2.0 * k[1].z + 2.0 * k[2].z + k[3].z);
          if (!std::isfinite(a.committed.x) || !std::isfinite(a.committed.z)) non_finite = true;
        }
        sync.arrive_and_wait();
        if (non_finite) {
          failed_step_ = step;
          return;
        }
        if (w == 0) {
          after_step(step);
          ++rounds_;
        }
      }
    };

    if (threads_ == 1) {
      worker(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 1; w < threads_; ++w) pool.emplace_back(worker, w);
      worker(0);
    }
    if (non_finite) {
      std::ostringstream msg;
      msg << "non-finite state after RK4 step " << failed_step_ << "; aborting simulation";
      throw SimulationError(msg.str());
    }
  }

  void snapshot(NetworkState& out) const {
    out.x.resize(agents_.size());
    out.z.resize(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      out.x[i] = agents_[i].committed.x;
      out.z[i] = agents_[i].committed.z;
    }
  }

  const Agent& agent(std::size_t i) const { return agents_[i]; }
  std::uint64_t steps_executed() const { return rounds_; }

 private:
  std::vector<Agent> agents_;
  unsigned threads_;
  std::uint64_t rounds_ = 0;
  std::size_t failed_step_ = 0;
};

void require_finite(const NetworkState& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!std::isfinite(s.x[i]) || !std::isfinite(s.z[i]))
      throw SimulationError("non-finite initial state at agent " + std::to_string(i));
}

}  // namespace

double energy(const NetworkState& s) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) e += s.x[i] * s.x[i] + s.z[i] * s.z[i];
  return e;
}

SimConfig SimConfig::with_rate(double fs, double t_end) {
  SimConfig cfg;
  cfg.fs = fs;
  cfg.h = (1.0 / fs) / 10.0;
  cfg.t_end = t_end;
  return cfg;
}

std::size_t SimConfig::sample_count() const {
  const double v = t_end * fs;
  return static_cast<std::size_t>(std::floor(v + 1e-9 * std::max(1.0, v))) + 1;
}

std::size_t SimConfig::steps_per_sample() const {
  return static_cast<std::size_t>(std::llround((1.0 / fs) / h));
}

void validate(const SimConfig& cfg, const TopologySchedule& schedule) {
  if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) throw ConfigError("step h must be positive and finite");
  if (!(cfg.fs > 0.0) || !std::isfinite(cfg.fs)) throw ConfigError("sampling rate fs must be positive and finite");
  if (!(cfg.t_end > 0.0) || !std::isfinite(cfg.t_end)) throw ConfigError("t_end must be positive and finite");

  const double ratio = (1.0 / cfg.fs) / cfg.h;
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-6 * ratio) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "sampling period 1/fs = " << 1.0 / cfg.fs << " s is not an integer multiple of step h = " << cfg.h
        << " s (ratio " << ratio << "); pick h = (1/fs)/k";
    throw ConfigError(msg.str());
  }

  for (std::size_t k = 0; k < schedule.segments().size(); ++k) {
    const std::size_t dmax = max_degree(schedule.segments()[k].graph);
    const double highest = 1.0 + 2.0 * static_cast<double>(dmax);
    if (!(2.0 * kPi * cfg.fs > 2.0 * highest)) {
      std::ostringstream msg;
      msg << "Nyquist guard violated on segment " << k << ": 2*pi*fs = " << 2.0 * kPi * cfg.fs
          << " rad/s must exceed 2*(1 + 2*max_degree) = " << 2.0 * highest << " rad/s; raise fs above "
          << highest / kPi;
      throw ConfigError(msg.str());
    }
  }
  if (schedule.t_end() < cfg.t_end - 1e-9)
    throw ConfigError("schedule ends at " + std::to_string(schedule.t_end()) + " s, before t_end = " +
                      std::to_string(cfg.t_end) + " s");
}

NetworkState Trace::state_at(std::size_t sample) const {
  NetworkState s;
  s.t = times.at(sample);
  for (std::size_t i = 0; i < agent_count(); ++i) {
    s.x.push_back(x[i][sample]);
    s.z.push_back(z[i][sample]);
  }
  return s;
}

NetworkState random_init(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetworkState s;
  s.x.resize(n);
  s.z.resize(n);
  for (auto& v : s.x) v = (rng() >> 63) ? 1.0 : -1.0;
  for (auto& v : s.z) v = (rng() >> 63) ? 1.0 : -1.0;
  return s;
}

AgentState local_derivative(AgentState self, std::span<const AgentState> neighbor_values) {
  AgentState d{self.z, -self.x};
  for (const auto& nb : neighbor_values) {
    d.x += self.z - nb.z;
    d.z -= self.x - nb.x;
  }
  return d;
}

Eigen::MatrixXd build_system_matrix(const LaplacianMatrix& L) {
  const Eigen::Index n = L.values.rows();
  const Eigen::MatrixXd shifted = Eigen::MatrixXd::Identity(n, n) + L.values;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  A.topRightCorner(n, n) = shifted;
  A.bottomLeftCorner(n, n) = -shifted;
  return A;
}

NetworkState rk4_step(const NetworkState& state, const Graph& g, double h) {
  if (state.size() != g.size()) throw std::invalid_argument("state size does not match graph");
  require_finite(state);
  SynchronousNetwork net(state, 1);
  net.run(1, h, false, [&](std::size_t) -> const Graph& { return g; }, [](std::size_t) {});
  NetworkState out;
  net.snapshot(out);
  out.t = state.t + h;
  return out;
}

SimResult simulate(const TopologySchedule& schedule, const SimConfig& cfg, const NetworkState& init) {
  validate(cfg, schedule);
  const std::size_t n = schedule.agent_count();
  if (init.size() != n || init.z.size() != n)
    throw ConfigError("initial state has " + std::to_string(init.size()) + " agents, schedule has " +
                      std::to_string(n));
  require_finite(init);

  const std::size_t samples = cfg.sample_count();
  const std::size_t sps = cfg.steps_per_sample();
  const std::size_t steps = (samples - 1) * sps;

  // Segment boundaries snapped to the step grid.
  const auto& segs = schedule.segments();
  std::vector<std::size_t> first_step(segs.size());
  for (std::size_t k = 0; k < segs.size(); ++k)
    first_step[k] = k == 0 ? 0 : static_cast<std::size_t>(std::llround(segs[k].t_start / cfg.h));

  SimResult result;
  Trace& tr = result.trace;
  tr.fs = cfg.fs;
  tr.times.resize(samples);
  tr.x.assign(n, std::vector<double>(samples));
  tr.z.assign(n, std::vector<double>(samples));
  for (std::size_t k = 0; k < samples; ++k) tr.times[k] = static_cast<double>(k) / cfg.fs;

  for (std::size_t k = 0; k < segs.size(); ++k) {
    const std::size_t begin = first_step[k];
    if (begin > steps) break;
    const std::size_t end = k + 1 < segs.size() ? std::min(first_step[k + 1], steps) : steps;
    TraceSegment ts;
    ts.index = k;
    ts.t_start = static_cast<double>(begin) * cfg.h;
    ts.t_end = static_cast<double>(end) * cfg.h;
    ts.first_sample = (begin + sps - 1) / sps;
    ts.last_sample = end / sps;
    tr.segments.push_back(ts);
  }

  auto record = [&](std::size_t k, const SynchronousNetwork& net) {
    for (std::size_t i = 0; i < n; ++i) {
      tr.x[i][k] = net.agent(i).committed.x;
      tr.z[i][k] = net.agent(i).committed.z;
    }
  };

  SynchronousNetwork net(init, cfg.threads);
  record(0, net);
  auto graph_at = [&](std::size_t step) -> const Graph& {
    std::size_t k = 0;
    while (k + 1 < segs.size() && first_step[k + 1] <= step) ++k;
    return segs[k].graph;
  };
  net.run(steps, cfg.h, cfg.count_messages, graph_at, [&](std::size_t step) {
    if ((step + 1) % sps == 0) record((step + 1) / sps, net);
  });

  MessageCounter& mc = result.messages;
  mc.per_agent.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    mc.per_agent[i] = net.agent(i).messages_sent;
    mc.total += mc.per_agent[i];
  }
  mc.per_sample_rounds = 4 * sps;
  mc.rounds = 4 * net.steps_executed();

  net.snapshot(result.final_state);
  result.final_state.t = static_cast<double>(steps) * cfg.h;
  return result;
}

std::uint64_t round_bound(std::size_t max_degree, double t_min, double fs) {
  const double v = 4.0 * static_cast<double>(max_degree) * t_min * fs;
  return static_cast<std::uint64_t>(std::ceil(v - 1e-9 * std::max(1.0, v)));
}

}  // namespace lapspec
