#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lapspec/dynamics.hpp"
#include "lapspec/oracle.hpp"
#include "support.hpp"

using namespace lapspec;

namespace {

NetworkState constant_state(std::size_t n, double x, double z) {
  NetworkState s;
  s.x.assign(n, x);
  s.z.assign(n, z);
  return s;
}

double max_abs_diff(const NetworkState& a, const NetworkState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max({d, std::abs(a.x[i] - b.x[i]), std::abs(a.z[i] - b.z[i])});
  return d;
}

// Trapezoidal time average of x_i over samples [0, last].
double time_average(const std::vector<double>& v, std::size_t last) {
  double s = 0.5 * (v[0] + v[last]);
  for (std::size_t k = 1; k < last; ++k) s += v[k];
  return s / static_cast<double>(last);
}

}  // namespace

TEST_CASE("random_init") {
  SUBCASE("entries are +-1") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = random_init(1, seed);
      CHECK(std::abs(s.x[0]) == 1.0);
      CHECK(std::abs(s.z[0]) == 1.0);
    }
  }
  SUBCASE("deterministic per seed") {
    const auto a = random_init(5, 42);
    const auto b = random_init(5, 42);
    CHECK(a.x == b.x);
    CHECK(a.z == b.z);
    CHECK(random_init(64, 1).x != random_init(64, 2).x);
  }
  SUBCASE("mean near zero for large n") {
    const auto s = random_init(1000, 3);
    double mean = 0.0;
    for (double v : s.x) mean += v;
    CHECK(std::abs(mean / 1000.0) < 0.1);
  }
}

TEST_CASE("local_derivative") {
  SUBCASE("isolated agent") {
    const auto d = local_derivative({1.0, 0.0}, {});
    CHECK(d.x == 0.0);
    CHECK(d.z == -1.0);
  }
  SUBCASE("K2 agent") {
    const AgentState nb[] = {{-1.0, 0.0}};
    const auto d = local_derivative({1.0, 0.0}, nb);
    CHECK(d.x == 0.0);
    CHECK(d.z == -3.0);
  }
  SUBCASE("neighbours equal to self") {
    const AgentState self{0.3, -0.7};
    const AgentState nb[] = {self, self};
    const auto d = local_derivative(self, nb);
    CHECK(d.x == self.z);
    CHECK(d.z == -self.x);
  }
}

TEST_CASE("build_system_matrix") {
  SUBCASE("single agent") {
    const auto A = build_system_matrix(build_laplacian(Graph(1)));
    Eigen::Matrix2d expected;
    expected << 0, 1, -1, 0;
    CHECK(A == Eigen::MatrixXd(expected));
  }
  SUBCASE("K2") {
    const auto A = build_system_matrix(build_laplacian(complete_graph(2)));
    Eigen::Matrix2d block;
    block << 2, -1, -1, 2;
    CHECK(A.topRightCorner(2, 2) == Eigen::MatrixXd(block));
    CHECK(A.bottomLeftCorner(2, 2) == Eigen::MatrixXd(-block));
    CHECK(A.topLeftCorner(2, 2).isZero(0.0));
  }
  SUBCASE("skew symmetric exactly") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto A = build_system_matrix(build_laplacian(testing::random_graph(1 + rng() % 12, 0.4, rng)));
      CHECK((A + A.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("rk4_step") {
  SUBCASE("single agent rotates") {
    NetworkState s = constant_state(1, 1.0, 0.0);
    const auto next = rk4_step(s, Graph(1), 0.01);
    CHECK(std::abs(next.x[0] - std::cos(0.01)) < 1e-10);
    CHECK(std::abs(next.z[0] + std::sin(0.01)) < 1e-10);
    CHECK(next.t == doctest::Approx(0.01));
  }
  SUBCASE("zero step is the identity") {
    const auto s = random_init(6, 9);
    const auto next = rk4_step(s, path_graph(6), 0.0);
    CHECK(next.x == s.x);
    CHECK(next.z == s.z);
  }
  SUBCASE("K2 difference mode oscillates at 3 rad/s") {
    NetworkState s;
    s.x = {1.0, -1.0};
    s.z = {0.0, 0.0};
    const Graph g = complete_graph(2);
    for (int k = 0; k < 1000; ++k) s = rk4_step(s, g, 1e-3);
    CHECK(std::abs(s.x[0] - std::cos(3.0)) < 1e-9);
    CHECK(std::abs(s.x[1] + std::cos(3.0)) < 1e-9);
  }
  SUBCASE("non-finite state aborts") {
    NetworkState s = constant_state(2, 1.0, 0.0);
    s.x[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(rk4_step(s, complete_graph(2), 0.01), SimulationError);
  }
}

TEST_CASE("simulate: sampling grid") {
  const SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 50.0);
  CHECK(cfg.steps_per_sample() == 10);
  const auto res = simulate(TopologySchedule::constant(path_graph(5), 50.0), cfg, random_init(5, 1));
  // floor(50 * 100 / (2 pi)) + 1 = floor(795.77) + 1.
  CHECK(res.trace.sample_count() == 796);
  CHECK(res.trace.agent_count() == 5);
  for (std::size_t k = 0; k < res.trace.sample_count(); ++k)
    CHECK(res.trace.times[k] == static_cast<double>(k) / kDefaultSampleRate);
  CHECK(res.messages.per_sample_rounds == 40);

  // Grid points that are whole periods stay on the grid.
  CHECK(SimConfig::with_rate(kDefaultSampleRate, 2.0 * kPi).sample_count() == 101);
}

TEST_CASE("simulate: decoupled agents follow cos t + sin t") {
  const SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 20.0);
  const auto res = simulate(TopologySchedule::constant(Graph(4), 20.0), cfg, constant_state(4, 1.0, 1.0));
  double err = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < res.trace.sample_count(); ++k) {
      const double t = res.trace.times[k];
      err = std::max(err, std::abs(res.trace.x[i][k] - (std::cos(t) + std::sin(t))));
    }
  CHECK(err < 1e-8);
}

TEST_CASE("simulate: configuration errors") {
  const auto sched = TopologySchedule::constant(path_graph(5), 10.0);
  const auto init = random_init(5, 1);
  SUBCASE("Nyquist guard") {
    // 2 pi fs must exceed 2 (1 + 2*2) = 10.
    CHECK_THROWS_AS(simulate(sched, SimConfig::with_rate(1.5, 10.0), init), ConfigError);
    CHECK_NOTHROW(validate(SimConfig::with_rate(1.6, 10.0), sched));
  }
  SUBCASE("sampling period not a multiple of h") {
    SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 10.0);
    cfg.h = 0.025;
    CHECK_THROWS_AS(validate(cfg, sched), ConfigError);
  }
  SUBCASE("schedule too short") {
    CHECK_THROWS_AS(validate(SimConfig::with_rate(kDefaultSampleRate, 11.0), sched), ConfigError);
  }
  SUBCASE("bad values") {
    SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 10.0);
    cfg.h = 0.0;
    CHECK_THROWS_AS(validate(cfg, sched), ConfigError);
    CHECK_THROWS_AS(validate(SimConfig::with_rate(kDefaultSampleRate, -1.0), sched), ConfigError);
  }
  SUBCASE("initial state size") {
    CHECK_THROWS_AS(simulate(sched, SimConfig::with_rate(kDefaultSampleRate, 10.0), random_init(4, 1)),
                    ConfigError);
  }
}

TEST_CASE("simulate: switching schedule carries the state across segments") {
  TopologySchedule sched({{0.0, 6.4, path_graph(5)}, {6.4, 12.9, star_graph(4)}, {12.9, 20.0, cycle_graph(5)}});
  const SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 20.0);
  const auto init = random_init(5, 4);
  const auto res = simulate(sched, cfg, init);
  REQUIRE(res.trace.segments.size() == 3);
  const auto& segs = res.trace.segments;
  CHECK(segs[0].first_sample == 0);
  CHECK(segs[1].t_start == doctest::Approx(6.4).epsilon(1e-3));
  CHECK(segs[2].t_start == doctest::Approx(12.9).epsilon(1e-3));
  for (std::size_t k = 1; k < 3; ++k) {
    CHECK(segs[k].t_start == segs[k - 1].t_end);
    CHECK(segs[k].first_sample <= segs[k - 1].last_sample + 1);
  }
  CHECK(segs[2].last_sample == res.trace.sample_count() - 1);

  // Piecewise reference: dense RK4 with the same step grid.
  NetworkState ref = init;
  std::size_t step = 0;
  const std::size_t sps = cfg.steps_per_sample();
  const std::size_t steps = (res.trace.sample_count() - 1) * sps;
  double err = 0.0;
  for (std::size_t k = 0; k < sched.segments().size(); ++k) {
    const auto A = build_system_matrix(build_laplacian(sched.segments()[k].graph));
    const std::size_t end = k + 1 < sched.segments().size()
                                ? static_cast<std::size_t>(std::llround(sched.segments()[k + 1].t_start / cfg.h))
                                : steps;
    for (; step < end; ++step) {
      ref = dense_rk4_step(A, ref, cfg.h);
      if ((step + 1) % sps == 0) err = std::max(err, max_abs_diff(ref, res.trace.state_at((step + 1) / sps)));
    }
  }
  CHECK(err < 1e-12);
}

TEST_CASE("message passing matches the dense reference step by step") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = testing::random_connected_graph(2 + rng() % 9, 0.4, rng);
    const auto A = build_system_matrix(build_laplacian(g));
    NetworkState mp = random_init(g.size(), rng());
    NetworkState dense = mp;
    double worst = 0.0;
    for (int k = 0; k < 500; ++k) {
      mp = rk4_step(mp, g, 1e-2);
      dense = dense_rk4_step(A, dense, 1e-2);
      worst = std::max(worst, max_abs_diff(mp, dense));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("energy is conserved over 100 s") {
  std::mt19937_64 rng(17);
  const Graph g = testing::random_connected_graph(8, 0.4, rng);
  SimConfig cfg = SimConfig::with_rate(10.0, 100.0);
  cfg.h = 1e-3;
  cfg.count_messages = false;
  const auto init = random_init(8, 5);
  const auto res = simulate(TopologySchedule::constant(g, 100.0), cfg, init);
  const double e0 = energy(init);
  double drift = 0.0;
  for (std::size_t k = 0; k < res.trace.sample_count(); ++k)
    drift = std::max(drift, std::abs(energy(res.trace.state_at(k)) - e0) / e0);
  CHECK(drift < 1e-6);
}

TEST_CASE("average mode rotates at exactly 1 rad/s") {
  std::mt19937_64 rng(23);
  const Graph g = testing::random_connected_graph(7, 0.3, rng);
  const auto init = random_init(7, 8);
  const auto res = simulate(TopologySchedule::constant(g, 30.0), SimConfig::with_rate(kDefaultSampleRate, 30.0), init);
  double sx = 0.0, sz = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    sx += init.x[i];
    sz += init.z[i];
  }
  double err = 0.0;
  for (std::size_t k = 0; k < res.trace.sample_count(); ++k) {
    const double t = res.trace.times[k];
    double sum = 0.0;
    for (std::size_t i = 0; i < 7; ++i) sum += res.trace.x[i][k];
    err = std::max(err, std::abs(sum - (std::cos(t) * sx + std::sin(t) * sz)));
  }
  CHECK(err < 1e-6);
}

TEST_CASE("trace is independent of the worker count") {
  std::mt19937_64 rng(29);
  const Graph g = testing::random_connected_graph(9, 0.3, rng);
  const auto sched = TopologySchedule::constant(g, 10.0);
  const auto init = random_init(9, 2);
  SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 10.0);
  const auto ref = simulate(sched, cfg, init);
  for (unsigned threads : {2u, 3u, 4u}) {
    cfg.threads = threads;
    const auto other = simulate(sched, cfg, init);
    CHECK(other.trace.x == ref.trace.x);
    CHECK(other.trace.z == ref.trace.z);
    CHECK(other.messages.per_agent == ref.messages.per_agent);
  }
}

TEST_CASE("round accounting") {
  CHECK(round_bound(2, 2.0 * kPi, kDefaultSampleRate) == 800);
  CHECK(round_bound(1, 1.0, 1.0) == 4);

  // One RK4 step per sample over one slowest period.
  SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 2.0 * kPi);
  cfg.h = 1.0 / cfg.fs;
  const Graph p5 = path_graph(5);
  const auto res = simulate(TopologySchedule::constant(p5, 2.0 * kPi), cfg, random_init(5, 1));
  CHECK(res.messages.rounds == 400);
  CHECK(res.messages.per_sample_rounds == 4);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(res.messages.per_agent[i] <= 800);
    if (p5.degree(i) == 2) CHECK(res.messages.per_agent[i] == 800);
    CHECK(res.messages.per_agent[i] == 4 * 100 * p5.degree(i));
  }
  CHECK(res.messages.total == 4 * 100 * 2 * p5.edges().size());
}

TEST_CASE("no DC component over whole periods on Laplacian-integral graphs") {
  // Every mode frequency is an integer, so windows of 2 pi k hold whole cycles.
  const std::vector<Graph> graphs = {complete_graph(2), complete_graph(3), star_graph(3), cycle_graph(4),
                                     cycle_graph(6), Graph(5, {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}})};
  SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 4.0 * kPi);
  cfg.h = (1.0 / cfg.fs) / 63.0;  // below 1e-3
  for (const auto& g : graphs) {
    const auto res = simulate(TopologySchedule::constant(g, 4.0 * kPi), cfg, random_init(g.size(), 3));
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(time_average(res.trace.x[i], 100)) < 1e-3);
      CHECK(std::abs(time_average(res.trace.x[i], 200)) < 1e-3);
    }
  }
}
