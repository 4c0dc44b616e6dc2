// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lapspec/cli.hpp"
#include "lapspec/dynamics.hpp"
#include "lapspec/freq_estimation.hpp"
#include "lapspec/oracle.hpp"
#include "support.hpp"

using namespace lapspec;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FreqEstimatorConfig estimator(std::size_t nmax, double window) {
  FreqEstimatorConfig cfg;
  cfg.Ts = 2.0 * kPi / 100.0;
  cfg.n_max = nmax;
  cfg.window = window;
  return cfg;
}

double min_amplitude(const EigenDecomposition& dec, const NetworkState& init, std::size_t agent) {
  double m = 1e300;
  for (const auto& line : modal_coefficients(dec, init, agent).lines) m = std::min(m, line.amplitude());
  return m;
}

// Largest |lambda_hat - lambda| after pairing sorted lists; infinity on a count mismatch.
double set_error(const std::vector<double>& estimate, const std::vector<double>& truth) {
  if (estimate.size() != truth.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) worst = std::max(worst, std::abs(estimate[k] - truth[k]));
  return worst;
}

SampledSignal analytic_signal(const EigenDecomposition& dec, const NetworkState& init, std::size_t agent,
                              double duration) {
  SampledSignal sig;
  sig.agent = agent;
  const auto count = static_cast<std::size_t>(std::floor(duration * sig.fs + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k)
    sig.samples.push_back(analytic_trajectory(dec, init, static_cast<double>(k) / sig.fs).x[agent]);
  return sig;
}

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const Graph p5 = path_graph(5);
  const auto dec = eig_sym(build_laplacian(p5));
  // Seed with every modal coefficient above 0.05 at every agent where the
  // eigenvector does not vanish; at the centre two eigenvectors are zero for
  // every initial condition.
  std::uint64_t seed = 0;
  for (std::uint64_t s = 1; s < 1000 && seed == 0; ++s) {
    const auto init = random_init(5, s);
    bool ok = true;
    for (std::size_t i = 0; i < 5 && ok; ++i)
      for (const auto& line : modal_coefficients(dec, init, i).lines) {
        double norm = 0.0;
        for (const auto& c : dec.clusters)
          if (c.value == line.lambda) norm = c.basis.row(static_cast<Eigen::Index>(i)).norm();
        if (norm > 1e-9 && line.amplitude() <= 0.05) ok = false;
      }
    if (ok) seed = s;
  }
  const auto init = random_init(5, seed);
  const auto res =
      simulate(TopologySchedule::constant(p5, 50.0), SimConfig::with_rate(kDefaultSampleRate, 50.0), init);
  const std::vector<double> table = {0.0, 0.3819, 1.3819, 2.6180, 3.6180};
  std::ostringstream detail;
  bool all = true;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto est = estimate_frequencies(agent_signal(res.trace, i), estimator(8, 50.0));
    const double err = set_error(est.lambda, table);
    const bool ok = err < 5e-3;
    all = all && ok;
    detail << "agent " << i << (ok ? " ok" : " MISS") << " n=" << est.n << " err=" << fmt(err) << "; ";
  }
  const double elapsed = seconds_since(t0);
  detail << "seed " << seed << ", " << fmt(elapsed) << " s";
  if (!all) detail << " (centre agent: eigenvectors of 0.382 and 2.618 vanish there)";
  report(1, "P5 eigenvalues from every agent, T=50 s", all && elapsed < 5.0, detail.str());
}

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int tested = 0, failed = 0;
  double worst = 0.0;
  while (tested < 100) {
    const std::size_t n = 3 + rng() % 8;
    const Graph g = testing::random_connected_graph(n, 0.35, rng);
    const auto dec = eig_sym(build_laplacian(g));
    if (!dec.has_simple_spectrum()) continue;
    // Well-conditioned agent: the one with the largest smallest modal amplitude.
    NetworkState init;
    std::size_t agent = n;
    for (int attempt = 0; attempt < 50 && agent == n; ++attempt) {
      init = random_init(n, rng());
      double best = 0.05;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = min_amplitude(dec, init, i);
        if (m > best) {
          best = m;
          agent = i;
        }
      }
    }
    if (agent == n) continue;  // no agent sees every mode (eigenvector zeros)
    const auto res =
        simulate(TopologySchedule::constant(g, 50.0), SimConfig::with_rate(kDefaultSampleRate, 50.0), init);
    const auto est = estimate_frequencies(agent_signal(res.trace, agent), estimator(12, 50.0));
    const double err = set_error(est.lambda, dec.distinct_values());
    worst = std::max(worst, err);
    if (!(err < 1e-2)) ++failed;
    ++tested;
  }
  const double elapsed = seconds_since(t0);
  report(2, "random connected graphs n in [3,10], simple spectra", failed == 0 && elapsed < 120.0,
         std::to_string(tested - failed) + "/" + std::to_string(tested) + " within 1e-2, worst " + fmt(worst) + ", " +
             fmt(elapsed) + " s");
}

void criterion_3() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const auto L = build_laplacian(testing::random_graph(n, 0.4, rng));
    auto computed = general_eigenvalues(build_system_matrix(L));
    std::vector<std::complex<double>> expected;
    for (const auto& p : eig_pairs_of_A(eig_sym(L))) expected.push_back(p.value);
    auto order = [](std::complex<double> a, std::complex<double> b) {
      return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
    };
    std::sort(computed.begin(), computed.end(), order);
    std::sort(expected.begin(), expected.end(), order);
    if (computed.size() != expected.size()) {
      worst = INFINITY;
      continue;
    }
    for (std::size_t k = 0; k < computed.size(); ++k) worst = std::max(worst, std::abs(computed[k] - expected[k]));
  }
  report(3, "eigenvalues of A are +-j(1+lambda)", worst < 1e-10,
         "50 graphs n<=12, worst multiset distance " + fmt(worst));
}

void criterion_4() {
  std::mt19937_64 rng(4);
  std::vector<Graph> graphs = {star_graph(3), complete_graph(4), cycle_graph(6)};
  for (int k = 0; k < 20; ++k) graphs.push_back(testing::random_connected_graph(3 + rng() % 8, 0.35, rng));
  double worst_amp = 0.0, worst_avg = 0.0;
  for (const auto& g : graphs) {
    const auto dec = eig_sym(build_laplacian(g));
    const auto init = random_init(g.size(), rng());
    double mean_x = 0.0;
    for (double v : init.x) mean_x += v;
    mean_x /= static_cast<double>(g.size());
    std::vector<double> omegas;
    for (const auto& c : dec.clusters) omegas.push_back(1.0 + c.value);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto mc = modal_coefficients(dec, init, i);
      worst_avg = std::max(worst_avg, std::abs(mc.lines.front().a - mean_x));
      const auto fit = ls_fit(analytic_signal(dec, init, i, 50.0), omegas);
      for (std::size_t j = 0; j < mc.lines.size(); ++j) {
        const auto& line = mc.lines[j];
        if (line.null_mode) {
          // The average mode is a cos t + b sin t with signed a, b.
          worst_amp = std::max({worst_amp, std::abs(fit.cos_coeffs[j] - line.a), std::abs(fit.sin_coeffs[j] - line.b)});
        } else {
          worst_amp = std::max(worst_amp, std::abs(fit.amplitudes[j] - line.a));
        }
      }
    }
  }
  report(4, "least-squares amplitudes equal modal coefficients", worst_amp < 1e-6 && worst_avg < 1e-14,
         std::to_string(graphs.size()) + " graphs incl. star K1,3; worst amplitude error " + fmt(worst_amp) +
             ", worst |a_1 - mean(x0)| " + fmt(worst_avg));
}

void criterion_5() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  SimConfig cfg = SimConfig::with_rate(10.0, 10.0);
  cfg.h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = testing::random_graph(2 + rng() % 7, 0.5, rng);
    const auto init = random_init(g.size(), rng());
    const auto res = simulate(TopologySchedule::constant(g, 10.0), cfg, init);
    const auto dec = eig_sym(build_laplacian(g));
    for (std::size_t k = 0; k < res.trace.sample_count(); ++k) {
      const auto exact = analytic_trajectory(dec, init, res.trace.times[k]);
      for (std::size_t i = 0; i < g.size(); ++i)
        worst = std::max({worst, std::abs(exact.x[i] - res.trace.x[i][k]), std::abs(exact.z[i] - res.trace.z[i][k])});
    }
  }
  report(5, "RK4 trace matches the closed form on [0,10], h=1e-3", worst < 1e-6,
         "20 graphs n<=8, max abs error " + fmt(worst));
}

void criterion_6() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  int holds = 0, pbh = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng() % 6;
    const Graph g = testing::random_graph(n, 0.5, rng);
    Eigen::MatrixXd C;
    if (trial % 2 == 0) {
      C = agent_output_matrix(n, rng() % n);
    } else {
      C.resize(2, static_cast<Eigen::Index>(n));
      for (Eigen::Index k = 0; k < C.size(); ++k) C(k) = normal(rng);
    }
    const auto r = verify_rank_relation(build_laplacian(g), C, 1e-9);
    if (r.relation_holds) ++holds;
    if (r.rank_L == r.pbh_rank) ++pbh;
  }
  report(6, "rank O(A, C_hat) = 2 rank O(L, C)", holds == 50,
         std::to_string(holds) + "/50 pairs (n in [3,8], 25 e_i^T, 25 random 2xn), rank_L = PBH rank in " +
             std::to_string(pbh) + "/50");
}

void criterion_7() {
  std::mt19937_64 rng(7);
  const std::vector<Graph> graphs = {path_graph(5), star_graph(3), complete_graph(5), cycle_graph(6),
                                     testing::random_connected_graph(10, 0.3, rng)};
  SimConfig cfg = SimConfig::with_rate(10.0, 100.0);
  cfg.h = 1e-3;
  cfg.count_messages = false;
  double worst = 0.0;
  for (const auto& g : graphs) {
    const auto init = random_init(g.size(), 11);
    const auto res = simulate(TopologySchedule::constant(g, 100.0), cfg, init);
    const double e0 = energy(init);
    for (std::size_t k = 0; k < res.trace.sample_count(); ++k)
      worst = std::max(worst, std::abs(energy(res.trace.state_at(k)) - e0) / e0);
  }
  report(7, "energy drift over [0,100], h=1e-3", worst < 1e-6,
         std::to_string(graphs.size()) + " graphs, max relative drift " + fmt(worst));
}

void criterion_8() {
  const Graph p5 = path_graph(5);
  SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 2.0 * kPi);
  cfg.h = 1.0 / cfg.fs;
  const auto res = simulate(TopologySchedule::constant(p5, 2.0 * kPi), cfg, random_init(5, 1));
  const auto bound = round_bound(max_degree(p5), 2.0 * kPi, cfg.fs);
  bool ok = bound == 800;
  std::ostringstream counts;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto m = res.messages.per_agent[i];
    ok = ok && m <= bound && (p5.degree(i) != max_degree(p5) || m == bound);
    counts << m << (i + 1 < 5 ? "," : "");
  }
  report(8, "messages per agent over T_min=2pi within 4*Dmax*T_min*fs", ok,
         "bound " + std::to_string(bound) + ", per-agent [" + counts.str() + "]");
}

void criterion_9() {
  // Graphs whose Laplacian spectra are integers, then graphs whose are not.
  std::mt19937_64 rng(9);
  const std::vector<std::pair<std::string, Graph>> graphs = {
      {"K2", complete_graph(2)},
      {"K3", complete_graph(3)},
      {"K1,3", star_graph(3)},
      {"C4", cycle_graph(4)},
      {"C6", cycle_graph(6)},
      {"K2,3", Graph(5, {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}})},
      {"Q3", Graph(8, {{0, 1}, {0, 2}, {0, 4}, {1, 3}, {1, 5}, {2, 3}, {2, 6}, {3, 7}, {4, 5}, {4, 6}, {5, 7}, {6, 7}})},
      {"P5", path_graph(5)},
      {"random n=7", testing::random_connected_graph(7, 0.3, rng)}};
  SimConfig cfg = SimConfig::with_rate(kDefaultSampleRate, 4.0 * kPi);
  cfg.h = (1.0 / cfg.fs) / 63.0;  // just under 1e-3
  std::ostringstream detail;
  bool all = true;
  double worst_offset = 0.0;
  for (const auto& [name, g] : graphs) {
    const auto init = random_init(g.size(), 3);
    const auto res = simulate(TopologySchedule::constant(g, 4.0 * kPi), cfg, init);
    const std::size_t last = res.trace.sample_count() - 1;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& x = res.trace.x[i];
      double s = 0.5 * (x[0] + x[last]);
      for (std::size_t k = 1; k < last; ++k) s += x[k];
      worst = std::max(worst, std::abs(s / static_cast<double>(last)));
    }
    // Spectral reading: constant term of a fit at the true frequencies.
    const auto dec = eig_sym(build_laplacian(g));
    std::vector<double> omegas;
    for (const auto& c : dec.clusters) omegas.push_back(1.0 + c.value);
    for (std::size_t i = 0; i < g.size(); ++i)
      worst_offset = std::max(worst_offset, std::abs(ls_fit(agent_signal(res.trace, i), omegas, true).offset));
    all = all && worst < 1e-3;
    detail << name << " " << fmt(worst) << "; ";
  }
  detail << "fitted DC offset max " << fmt(worst_offset);
  report(9, "time average of x_i over [0,4pi] below 1e-3", all, detail.str());
}

void criterion_10() {
  const Graph star = star_graph(3);
  const auto dec = eig_sym(build_laplacian(star));
  NetworkState init;
  init.x = {1.0, -1.0, 1.0, 1.0};
  init.z = {-1.0, 1.0, 1.0, -1.0};
  const auto res =
      simulate(TopologySchedule::constant(star, 50.0), SimConfig::with_rate(kDefaultSampleRate, 50.0), init);
  const std::vector<double> truth = {0.0, 1.0, 4.0};
  bool all = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto est = estimate_frequencies(agent_signal(res.trace, i), estimator(8, 50.0));
    const bool ok = set_error(est.lambda, truth) < 1e-2;
    cli::RunConfig cfg;
    cfg.command = "validate";
    cfg.topology = "star:3";
    cfg.agent = i;
    const auto v = cli::validation_report(cfg);
    const bool deficient = !v["segments"][0]["observability"]["full_rank"].get<bool>();
    all = all && ok && deficient;
    detail << "agent " << i << " n=" << est.n << (ok ? " ok" : " MISS") << (deficient ? " rank-deficient" : " full-rank")
           << "; ";
  }
  if (!all) detail << "(centre: both lambda=1 eigenvectors vanish there)";
  report(10, "star K1,3 from a single agent gives {0,1,4}", all, detail.str());
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria = {criterion_1, criterion_2, criterion_3, criterion_4,
                                                       criterion_5, criterion_6, criterion_7, criterion_8,
                                                       criterion_9, criterion_10};
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    try {
      criteria[k]();
    } catch (const std::exception& e) {
      report(static_cast<int>(k + 1), "criterion", false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
