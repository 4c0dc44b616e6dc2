#include "lapspec/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "lapspec/trace_io.hpp"

namespace lapspec::cli {

using nlohmann::json;
namespace fs = std::filesystem;

SimConfig RunConfig::sim_config() const {
  SimConfig c = SimConfig::with_rate(fs, t_end);
  if (step > 0.0) c.h = step;
  c.seed = seed;
  c.threads = std::max(1u, threads);
  return c;
}

FreqEstimatorConfig RunConfig::estimator_config(double signal_fs) const {
  FreqEstimatorConfig c;
  c.Ts = 1.0 / signal_fs;
  c.n_max = nmax;
  c.se_percent = se;
  c.window = window;
  c.amplitude_floor = amplitude_floor;
  c.zero_pad = zero_pad;
  return c;
}

json to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"graph_file", c.graph_file},
          {"schedule_file", c.schedule_file},
          {"topology", c.topology},
          {"trace_file", c.trace_file},
          {"seed", c.seed},
          {"init", c.init},
          {"t_end", c.t_end},
          {"fs", c.fs},
          {"step", c.step},
          {"threads", c.threads},
          {"agent", c.agent},
          {"per_segment", c.per_segment},
          {"window", c.window},
          {"nmax", c.nmax},
          {"se", c.se},
          {"amplitude_floor", c.amplitude_floor},
          {"stft_window", c.stft_window},
          {"hop", c.hop},
          {"threshold", c.threshold},
          {"zero_pad", c.zero_pad},
          {"rank_tol", c.rank_tol},
          {"cluster_tol", c.cluster_tol},
          {"t_min", c.t_min}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("manifest config must be a JSON object");
  const json known = to_json(RunConfig{});
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("manifest config: unknown key '" + it.key() + "'");
  RunConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("command", c.command);
    get("graph_file", c.graph_file);
    get("schedule_file", c.schedule_file);
    get("topology", c.topology);
    get("trace_file", c.trace_file);
    get("seed", c.seed);
    get("init", c.init);
    get("t_end", c.t_end);
    get("fs", c.fs);
    get("step", c.step);
    get("threads", c.threads);
    get("agent", c.agent);
    get("per_segment", c.per_segment);
    get("window", c.window);
    get("nmax", c.nmax);
    get("se", c.se);
    get("amplitude_floor", c.amplitude_floor);
    get("stft_window", c.stft_window);
    get("hop", c.hop);
    get("threshold", c.threshold);
    get("zero_pad", c.zero_pad);
    get("rank_tol", c.rank_tol);
    get("cluster_tol", c.cluster_tol);
    get("t_min", c.t_min);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest config: ") + e.what());
  }
  return c;
}

Graph builtin_topology(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("topology '" + spec + "' must look like path:5");
  const std::string kind = spec.substr(0, colon);
  std::size_t size = 0;
  try {
    std::size_t used = 0;
    const long v = std::stol(spec.substr(colon + 1), &used);
    if (used != spec.size() - colon - 1 || v < 1) throw std::invalid_argument(spec);
    size = static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("topology '" + spec + "': size must be a positive integer");
  }
  if (kind == "path") return path_graph(size);
  if (kind == "star") return star_graph(size);
  if (kind == "complete") return complete_graph(size);
  if (kind == "cycle") {
    if (size < 3) throw ConfigError("cycle needs at least 3 agents");
    return cycle_graph(size);
  }
  throw ConfigError("unknown topology kind '" + kind + "' (path, star, complete, cycle)");
}

TopologySchedule resolve_schedule(const RunConfig& cfg) {
  const int sources = !cfg.graph_file.empty() + !cfg.schedule_file.empty() + !cfg.topology.empty();
  if (sources != 1) throw ConfigError("give exactly one of --graph, --schedule, --topology");
  if (!cfg.schedule_file.empty()) return load_schedule(cfg.schedule_file);
  const Graph g = cfg.graph_file.empty() ? builtin_topology(cfg.topology) : load_edge_list(cfg.graph_file);
  return TopologySchedule::constant(g, cfg.t_end);
}

namespace {

NetworkState initial_state(const RunConfig& cfg, std::size_t n) {
  if (cfg.init == "random") return random_init(n, cfg.seed);
  if (cfg.init == "ones") {
    NetworkState s;
    s.x.assign(n, 1.0);
    s.z.assign(n, 1.0);
    return s;
  }
  throw ConfigError("--init must be 'random' or 'ones', got '" + cfg.init + "'");
}

void check_agent(const RunConfig& cfg, std::size_t n) {
  if (cfg.agent >= n)
    throw ConfigError("agent index " + std::to_string(cfg.agent) + " out of range; the network has " +
                      std::to_string(n) + " agents");
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

json finish(const RunConfig& cfg, json outputs, json summary = json::object()) {
  json manifest = {{"tool", "lapspec"},
                   {"version", kToolVersion},
                   {"command", cfg.command},
                   {"config", to_json(cfg)},
                   {"outputs", std::move(outputs)}};
  if (!summary.empty()) manifest["summary"] = std::move(summary);
  write_text_file(out_path(cfg, cfg.command + ".manifest.json"), manifest.dump(2) + "\n");
  return manifest;
}

std::string csv_text(const auto& writer) {
  std::ostringstream ss;
  writer(ss);
  return ss.str();
}

SimResult simulate_config(const RunConfig& cfg, const TopologySchedule& schedule) {
  SimConfig sim = cfg.sim_config();
  // A schedule file carries its own horizon; t_end only shortens it.
  if (!cfg.schedule_file.empty()) sim.t_end = std::min(sim.t_end, schedule.t_end());
  return simulate(schedule, sim, initial_state(cfg, schedule.agent_count()));
}

}  // namespace

json run_simulate(const RunConfig& cfg) {
  const TopologySchedule schedule = resolve_schedule(cfg);
  for (const auto& w : schedule.warnings()) std::cerr << "warning: " << w << "\n";
  const SimResult res = simulate_config(cfg, schedule);
  save_trace(res.trace, out_path(cfg, "trace.csv"));
  write_text_file(out_path(cfg, "messages.json"), to_json(res.messages).dump(2) + "\n");
  return finish(cfg, {{"trace", "trace.csv"}, {"trace_metadata", "trace.csv.json"}, {"messages", "messages.json"}});
}

json run_estimate(const RunConfig& cfg) {
  if (cfg.trace_file.empty()) throw ConfigError("estimate needs --trace");
  const Trace trace = load_trace(cfg.trace_file);
  check_agent(cfg, trace.agent_count());
  const SampledSignal sig = agent_signal(trace, cfg.agent);
  const FreqEstimatorConfig est_cfg = cfg.estimator_config(trace.fs);
  est_cfg.validate();

  json result;
  if (!cfg.per_segment) {
    result = lapspec::to_json(estimate_frequencies(sig, est_cfg));
  } else {
    result = {{"agent", cfg.agent}, {"segments", json::array()}};
    for (const auto& seg : trace.segments) {
      json entry = {{"segment", seg.index}, {"t_start", seg.t_start}, {"t_end", seg.t_end}};
      const std::size_t count = seg.last_sample - seg.first_sample + 1;
      if (est_cfg.window_samples() > count) {
        entry["error"] = "window of " + format_double(cfg.window) + " s exceeds segment length " +
                         format_double(static_cast<double>(count - 1) / trace.fs) + " s";
      } else {
        entry["estimate"] = lapspec::to_json(estimate_frequencies(sig.slice(seg.first_sample, count), est_cfg));
      }
      result["segments"].push_back(std::move(entry));
    }
  }
  write_text_file(out_path(cfg, "estimate.json"), result.dump(2) + "\n");
  return finish(cfg, {{"estimate", "estimate.json"}});
}

json validation_report(const RunConfig& cfg) {
  const TopologySchedule schedule = resolve_schedule(cfg);
  const std::size_t n = schedule.agent_count();
  check_agent(cfg, n);
  const SimResult res = simulate_config(cfg, schedule);
  const Trace& trace = res.trace;
  const SampledSignal sig = agent_signal(trace, cfg.agent);
  const FreqEstimatorConfig est_cfg = cfg.estimator_config(trace.fs);
  est_cfg.validate();
  const Eigen::MatrixXd C = agent_output_matrix(n, cfg.agent);

  json report = {{"agent", cfg.agent}, {"n", n}, {"segments", json::array()}, {"warnings", schedule.warnings()}};

  double e0 = energy(trace.state_at(0));
  double drift = 0.0;
  for (std::size_t k = 0; k < trace.sample_count(); ++k)
    drift = std::max(drift, std::abs(energy(trace.state_at(k)) - e0) / std::max(e0, 1e-300));
  report["energy_drift"] = drift;

  for (const auto& seg : trace.segments) {
    const Graph& g = schedule.segments()[seg.index].graph;
    const LaplacianMatrix L = build_laplacian(g);
    const EigenDecomposition dec = eig_sym(L, cfg.cluster_tol);
    const NetworkState start = trace.state_at(seg.first_sample);
    const ModalCoefficients mc = modal_coefficients(dec, start, cfg.agent);
    const ObservabilityReport ranks = verify_rank_relation(L, C, cfg.rank_tol, cfg.cluster_tol);
    const auto estimable = check_estimability(dec, start, cfg.agent);
    json warnings = json::array();

    json entry = {{"segment", seg.index}, {"t_start", seg.t_start}, {"t_end", seg.t_end}};
    entry["oracle"] = oracle_report(dec, {mc}, ranks);
    entry["observability"] = {{"rank_L", ranks.rank_L},
                              {"rank_A", ranks.rank_A},
                              {"n", ranks.n},
                              {"full_rank", ranks.full_rank},
                              {"relation_holds", ranks.relation_holds},
                              {"pbh_rank", ranks.pbh_rank}};
    json unobservable = json::array();
    for (const auto& e : ranks.per_eigenvalue)
      if (!e.fully_observable()) unobservable.push_back({{"lambda", e.lambda}, {"multiplicity", e.multiplicity},
                                                         {"visible_rank", e.visible_rank}});
    entry["observability"]["deficient_eigenvalues"] = unobservable;
    if (!ranks.full_rank)
      warnings.push_back("observability rank deficient: rank O(L, e_i^T) = " + std::to_string(ranks.rank_L) +
                         " < n = " + std::to_string(n));
    if (!ranks.relation_holds)
      warnings.push_back("numerical rank relation rank_A = 2 rank_L violated (" + std::to_string(ranks.rank_A) +
                         " vs " + std::to_string(2 * ranks.rank_L) + "); rank decision is tolerance-sensitive");

    std::size_t missing = 0;
    bool any_positive_visible = false;
    for (const auto& e : estimable) {
      if (!e.estimable) ++missing;
      if (e.estimable && e.lambda > 0.0) any_positive_visible = true;
    }
    entry["missing_estimable"] = missing;
    if (!any_positive_visible)
      warnings.push_back("all modes with lambda > 0 have vanishing coefficients at this agent; only the average "
                         "mode is visible");

    const std::size_t count = seg.last_sample - seg.first_sample + 1;
    if (est_cfg.window_samples() > count) {
      entry["estimate_error"] = "window of " + format_double(cfg.window) + " s exceeds segment length " +
                                format_double(static_cast<double>(count - 1) / trace.fs) + " s";
      entry["warnings"] = warnings;
      report["segments"].push_back(std::move(entry));
      continue;
    }
    const SampledSignal win = sig.slice(seg.first_sample, est_cfg.window_samples());
    const SpectrumEstimate est = estimate_frequencies(win, est_cfg);
    entry["estimate"] = lapspec::to_json(est);

    // Eigenvalue table: every oracle eigenvalue against the nearest estimate.
    json table = json::array();
    double max_err = 0.0;
    std::vector<bool> used(est.lambda.size(), false);
    for (std::size_t j = 0; j < mc.lines.size(); ++j) {
      const auto& line = mc.lines[j];
      json row = {{"lambda", line.lambda}, {"multiplicity", line.multiplicity}, {"estimable", estimable[j].estimable}};
      std::size_t best = est.lambda.size();
      for (std::size_t k = 0; k < est.lambda.size(); ++k)
        if (best == est.lambda.size() || std::abs(est.lambda[k] - line.lambda) < std::abs(est.lambda[best] - line.lambda))
          best = k;
      if (best < est.lambda.size() && std::abs(est.lambda[best] - line.lambda) < 0.5) {
        row["lambda_hat"] = est.lambda[best];
        row["error"] = std::abs(est.lambda[best] - line.lambda);
        used[best] = true;
        if (estimable[j].estimable) max_err = std::max(max_err, std::abs(est.lambda[best] - line.lambda));
      } else {
        row["lambda_hat"] = nullptr;
        if (estimable[j].estimable) warnings.push_back("estimable eigenvalue " + format_double(line.lambda) + " not found");
      }
      table.push_back(std::move(row));
    }
    json unmatched = json::array();
    for (std::size_t k = 0; k < used.size(); ++k)
      if (!used[k]) unmatched.push_back(est.lambda[k]);
    entry["eigenvalue_table"] = table;
    entry["unmatched_estimates"] = unmatched;
    entry["max_abs_error"] = max_err;

    // Modal amplitudes against least squares at the oracle frequencies.
    std::vector<double> omegas;
    for (const auto& line : mc.lines) omegas.push_back(line.omega());
    json modal = json::array();
    try {
      const LsFit fit = ls_fit(win, omegas);
      for (std::size_t j = 0; j < mc.lines.size(); ++j)
        modal.push_back({{"lambda", mc.lines[j].lambda},
                         {"a", mc.lines[j].a},
                         {"b", mc.lines[j].b},
                         {"amplitude", mc.lines[j].amplitude()},
                         {"fitted_amplitude", fit.amplitudes[j]}});
    } catch (const IllConditionedFit& e) {
      warnings.push_back(std::string("modal comparison skipped: ") + e.what());
    }
    entry["modal_coefficients"] = modal;
    entry["warnings"] = warnings;
    report["segments"].push_back(std::move(entry));
  }
  return report;
}

json run_validate(const RunConfig& cfg) {
  const json report = validation_report(cfg);
  write_text_file(out_path(cfg, "validation.json"), report.dump(2) + "\n");
  json summary = json::array();
  for (const auto& s : report["segments"])
    summary.push_back({{"segment", s["segment"]},
                       {"rank_L", s["observability"]["rank_L"]},
                       {"rank_A", s["observability"]["rank_A"]},
                       {"missing_estimable", s["missing_estimable"]},
                       {"max_abs_error", s.contains("max_abs_error") ? s["max_abs_error"] : json(nullptr)}});
  return finish(cfg, {{"validation", "validation.json"}}, summary);
}

json run_spectrogram(const RunConfig& cfg) {
  if (cfg.trace_file.empty()) throw ConfigError("spectrogram needs --trace");
  const Trace trace = load_trace(cfg.trace_file);
  check_agent(cfg, trace.agent_count());
  const SampledSignal sig = agent_signal(trace, cfg.agent);
  if (!(cfg.stft_window > 0.0) || !(cfg.hop > 0.0)) throw ConfigError("--stft-window and --hop must be positive");
  const auto win = static_cast<std::size_t>(std::floor(cfg.stft_window * trace.fs + 1e-9)) + 1;
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.hop * trace.fs)));
  if (win > sig.samples.size())
    throw ConfigError("spectrogram window of " + format_double(cfg.stft_window) + " s exceeds the trace length " +
                      format_double(trace.times.back() - trace.times.front()) + " s");
  const SpectrogramData spec = spectrogram(sig, win, hop, cfg.zero_pad, cfg.threshold);
  write_text_file(out_path(cfg, "spectrogram.csv"), csv_text([&](std::ostream& o) { write_spectrogram_csv(o, spec); }));
  write_text_file(out_path(cfg, "spectrogram_mask.csv"),
                  csv_text([&](std::ostream& o) { write_spectrogram_mask_csv(o, spec); }));
  json meta = spectrogram_metadata(spec);
  meta["agent"] = cfg.agent;
  meta["fs"] = trace.fs;
  write_text_file(out_path(cfg, "spectrogram.json"), meta.dump(2) + "\n");
  return finish(cfg, {{"spectrogram", "spectrogram.csv"},
                      {"mask", "spectrogram_mask.csv"},
                      {"metadata", "spectrogram.json"}});
}

json run_rounds(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.t_end = cfg.t_min;
  if (c.step <= 0.0) c.step = 1.0 / c.fs;  // one RK4 step per output sample
  TopologySchedule schedule = resolve_schedule(c);
  const SimResult res = simulate_config(c, schedule);
  const std::size_t dmax = schedule.max_degree();
  const double step_rate = 1.0 / c.step;
  const std::uint64_t bound = round_bound(dmax, c.t_min, step_rate);
  std::uint64_t worst = 0;
  for (auto m : res.messages.per_agent) worst = std::max(worst, m);
  json report = {{"max_degree", dmax},
                 {"t_min", c.t_min},
                 {"fs", c.fs},
                 {"step", c.step},
                 {"steps", res.messages.rounds / 4},
                 {"bound_per_agent", bound},
                 {"messages", lapspec::to_json(res.messages)},
                 {"max_per_agent", worst},
                 {"within_bound", worst <= bound}};
  write_text_file(out_path(cfg, "rounds.json"), report.dump(2) + "\n");
  json manifest = finish(cfg, {{"rounds", "rounds.json"}}, {{"within_bound", worst <= bound}});
  if (worst > bound)
    throw SimulationError("per-agent message count " + std::to_string(worst) + " exceeds the bound " +
                          std::to_string(bound));
  return manifest;
}

json run_command(const RunConfig& cfg) {
  if (cfg.command == "simulate") return run_simulate(cfg);
  if (cfg.command == "estimate") return run_estimate(cfg);
  if (cfg.command == "validate") return run_validate(cfg);
  if (cfg.command == "spectrogram") return run_spectrogram(cfg);
  if (cfg.command == "rounds") return run_rounds(cfg);
  throw ConfigError("unknown command '" + cfg.command + "'");
}

namespace {

std::string absolute_or_empty(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

void add_topology_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--graph", cfg.graph_file, "Edge-list file");
  sub->add_option("--schedule", cfg.schedule_file, "Topology schedule JSON");
  sub->add_option("--topology", cfg.topology, "Built-in graph: path:N, star:LEAVES, complete:N, cycle:N");
  sub->add_option("--t-end", cfg.t_end, "Simulated time in seconds");
  sub->add_option("--init", cfg.init, "Initial state: random (+-1, seeded) or ones");
  sub->add_option("--threads", cfg.threads, "Worker threads for agent evaluation");
}

void add_estimator_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--agent", cfg.agent, "Observing agent index");
  sub->add_option("--amplitude-floor", cfg.amplitude_floor, "Smallest sinusoid amplitude searched for");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized Laplacian spectrum estimation: simulate, estimate, validate"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  if (const char* env = std::getenv("LAPSPEC_OUT_DIR"); env && *env) cfg.out_dir = env;

  app.add_option("--seed", cfg.seed, "Seed for the random initial state");
  app.add_option("--out-dir", cfg.out_dir, "Output directory (default: $LAPSPEC_OUT_DIR or .)");
  app.add_option("--fs", cfg.fs, "Output sampling rate, samples per second");
  app.add_option("--step", cfg.step, "RK4 step in seconds (default (1/fs)/10)");
  app.add_option("--window", cfg.window, "Estimation window T in seconds");
  app.add_option("--nmax", cfg.nmax, "Upper bound on the number of frequencies");
  app.add_option("--se", cfg.se, "Reconstruction-error threshold in percent");
  app.add_option("--rank-tol", cfg.rank_tol, "Relative singular-value threshold for observability ranks");
  app.add_option("--cluster-tol", cfg.cluster_tol, "Eigenvalues closer than this are one cluster");

  auto* sim = app.add_subcommand("simulate", "Run the message-passing simulation and write the trace");
  add_topology_options(sim, cfg);

  auto* est = app.add_subcommand("estimate", "Estimate one agent's frequencies and eigenvalues from a trace");
  est->add_option("--trace", cfg.trace_file, "Trace CSV written by simulate")->required();
  add_estimator_options(est, cfg);
  est->add_flag("--per-segment", cfg.per_segment, "One estimate per schedule segment");

  auto* val = app.add_subcommand("validate", "Simulate, estimate and compare against the centralized oracle");
  add_topology_options(val, cfg);
  add_estimator_options(val, cfg);

  auto* spg = app.add_subcommand("spectrogram", "Short-time spectrum of one agent's trace");
  spg->add_option("--trace", cfg.trace_file, "Trace CSV written by simulate")->required();
  spg->add_option("--agent", cfg.agent, "Agent index");
  spg->add_option("--stft-window", cfg.stft_window, "STFT window length in seconds");
  spg->add_option("--hop", cfg.hop, "STFT hop in seconds");
  spg->add_option("--threshold", cfg.threshold, "Mask threshold on magnitude");
  spg->add_option("--zero-pad", cfg.zero_pad, "Zero padding factor");

  auto* rnd = app.add_subcommand("rounds", "Count messages over a window and check the round bound");
  add_topology_options(rnd, cfg);
  rnd->add_option("--t-min", cfg.t_min, "Window length in seconds (default 2*pi)");

  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("--manifest", manifest_path, "Manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig run = cfg;
    if (rep->parsed()) {
      json manifest;
      try {
        manifest = json::parse(read_text_file(manifest_path));
      } catch (const json::parse_error& e) {
        throw ConfigError(manifest_path + ": " + e.what());
      }
      if (!manifest.contains("config")) throw ConfigError(manifest_path + ": no config section");
      run = config_from_json(manifest["config"]);
      run.out_dir = cfg.out_dir;
    } else {
      run.command = app.get_subcommands().front()->get_name();
      run.graph_file = absolute_or_empty(run.graph_file);
      run.schedule_file = absolute_or_empty(run.schedule_file);
      run.trace_file = absolute_or_empty(run.trace_file);
    }
    const json manifest = run_command(run);
    std::cout << "wrote " << (fs::path(run.out_dir) / (run.command + ".manifest.json")).string() << "\n";
    if (manifest.contains("summary")) std::cout << manifest["summary"].dump() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lapspec::cli
