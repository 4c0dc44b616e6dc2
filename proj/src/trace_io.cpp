#include "lapspec/trace_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lapspec {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  const std::size_t n = trace.agent_count();
  out << "t";
  for (std::size_t i = 0; i < n; ++i) out << ",x_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",z_" << i;
  out << '\n';
  for (std::size_t k = 0; k < trace.sample_count(); ++k) {
    out << format_double(trace.times[k]);
    for (std::size_t i = 0; i < n; ++i) out << ',' << format_double(trace.x[i][k]);
    for (std::size_t i = 0; i < n; ++i) out << ',' << format_double(trace.z[i][k]);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw IoError("trace line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
  }
}

}  // namespace

Trace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("trace: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "t" || header.size() % 2 == 0)
    throw IoError("trace: header must be t,x_0..x_{n-1},z_0..z_{n-1}");
  const std::size_t n = (header.size() - 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (header[1 + i] != "x_" + std::to_string(i) || header[1 + n + i] != "z_" + std::to_string(i))
      throw IoError("trace: unexpected column names in header");
  }

  Trace trace;
  trace.x.assign(n, {});
  trace.z.assign(n, {});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw IoError("trace line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                    " columns, got " + std::to_string(cells.size()));
    trace.times.push_back(parse_cell(cells[0], line_no));
    for (std::size_t i = 0; i < n; ++i) {
      trace.x[i].push_back(parse_cell(cells[1 + i], line_no));
      trace.z[i].push_back(parse_cell(cells[1 + n + i], line_no));
    }
  }
  if (trace.times.size() < 2) throw IoError("trace: need at least two samples");
  const double span = trace.times.back() - trace.times.front();
  if (!(span > 0.0)) throw IoError("trace: time column is not increasing");
  trace.fs = static_cast<double>(trace.times.size() - 1) / span;
  return trace;
}

json trace_metadata(const Trace& trace) {
  json segs = json::array();
  for (const auto& s : trace.segments) {
    segs.push_back({{"index", s.index},
                    {"t_start", s.t_start},
                    {"t_end", s.t_end},
                    {"first_sample", s.first_sample},
                    {"last_sample", s.last_sample}});
  }
  return {{"fs", trace.fs}, {"n", trace.agent_count()}, {"samples", trace.sample_count()}, {"segments", segs}};
}

void apply_trace_metadata(const json& meta, Trace& trace) {
  try {
    if (meta.at("n").get<std::size_t>() != trace.agent_count() ||
        meta.at("samples").get<std::size_t>() != trace.sample_count())
      throw IoError("trace metadata does not match the CSV (agent or sample count)");
    trace.fs = meta.at("fs").get<double>();
    trace.segments.clear();
    for (const auto& s : meta.at("segments")) {
      TraceSegment seg;
      seg.index = s.at("index").get<std::size_t>();
      seg.t_start = s.at("t_start").get<double>();
      seg.t_end = s.at("t_end").get<double>();
      seg.first_sample = s.at("first_sample").get<std::size_t>();
      seg.last_sample = s.at("last_sample").get<std::size_t>();
      if (seg.last_sample >= trace.sample_count() || seg.first_sample > seg.last_sample)
        throw IoError("trace metadata: segment sample range out of bounds");
      trace.segments.push_back(seg);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("trace metadata: ") + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_trace(const Trace& trace, const std::string& csv_path) {
  std::ostringstream csv;
  write_trace_csv(csv, trace);
  write_text_file(csv_path, csv.str());
  write_text_file(csv_path + ".json", trace_metadata(trace).dump(2) + "\n");
}

Trace load_trace(const std::string& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + csv_path);
  Trace trace = read_trace_csv(in);
  const std::string meta_path = csv_path + ".json";
  if (std::filesystem::exists(meta_path)) {
    json meta;
    try {
      meta = json::parse(read_text_file(meta_path));
    } catch (const json::parse_error& e) {
      throw IoError(meta_path + ": " + e.what());
    }
    apply_trace_metadata(meta, trace);
  } else {
    trace.segments.push_back({0, trace.times.front(), trace.times.back(), 0, trace.sample_count() - 1});
  }
  return trace;
}

json to_json(const MessageCounter& counter) {
  return {{"total", counter.total}, {"per_agent", counter.per_agent}, {"per_sample_rounds", counter.per_sample_rounds}};
}

json to_json(const SpectrumEstimate& est) {
  return {{"n", est.n},
          {"omega", est.omega},
          {"lambda", est.lambda},
          {"amplitude", est.amplitude},
          {"phase", est.phase},
          {"flag", est.flag},
          {"residual_percent", est.residual_percent}};
}

json oracle_report(const EigenDecomposition& dec, const std::vector<ModalCoefficients>& coefficients,
                   const ObservabilityReport& ranks) {
  json coeffs = json::object();
  for (const auto& mc : coefficients) {
    json rows = json::array();
    for (const auto& line : mc.lines) rows.push_back({line.lambda, line.a, line.b});
    coeffs[std::to_string(mc.agent)] = rows;
  }
  return {{"eigenvalues", dec.distinct_values()},
          {"multiplicities", dec.multiplicities()},
          {"coefficients", coeffs},
          {"ranks", {{"L", ranks.rank_L}, {"A", ranks.rank_A}}}};
}

void write_spectrogram_csv(std::ostream& out, const SpectrogramData& spec) {
  out << "t";
  for (double w : spec.omega) out << ',' << format_double(w);
  out << '\n';
  for (std::size_t s = 0; s < spec.times.size(); ++s) {
    out << format_double(spec.times[s]);
    for (double m : spec.magnitude[s]) out << ',' << format_double(m);
    out << '\n';
  }
}

void write_spectrogram_mask_csv(std::ostream& out, const SpectrogramData& spec) {
  out << "t";
  for (double w : spec.omega) out << ',' << format_double(w);
  out << '\n';
  for (std::size_t s = 0; s < spec.times.size(); ++s) {
    out << format_double(spec.times[s]);
    for (std::size_t b = 0; b < spec.omega.size(); ++b) out << ',' << (spec.above(s, b) ? 1 : 0);
    out << '\n';
  }
}

json spectrogram_metadata(const SpectrogramData& spec) {
  return {{"window_len", spec.window_len},
          {"hop", spec.hop},
          {"threshold", spec.threshold},
          {"slices", spec.times.size()},
          {"bins", spec.omega.size()}};
}

}  // namespace lapspec
