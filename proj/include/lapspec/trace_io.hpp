#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lapspec/dynamics.hpp"
#include "lapspec/freq_estimation.hpp"
#include "lapspec/oracle.hpp"

namespace lapspec {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Doubles as text with 17 significant digits; parses back to the same value.
std::string format_double(double v);

// Header "t,x_0,...,x_{n-1},z_0,...,z_{n-1}", one row per sample.
void write_trace_csv(std::ostream& out, const Trace& trace);
// Reads the CSV written above. fs is taken from the time column; segments are
// left empty (see trace metadata below).
Trace read_trace_csv(std::istream& in);

// fs, agent count, sample count and schedule segments of a trace.
nlohmann::json trace_metadata(const Trace& trace);
void apply_trace_metadata(const nlohmann::json& meta, Trace& trace);

// Trace CSV at csv_path plus its metadata at csv_path + ".json".
void save_trace(const Trace& trace, const std::string& csv_path);
// Metadata is used when present; otherwise the trace is one segment.
Trace load_trace(const std::string& csv_path);

nlohmann::json to_json(const MessageCounter& counter);
nlohmann::json to_json(const SpectrumEstimate& est);

// {"eigenvalues", "multiplicities", "coefficients": {"<agent>": [[lambda, a, b], ...]},
// "ranks": {"L", "A"}}; ranks are those of one agent's output matrix.
nlohmann::json oracle_report(const EigenDecomposition& dec, const std::vector<ModalCoefficients>& coefficients,
                             const ObservabilityReport& ranks);

// Spectrogram magnitudes as CSV: header "t,<omega_0>,...", one row per slice.
// The mask variant writes 1 where the magnitude exceeds the display threshold.
void write_spectrogram_csv(std::ostream& out, const SpectrogramData& spec);
void write_spectrogram_mask_csv(std::ostream& out, const SpectrogramData& spec);
nlohmann::json spectrogram_metadata(const SpectrogramData& spec);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace lapspec
