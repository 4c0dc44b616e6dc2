#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapspec/dynamics.hpp"

namespace lapspec {

// One agent's uniformly sampled signal. t0 is the time of samples[0].
struct SampledSignal {
  std::vector<double> samples;
  double fs = kDefaultSampleRate;
  std::size_t agent = 0;
  double t0 = 0.0;

  double Ts() const { return 1.0 / fs; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) / fs; }
  // Samples [first, first + count).
  SampledSignal slice(std::size_t first, std::size_t count) const;
};

// x_i of agent i over the whole trace.
SampledSignal agent_signal(const Trace& trace, std::size_t agent);

enum class Window { Rectangular, Hann };

// One-sided magnitude spectrum on an angular frequency grid [0, pi*fs].
struct Spectrum {
  std::vector<double> omega;      // rad/s
  std::vector<double> magnitude;  // sinusoid amplitude units
  double resolution = 0.0;        // 2*pi*fs / signal length; one unpadded DFT bin
  double grid_step = 0.0;         // spacing of omega after zero padding
};

// |DFT| of the windowed signal zero padded to length * zero_pad_factor,
// scaled so a unit sinusoid on a bin centre reads 1 (DC reads its mean).
Spectrum dft_magnitude(const SampledSignal& sig, std::size_t zero_pad_factor = 1, Window window = Window::Rectangular);

struct SpectrogramData {
  std::size_t window_len = 0;  // samples
  std::size_t hop = 0;         // samples
  std::vector<double> times;   // window centres, seconds
  std::vector<double> omega;   // rad/s
  std::vector<std::vector<double>> magnitude;  // [slice][bin]
  double threshold = 0.1;

  bool above(std::size_t slice, std::size_t bin) const { return magnitude[slice][bin] > threshold; }
};

// Hann-windowed STFT. Throws std::invalid_argument if the window exceeds the
// signal, is shorter than 2 samples, or hop is zero.
SpectrogramData spectrogram(const SampledSignal& sig, std::size_t window_len, std::size_t hop,
                            std::size_t zero_pad_factor = 4, double threshold = 0.1);

struct Peak {
  double omega = 0.0;
  double amplitude = 0.0;
};

// Local maxima at or above amplitude_threshold, refined by a parabola through
// the log magnitudes of the three bins around each maximum. Peaks closer than
// min_separation keep the larger (ties go to the lower frequency). A
// non-positive min_separation means two unpadded bins. Sorted by omega.
std::vector<Peak> detect_peaks(const Spectrum& spec, double amplitude_threshold, double min_separation = 0.0);

// Thrown when two requested frequencies make the least-squares design singular.
class IllConditionedFit : public std::runtime_error {
 public:
  IllConditionedFit(const std::string& what, double omega_a, double omega_b)
      : std::runtime_error(what), omega_a(omega_a), omega_b(omega_b) {}
  double omega_a;
  double omega_b;
};

// y(t) ~ sum_k A_k sin(omega_k t + phi_k) [+ offset], t in absolute seconds.
struct LsFit {
  std::vector<double> amplitudes;
  std::vector<double> phases;
  std::vector<double> cos_coeffs;  // A_k sin(phi_k)
  std::vector<double> sin_coeffs;  // A_k cos(phi_k)
  double offset = 0.0;
  double residual_percent = 0.0;  // 100 * ||y - yhat|| / ||y||
};

LsFit ls_fit(const SampledSignal& sig, const std::vector<double>& omegas, bool with_offset = false);

struct FreqEstimatorConfig {
  double Ts = 1.0 / kDefaultSampleRate;  // seconds; must match the signal
  std::size_t n_max = 8;
  double se_percent = 1.0;   // reconstruction-error threshold for the flag
  double window = 50.0;      // seconds; at least 2*pi
  double amplitude_floor = 1e-3;  // smallest sinusoid amplitude searched for
  double min_separation = 0.0;    // rad/s; 0 means two unpadded bins
  std::size_t zero_pad = 4;
  double lambda_tol = 1e-2;  // slack below omega = 1 before a peak counts as spurious

  // Throws ConfigError.
  void validate() const;
  // Samples consumed by one window: floor(window / Ts) + 1.
  std::size_t window_samples() const;
};

struct SpectrumEstimate {
  std::size_t n = 0;
  std::vector<double> omega;  // ascending, rad/s
  std::vector<double> lambda;
  std::vector<double> amplitude;
  std::vector<double> phase;
  bool flag = false;  // residual_percent <= Se
  double residual_percent = 100.0;
  std::vector<double> spurious_omega;  // fitted components below omega = 1 - lambda_tol, dropped
};

// Frequency content of the first cfg.window seconds of sig. Sinusoids are
// extracted greedily from the residual spectrum and all frequencies are
// re-fitted jointly by damped Gauss-Newton after each addition, until nMax
// components are in the model or no residual peak reaches amplitude_floor.
SpectrumEstimate estimate_frequencies(const SampledSignal& sig, const FreqEstimatorConfig& cfg);

class SpuriousPeak : public std::runtime_error {
 public:
  SpuriousPeak(const std::string& what, double omega) : std::runtime_error(what), omega(omega) {}
  double omega;
};

// lambda = omega - 1; values in [-tol, 0) clamp to 0, anything lower throws
// SpuriousPeak since no mode oscillates below 1 rad/s.
std::vector<double> freqs_to_eigenvalues(const std::vector<double>& omegas, double tol = 1e-2);

}  // namespace lapspec
