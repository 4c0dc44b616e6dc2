#include "lapspec/freq_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

namespace lapspec {

namespace {

std::vector<double> window_weights(std::size_t n, Window w) {
  std::vector<double> out(n, 1.0);
  if (w == Window::Hann && n > 1)
    for (std::size_t k = 0; k < n; ++k)
      out[k] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n - 1));
  return out;
}

// Magnitudes of bins 0..nfft/2 of the windowed, zero-padded samples.
std::vector<double> one_sided_magnitude(std::span<const double> samples, const std::vector<double>& weights,
                                        std::size_t nfft) {
  std::vector<double> buf(nfft, 0.0);
  double gain = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    buf[k] = samples[k] * weights[k];
    gain += weights[k];
  }
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, buf);

  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    const bool edge = k == 0 || (nfft % 2 == 0 && k == nfft / 2);
    mag[k] = (edge ? 1.0 : 2.0) * std::abs(spec[k]) / gain;
  }
  return mag;
}

std::vector<double> omega_grid(std::size_t bins, std::size_t nfft, double fs) {
  std::vector<double> omega(bins);
  for (std::size_t k = 0; k < bins; ++k) omega[k] = 2.0 * kPi * fs * static_cast<double>(k) / static_cast<double>(nfft);
  return omega;
}

// Sum of sinusoids with frequencies `w` and cos/sin coefficients packed as
// [c_0, s_0, c_1, s_1, ...].
struct SinusoidModel {
  std::vector<double> w;
  std::vector<double> coef;

  std::size_t size() const { return w.size(); }
  double amplitude(std::size_t k) const { return std::hypot(coef[2 * k], coef[2 * k + 1]); }
};

Eigen::MatrixXd design(const Eigen::VectorXd& t, const std::vector<double>& w) {
  Eigen::MatrixXd D(t.size(), 2 * static_cast<Eigen::Index>(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto col = 2 * static_cast<Eigen::Index>(k);
    D.col(col) = (w[k] * t).array().cos();
    D.col(col + 1) = (w[k] * t).array().sin();
  }
  return D;
}

// Linear least squares for the coefficients at fixed frequencies.
std::vector<double> solve_coefficients(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const std::vector<double>& w) {
  const Eigen::MatrixXd D = design(t, w);
  const Eigen::VectorXd c = D.colPivHouseholderQr().solve(y);
  return {c.data(), c.data() + c.size()};
}

Eigen::VectorXd evaluate(const Eigen::VectorXd& t, const SinusoidModel& m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(t.size());
  for (std::size_t k = 0; k < m.size(); ++k)
    out += m.coef[2 * k] * (m.w[k] * t).array().cos().matrix() + m.coef[2 * k + 1] * (m.w[k] * t).array().sin().matrix();
  return out;
}

// Levenberg-Marquardt on all frequencies and coefficients jointly. t should be
// centred on the window for conditioning of the frequency derivatives.
SinusoidModel refine(const Eigen::VectorXd& t, const Eigen::VectorXd& y, std::vector<double> w, double omega_max) {
  SinusoidModel m{w, solve_coefficients(t, y, w)};
  const std::size_t K = m.size();
  const auto P = static_cast<Eigen::Index>(3 * K);

  Eigen::VectorXd r = y - evaluate(t, m);
  double cost = r.squaredNorm();
  double mu = 1e-3;

  for (int iter = 0; iter < 200; ++iter) {
    Eigen::MatrixXd J(t.size(), P);
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::ArrayXd c = (m.w[k] * t).array().cos();
      const Eigen::ArrayXd s = (m.w[k] * t).array().sin();
      const auto col = 2 * static_cast<Eigen::Index>(k);
      J.col(col) = c.matrix();
      J.col(col + 1) = s.matrix();
      J.col(static_cast<Eigen::Index>(2 * K + k)) =
          (t.array() * (-m.coef[2 * k] * s + m.coef[2 * k + 1] * c)).matrix();
    }
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;

    bool accepted = false;
    while (!accepted && mu < 1e12) {
      Eigen::MatrixXd Hd = H;
      Hd.diagonal() += mu * H.diagonal().cwiseMax(1e-12 * H.diagonal().maxCoeff());
      const Eigen::VectorXd delta = Hd.ldlt().solve(g);

      SinusoidModel trial = m;
      bool in_band = true;
      for (std::size_t k = 0; k < K; ++k) {
        trial.coef[2 * k] += delta(2 * static_cast<Eigen::Index>(k));
        trial.coef[2 * k + 1] += delta(2 * static_cast<Eigen::Index>(k) + 1);
        trial.w[k] += delta(static_cast<Eigen::Index>(2 * K + k));
        in_band = in_band && trial.w[k] > 0.0 && trial.w[k] < omega_max;
      }
      const Eigen::VectorXd trial_r = y - evaluate(t, trial);
      const double trial_cost = trial_r.squaredNorm();
      if (in_band && std::isfinite(trial_cost) && trial_cost <= cost) {
        double step = 0.0;
        for (std::size_t k = 0; k < K; ++k) step = std::max(step, std::abs(trial.w[k] - m.w[k]));
        const double improvement = cost - trial_cost;
        m = std::move(trial);
        r = trial_r;
        cost = trial_cost;
        mu = std::max(mu * 0.3, 1e-12);
        accepted = true;
        if (step < 1e-13 || improvement <= 1e-15 * cost) return m;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) break;
  }
  return m;
}

}  // namespace

SampledSignal SampledSignal::slice(std::size_t first, std::size_t count) const {
  if (first + count > samples.size()) throw std::out_of_range("signal slice exceeds signal length");
  SampledSignal out;
  out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(first),
                     samples.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.fs = fs;
  out.agent = agent;
  out.t0 = time(first);
  return out;
}

SampledSignal agent_signal(const Trace& trace, std::size_t agent) {
  if (agent >= trace.agent_count())
    throw std::out_of_range("agent " + std::to_string(agent) + " out of range [0," +
                            std::to_string(trace.agent_count()) + ")");
  SampledSignal sig;
  sig.samples = trace.x[agent];
  sig.fs = trace.fs;
  sig.agent = agent;
  sig.t0 = trace.times.empty() ? 0.0 : trace.times.front();
  return sig;
}

Spectrum dft_magnitude(const SampledSignal& sig, std::size_t zero_pad_factor, Window window) {
  const std::size_t n = sig.samples.size();
  if (n < 2) throw std::invalid_argument("dft_magnitude: signal needs at least 2 samples");
  const std::size_t nfft = n * std::max<std::size_t>(1, zero_pad_factor);
  Spectrum spec;
  spec.magnitude = one_sided_magnitude(sig.samples, window_weights(n, window), nfft);
  spec.omega = omega_grid(spec.magnitude.size(), nfft, sig.fs);
  spec.resolution = 2.0 * kPi * sig.fs / static_cast<double>(n);
  spec.grid_step = 2.0 * kPi * sig.fs / static_cast<double>(nfft);
  return spec;
}

SpectrogramData spectrogram(const SampledSignal& sig, std::size_t window_len, std::size_t hop,
                            std::size_t zero_pad_factor, double threshold) {
  if (window_len < 2) throw std::invalid_argument("spectrogram window must span at least 2 samples");
  if (window_len > sig.samples.size())
    throw std::invalid_argument("spectrogram window of " + std::to_string(window_len) +
                                " samples exceeds signal length " + std::to_string(sig.samples.size()));
  if (hop == 0) throw std::invalid_argument("spectrogram hop must be positive");

  const std::size_t nfft = window_len * std::max<std::size_t>(1, zero_pad_factor);
  const auto weights = window_weights(window_len, Window::Hann);
  SpectrogramData out;
  out.window_len = window_len;
  out.hop = hop;
  out.threshold = threshold;
  for (std::size_t start = 0; start + window_len <= sig.samples.size(); start += hop) {
    std::span<const double> frame(sig.samples.data() + start, window_len);
    out.magnitude.push_back(one_sided_magnitude(frame, weights, nfft));
    out.times.push_back(sig.t0 + (static_cast<double>(start) + 0.5 * static_cast<double>(window_len - 1)) / sig.fs);
  }
  out.omega = omega_grid(out.magnitude.front().size(), nfft, sig.fs);
  return out;
}

std::vector<Peak> detect_peaks(const Spectrum& spec, double amplitude_threshold, double min_separation) {
  const auto& m = spec.magnitude;
  const std::size_t n = m.size();
  if (min_separation <= 0.0) min_separation = 2.0 * spec.resolution;
  const double tiny = std::numeric_limits<double>::min();

  std::vector<Peak> candidates;
  for (std::size_t k = 0; k < n; ++k) {
    if (m[k] < amplitude_threshold || m[k] <= 0.0) continue;
    const bool left_ok = k == 0 || m[k] > m[k - 1];
    const bool right_ok = k + 1 == n || m[k] >= m[k + 1];
    if (!left_ok || !right_ok) continue;
    Peak p{spec.omega[k], m[k]};
    if (k > 0 && k + 1 < n) {
      const double a = std::log(std::max(m[k - 1], tiny));
      const double b = std::log(std::max(m[k], tiny));
      const double c = std::log(std::max(m[k + 1], tiny));
      const double denom = a - 2.0 * b + c;
      if (denom < 0.0) {
        const double offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
        p.omega += offset * spec.grid_step;
        p.amplitude = std::exp(b - 0.25 * (a - c) * offset);
      }
    }
    candidates.push_back(p);
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Peak& x, const Peak& y) {
    return x.amplitude != y.amplitude ? x.amplitude > y.amplitude : x.omega < y.omega;
  });
  std::vector<Peak> kept;
  for (const auto& p : candidates) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const Peak& q) {
      return std::abs(q.omega - p.omega) < min_separation;
    });
    if (!clash) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& x, const Peak& y) { return x.omega < y.omega; });
  return kept;
}

LsFit ls_fit(const SampledSignal& sig, const std::vector<double>& omegas, bool with_offset) {
  if (omegas.empty()) throw std::invalid_argument("ls_fit: frequency list is empty");
  const double nyquist = kPi * sig.fs;
  for (double w : omegas)
    if (!(w > 0.0) || !(w < nyquist))
      throw std::invalid_argument("ls_fit: frequency " + std::to_string(w) + " rad/s outside (0, pi*fs)");

  std::vector<double> sorted = omegas;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < sorted.size(); ++k)
    if (sorted[k] - sorted[k - 1] <= 1e-9 * std::max(1.0, sorted[k])) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "ls_fit: frequencies " << sorted[k - 1] << " and " << sorted[k]
          << " rad/s are duplicates; design matrix is singular";
      throw IllConditionedFit(msg.str(), sorted[k - 1], sorted[k]);
    }

  const auto n = static_cast<Eigen::Index>(sig.samples.size());
  Eigen::VectorXd t(n);
  for (Eigen::Index k = 0; k < n; ++k) t(k) = sig.time(static_cast<std::size_t>(k));
  const Eigen::Map<const Eigen::VectorXd> y(sig.samples.data(), n);

  Eigen::MatrixXd D = design(t, omegas);
  if (with_offset) {
    D.conservativeResize(Eigen::NoChange, D.cols() + 1);
    D.col(D.cols() - 1).setOnes();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  const auto R = qr.matrixR().diagonal().cwiseAbs();
  if (R.minCoeff() < 1e-10 * R.maxCoeff()) {
    std::size_t best = 1;
    for (std::size_t k = 2; k < sorted.size(); ++k)
      if (sorted[k] - sorted[k - 1] < sorted[best] - sorted[best - 1]) best = k;
    const double wa = sorted.size() > 1 ? sorted[best - 1] : sorted[0];
    const double wb = sorted.size() > 1 ? sorted[best] : sorted[0];
    std::ostringstream msg;
    msg.precision(12);
    msg << "ls_fit: design matrix is ill-conditioned; closest pair " << wa << " and " << wb
        << " rad/s cannot be separated over this window";
    throw IllConditionedFit(msg.str(), wa, wb);
  }
  const Eigen::VectorXd coef = qr.solve(y);
  const Eigen::VectorXd resid = y - D * coef;

  LsFit fit;
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    const double c = coef(2 * static_cast<Eigen::Index>(k));
    const double s = coef(2 * static_cast<Eigen::Index>(k) + 1);
    fit.cos_coeffs.push_back(c);
    fit.sin_coeffs.push_back(s);
    fit.amplitudes.push_back(std::hypot(c, s));
    fit.phases.push_back(std::atan2(c, s));
  }
  if (with_offset) fit.offset = coef(coef.size() - 1);
  const double ynorm = y.norm();
  fit.residual_percent = ynorm > 0.0 ? 100.0 * resid.norm() / ynorm : 0.0;
  return fit;
}

void FreqEstimatorConfig::validate() const {
  if (!(Ts > 0.0)) throw ConfigError("estimator: sampling time Ts must be positive");
  if (n_max < 1) throw ConfigError("estimator: nMax must be at least 1");
  if (!(se_percent > 0.0)) throw ConfigError("estimator: Se must be positive");
  if (window < 2.0 * kPi - 1e-9)
    throw ConfigError("estimator: window T = " + std::to_string(window) +
                      " s is shorter than the slowest period 2*pi s");
  if (!(amplitude_floor > 0.0)) throw ConfigError("estimator: amplitude floor must be positive");
}

std::size_t FreqEstimatorConfig::window_samples() const {
  const double v = window / Ts;
  return static_cast<std::size_t>(std::floor(v + 1e-9 * std::max(1.0, v))) + 1;
}

SpectrumEstimate estimate_frequencies(const SampledSignal& sig, const FreqEstimatorConfig& cfg) {
  cfg.validate();
  if (std::abs(cfg.Ts * sig.fs - 1.0) > 1e-6)
    throw ConfigError("estimator: Ts = " + std::to_string(cfg.Ts) + " s does not match the signal rate 1/fs = " +
                      std::to_string(1.0 / sig.fs) + " s");
  const std::size_t len = cfg.window_samples();
  if (len > sig.samples.size())
    throw ConfigError("estimator: window of " + std::to_string(len) + " samples exceeds signal length " +
                      std::to_string(sig.samples.size()));

  const SampledSignal win = sig.slice(0, len);
  const auto N = static_cast<Eigen::Index>(len);
  const double t_mid = 0.5 * static_cast<double>(len - 1) / sig.fs;
  Eigen::VectorXd tau(N);
  for (Eigen::Index k = 0; k < N; ++k) tau(k) = static_cast<double>(k) / sig.fs - t_mid;
  const Eigen::Map<const Eigen::VectorXd> y(win.samples.data(), N);
  const double omega_max = kPi * sig.fs;
  const double resolution = 2.0 * kPi * sig.fs / static_cast<double>(len);

  SinusoidModel model;
  SampledSignal residual = win;
  const std::size_t max_attempts = 2 * cfg.n_max + 4;
  for (std::size_t attempt = 0; attempt < max_attempts && model.size() < cfg.n_max; ++attempt) {
    const auto peaks = detect_peaks(dft_magnitude(residual, cfg.zero_pad), cfg.amplitude_floor, cfg.min_separation);
    if (peaks.empty()) break;
    const Peak strongest = *std::min_element(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
      return a.amplitude != b.amplitude ? a.amplitude > b.amplitude : a.omega < b.omega;
    });

    std::vector<double> w = model.w;
    double candidate = strongest.omega;
    // A residual peak on top of an existing component means two unresolved
    // sinusoids; start the pair a quarter bin either side.
    for (auto& existing : w) {
      if (std::abs(candidate - existing) < 0.5 * resolution) {
        const double dir = candidate >= existing ? 1.0 : -1.0;
        const double centre = existing;
        existing = centre - 0.25 * resolution * dir;
        candidate = centre + 0.25 * resolution * dir;
        break;
      }
    }
    w.push_back(std::clamp(candidate, 1e-6, omega_max * (1.0 - 1e-9)));
    SinusoidModel trial = refine(tau, y, w, omega_max);

    // Prune components that collapsed onto a neighbour or faded below the floor.
    std::vector<std::size_t> order(trial.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return trial.amplitude(a) > trial.amplitude(b); });
    std::vector<double> kept;
    for (std::size_t k : order) {
      if (trial.amplitude(k) < 0.5 * cfg.amplitude_floor) continue;
      const bool clash = std::any_of(kept.begin(), kept.end(), [&](double v) {
        return std::abs(v - trial.w[k]) < 1e-3 * resolution;
      });
      if (!clash) kept.push_back(trial.w[k]);
    }
    if (kept.size() <= model.size()) break;  // no progress
    if (kept.size() != trial.size()) trial = refine(tau, y, kept, omega_max);
    model = std::move(trial);

    const Eigen::VectorXd r = y - evaluate(tau, model);
    residual.samples.assign(r.data(), r.data() + r.size());
  }

  SpectrumEstimate est;
  if (model.size() == 0) {
    est.flag = false;
    est.residual_percent = 100.0;
    return est;
  }

  std::vector<double> omegas = model.w;
  std::sort(omegas.begin(), omegas.end());
  const LsFit fit = ls_fit(win, omegas);
  est.residual_percent = fit.residual_percent;
  est.flag = fit.residual_percent <= cfg.se_percent;
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (omegas[k] < 1.0 - cfg.lambda_tol) {
      est.spurious_omega.push_back(omegas[k]);
      continue;
    }
    est.omega.push_back(omegas[k]);
    est.amplitude.push_back(fit.amplitudes[k]);
    est.phase.push_back(fit.phases[k]);
  }
  est.lambda = freqs_to_eigenvalues(est.omega, cfg.lambda_tol);
  est.n = est.omega.size();
  return est;
}

std::vector<double> freqs_to_eigenvalues(const std::vector<double>& omegas, double tol) {
  std::vector<double> out;
  out.reserve(omegas.size());
  for (double w : omegas) {
    double lambda = w - 1.0;
    if (lambda < -tol) {
      std::ostringstream msg;
      msg << "spurious peak at omega = " << w << " rad/s: every mode oscillates at omega >= 1";
      throw SpuriousPeak(msg.str(), w);
    }
    out.push_back(std::max(lambda, 0.0));
  }
  return out;
}

}  // namespace lapspec
