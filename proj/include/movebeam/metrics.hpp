#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace movebeam {

constexpr double kMetricCapDb = 120.0;

// 10 log10(||s||^2 / ||s - s_hat||^2), capped at +/-120 dB.
inline double metric_snr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("metric_snr: length mismatch");
  double ps = 0, pe = 0;
  for (size_t i = 0; i < reference.size(); ++i) {
    ps += reference[i] * reference[i];
    double d = estimate[i] - reference[i];
    pe += d * d;
  }
  if (ps <= 0) throw std::invalid_argument("metric_snr: zero reference");
  if (pe <= ps * 1e-12) return kMetricCapDb;
  double v = 10.0 * std::log10(ps / pe);
  return std::max(-kMetricCapDb, std::min(kMetricCapDb, v));
}

// SDR permitting a time-invariant FIR distortion: least-squares fit of a
// length-taps filter g mapping reference to estimate, then
// 10 log10(||g*s||^2 / ||s_hat - g*s||^2). Normal equations get a small
// ridge relative to the mean diagonal.
inline double metric_sdr_fir(const std::vector<double>& estimate,
                             const std::vector<double>& reference, long taps = 512,
                             double ridge_rel = 1e-10) {
  if (taps < 1) throw std::invalid_argument("metric_sdr_fir: taps must be >= 1");
  const long n = (long)reference.size();
  if ((long)estimate.size() != n) throw std::invalid_argument("metric_sdr_fir: length mismatch");
  if (n <= taps) throw std::invalid_argument("metric_sdr_fir: signals shorter than filter");

  // Toeplitz autocorrelation R and cross-correlation r over full support.
  std::vector<double> autoc((size_t)taps, 0.0), cross((size_t)taps, 0.0);
  for (long lag = 0; lag < taps; ++lag) {
    double a = 0;
    for (long i = lag; i < n; ++i) a += reference[(size_t)i] * reference[(size_t)(i - lag)];
    autoc[(size_t)lag] = a;
    double c = 0;
    for (long i = lag; i < n; ++i) c += estimate[(size_t)i] * reference[(size_t)(i - lag)];
    cross[(size_t)lag] = c;
  }
  if (autoc[0] <= 0) throw std::invalid_argument("metric_sdr_fir: zero reference");

  Eigen::MatrixXd R(taps, taps);
  for (long i = 0; i < taps; ++i)
    for (long j = 0; j < taps; ++j) R(i, j) = autoc[(size_t)std::labs(i - j)];
  double ridge = ridge_rel * autoc[0];
  for (long i = 0; i < taps; ++i) R(i, i) += ridge;
  Eigen::VectorXd r(taps);
  for (long i = 0; i < taps; ++i) r(i) = cross[(size_t)i];
  Eigen::VectorXd g = R.ldlt().solve(r);

  double p_fit = 0, p_err = 0;
  for (long i = 0; i < n; ++i) {
    double y = 0;
    long kmax = std::min(taps, i + 1);
    for (long k = 0; k < kmax; ++k) y += g(k) * reference[(size_t)(i - k)];
    p_fit += y * y;
    double d = estimate[(size_t)i] - y;
    p_err += d * d;
  }
  if (p_err <= p_fit * 1e-12) return kMetricCapDb;
  if (p_fit <= 0) return -kMetricCapDb;
  double v = 10.0 * std::log10(p_fit / p_err);
  return std::max(-kMetricCapDb, std::min(kMetricCapDb, v));
}

}  // namespace movebeam
