#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "movebeam/autodiff.hpp"
#include "movebeam/convert.hpp"
#include "movebeam/linalg.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/weights.hpp"

namespace movebeam {

// Time-varying beamforming filters w_{t,f} with a one-hot reference select.
struct BeamformerFilters {
  long T = 0, F = 0, C = 0;
  int reference_channel = 0;
  std::vector<std::complex<double>> w;  // [T][F][C]
  long zero_filter_bins = 0;            // degenerate-trace fallbacks

  std::complex<double>& at(long t, long f, long c) { return w[(size_t)((t * F + f) * C + c)]; }
  std::complex<double> at(long t, long f, long c) const { return w[(size_t)((t * F + f) * C + c)]; }

  static BeamformerFilters zeros(long T, long F, long C, int ref) {
    BeamformerFilters b;
    b.T = T;
    b.F = F;
    b.C = C;
    b.reference_channel = ref;
    b.w.assign((size_t)(T * F * C), {0.0, 0.0});
    return b;
  }
};

constexpr double kMvdrTraceFloor = 1e-12;

// w = (Phi_N^-1 Phi_S / Tr(Phi_N^-1 Phi_S)) u with diagonal loading
// eps * (Tr Phi_N / C) * I applied before the inverse. Bins whose trace
// magnitude falls below the floor emit zero filters.
inline BeamformerFilters mvdr_filters(const SCMSequence& scm_s, const SCMSequence& scm_n,
                                      int ref_channel, double eps = 1e-6) {
  if (scm_s.T != scm_n.T || scm_s.F != scm_n.F || scm_s.C != scm_n.C)
    throw std::invalid_argument("mvdr_filters: SCM shapes differ");
  const long T = scm_s.T, F = scm_s.F, C = scm_s.C;
  if (ref_channel < 0 || ref_channel >= C)
    throw std::invalid_argument("mvdr_filters: reference channel out of range");
  BeamformerFilters out = BeamformerFilters::zeros(T, F, C, ref_channel);
  std::vector<std::complex<double>> a((size_t)(C * C)), num((size_t)(C * C));
  for (long t = 0; t < T; ++t) {
    for (long f = 0; f < F; ++f) {
      double tr_n = 0;
      for (long i = 0; i < C; ++i) tr_n += scm_n.at(t, f, i, i).real();
      double load = eps * tr_n / (double)C;
      for (long i = 0; i < C; ++i)
        for (long j = 0; j < C; ++j)
          a[(size_t)(i * C + j)] = scm_n.at(t, f, i, j) + (i == j ? load : 0.0);
      invert_complex(a.data(), C);
      for (long i = 0; i < C; ++i)
        for (long j = 0; j < C; ++j) {
          std::complex<double> s(0, 0);
          for (long k = 0; k < C; ++k) s += a[(size_t)(i * C + k)] * scm_s.at(t, f, k, j);
          num[(size_t)(i * C + j)] = s;
        }
      std::complex<double> tau(0, 0);
      for (long i = 0; i < C; ++i) tau += num[(size_t)(i * C + i)];
      if (std::abs(tau) < kMvdrTraceFloor) {
        ++out.zero_filter_bins;
        continue;
      }
      for (long i = 0; i < C; ++i) out.at(t, f, i) = num[(size_t)(i * C + ref_channel)] / tau;
    }
  }
  return out;
}

// S_hat_{t,f} = w_{t,f}^H Y_{t,f}
inline Spectrogram apply_filters(const BeamformerFilters& filters, const Spectrogram& obs) {
  if (filters.T != obs.T || filters.F != obs.F || filters.C != obs.C)
    throw std::invalid_argument("apply_filters: filter shape does not match spectrogram");
  Spectrogram out = Spectrogram::zeros(obs.T, obs.F, 1, obs.frame_len_samples, obs.hop_samples,
                                       obs.sample_rate);
  for (long t = 0; t < obs.T; ++t)
    for (long f = 0; f < obs.F; ++f) {
      std::complex<double> s(0, 0);
      for (long c = 0; c < obs.C; ++c) s += std::conj(filters.at(t, f, c)) * obs.at(t, f, c);
      out.at(t, f, 0) = s;
    }
  return out;
}

// Full inference chain: filters, filtering, inverse STFT.
inline MultichannelWaveform enhance(const Spectrogram& obs, const SCMSequence& scm_s,
                                    const SCMSequence& scm_n, int ref_channel,
                                    const StftConfig& cfg, long out_len, double eps = 1e-6) {
  BeamformerFilters filters = mvdr_filters(scm_s, scm_n, ref_channel, eps);
  Spectrogram enhanced = apply_filters(filters, obs);
  return istft(enhanced, cfg, out_len);
}

// ---- differentiable path ----

// Graph version of mvdr_filters on [T, F, C, C, 2] SCM nodes; returns
// filters as [T, F, C, 2].
inline ad::Node* mvdr_filters_graph(ad::Graph& g, ad::Node* scm_s, ad::Node* scm_n,
                                    int ref_channel, double eps = 1e-6,
                                    long* degenerate_bins = nullptr) {
  const Shape& s = scm_s->value.shape();
  if (s.size() != 5 || s[4] != 2 || s[2] != s[3])
    throw std::invalid_argument("mvdr_filters_graph: expected [T, F, C, C, 2]");
  const long T = s[0], F = s[1], C = s[2];
  ad::Node* loaded = ad::diag_load(g, scm_n, eps);
  ad::Node* inv_n = ad::cinverse(g, loaded);
  ad::Node* num = ad::cmatmul(g, inv_n, scm_s);  // [T,F,C,C,2]
  ad::Node* tau = ad::ctrace(g, num);            // [T,F,2]
  Tensor u({C, 1, 2});
  u[2 * ref_channel] = 1.0;
  ad::Node* ucol = g.constant(std::move(u));
  ad::Node* numcol = ad::reshape(g, ad::cmatmul(g, num, ucol), {T, F, C, 2});
  return ad::cdiv_scalar(g, numcol, tau, kMvdrTraceFloor, degenerate_bins);
}

// w^H Y per bin: [T, F, C, 2] filters against a [T, F, C, 2] observation.
inline ad::Node* apply_filters_graph(ad::Graph& g, ad::Node* filters, ad::Node* obs) {
  check_same_shape(filters->value, obs->value, "apply_filters_graph");
  return ad::sum_axis(g, ad::cmul(g, ad::conj_op(g, filters), obs), 2);
}

}  // namespace movebeam
