#pragma once

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/container.hpp"
#include "movebeam/signal.hpp"

namespace movebeam {

// Per-source time-frequency mask, values in [0, 1].
struct TimeFrequencyMask {
  long T = 0, F = 0;
  std::vector<double> v;  // row-major [T][F]

  double& at(long t, long f) { return v[(size_t)(t * F + f)]; }
  double at(long t, long f) const { return v[(size_t)(t * F + f)]; }

  static TimeFrequencyMask zeros(long T, long F) {
    TimeFrequencyMask m;
    m.T = T;
    m.F = F;
    m.v.assign((size_t)(T * F), 0.0);
    return m;
  }

  double frame_sum(long t) const {
    double s = 0;
    for (long f = 0; f < F; ++f) s += at(t, f);
    return s;
  }
};

struct MaskPair {
  TimeFrequencyMask speech;
  TimeFrequencyMask noise;
};

// Wiener-like oracle masks from the clean and noise components at the
// reference channel: m_S = |S|^2 / (|S|^2 + |N|^2), m_N = 1 - m_S.
// 0/0 resolves to m_S = 0.
inline MaskPair wiener_like_mask(const Spectrogram& clean, const Spectrogram& noise, long ref_channel) {
  if (clean.T != noise.T || clean.F != noise.F || clean.C != noise.C)
    throw std::invalid_argument("wiener_like_mask: shape mismatch");
  if (ref_channel < 0 || ref_channel >= clean.C)
    throw std::invalid_argument("wiener_like_mask: reference channel out of range");
  MaskPair out;
  out.speech = TimeFrequencyMask::zeros(clean.T, clean.F);
  out.noise = TimeFrequencyMask::zeros(clean.T, clean.F);
  for (long t = 0; t < clean.T; ++t) {
    for (long f = 0; f < clean.F; ++f) {
      double ps = std::norm(clean.at(t, f, ref_channel));
      double pn = std::norm(noise.at(t, f, ref_channel));
      double ms = (ps + pn) > 0.0 ? ps / (ps + pn) : 0.0;
      out.speech.at(t, f) = ms;
      out.noise.at(t, f) = 1.0 - ms;
    }
  }
  return out;
}

// Instantaneous SCMs: one masked rank-1 outer product per (t, f).
struct ISCMSequence {
  long T = 0, F = 0, C = 0;
  std::vector<std::complex<double>> psi;  // [T][F][C][C]

  std::complex<double>& at(long t, long f, long i, long j) {
    return psi[(size_t)(((t * F + f) * C + i) * C + j)];
  }
  std::complex<double> at(long t, long f, long i, long j) const {
    return psi[(size_t)(((t * F + f) * C + i) * C + j)];
  }

  static ISCMSequence zeros(long T, long F, long C) {
    ISCMSequence s;
    s.T = T;
    s.F = F;
    s.C = C;
    s.psi.assign((size_t)(T * F * C * C), {0.0, 0.0});
    return s;
  }
};

// Psi_{t,f} = m_{t,f} * Y_{t,f} Y_{t,f}^H. Hermitian PSD by construction.
inline ISCMSequence compute_iscm(const Spectrogram& obs, const TimeFrequencyMask& mask) {
  if (mask.T != obs.T || mask.F != obs.F)
    throw std::invalid_argument("compute_iscm: mask shape does not match spectrogram");
  ISCMSequence out = ISCMSequence::zeros(obs.T, obs.F, obs.C);
  for (long t = 0; t < obs.T; ++t) {
    for (long f = 0; f < obs.F; ++f) {
      double m = mask.at(t, f);
      if (m == 0.0) continue;
      for (long i = 0; i < obs.C; ++i) {
        std::complex<double> yi = obs.at(t, f, i);
        for (long j = 0; j < obs.C; ++j)
          out.at(t, f, i, j) = m * yi * std::conj(obs.at(t, f, j));
      }
    }
  }
  return out;
}

inline constexpr char kMaskMagic[4] = {'M', 'B', 'M', 'K'};

// Speech mask stored as a float32 grid; the noise mask is its complement.
inline void save_mask(const std::string& path, const TimeFrequencyMask& mask_s) {
  Grid g;
  g.rows = mask_s.T;
  g.cols = mask_s.F;
  g.values = mask_s.v;
  write_grid(path, kMaskMagic, g);
}

struct MaskLoadResult {
  MaskPair masks;
  long clipped = 0;  // number of values clipped into [0, 1]
};

inline MaskLoadResult load_external_masks(const std::string& path, long expected_T, long expected_F) {
  Grid g = read_grid(path, kMaskMagic);
  if (g.rows != expected_T || g.cols != expected_F)
    throw std::invalid_argument("load_external_masks: mask shape " + std::to_string(g.rows) + "x" +
                                std::to_string(g.cols) + " does not match spectrogram " +
                                std::to_string(expected_T) + "x" + std::to_string(expected_F));
  MaskLoadResult out;
  out.masks.speech = TimeFrequencyMask::zeros(g.rows, g.cols);
  out.masks.noise = TimeFrequencyMask::zeros(g.rows, g.cols);
  for (size_t i = 0; i < g.values.size(); ++i) {
    double v = g.values[i];
    double c = std::min(1.0, std::max(0.0, v));
    if (c != v) ++out.clipped;
    out.masks.speech.v[i] = c;
    out.masks.noise.v[i] = 1.0 - c;
  }
  return out;
}

}  // namespace movebeam
