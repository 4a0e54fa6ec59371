#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/container.hpp"
#include "movebeam/mask.hpp"

namespace movebeam {

// Nonnegative weights c_{t,t'} selecting which frames' instantaneous SCMs
// contribute to the SCM at frame t. Mask-normalized schemes are
// frequency-dependent (slices = F); the online and learned schemes share one
// matrix across frequency (slices = 1).
struct AttentionWeightMatrix {
  long T = 0;
  long slices = 1;
  std::vector<double> w;  // [slices][T][T], query-major rows
  long degenerate_rows = 0;

  double& at(long s, long t, long tp) { return w[(size_t)((s * T + t) * T + tp)]; }
  double at(long s, long t, long tp) const { return w[(size_t)((s * T + t) * T + tp)]; }
  const double* row(long s, long t) const { return &w[(size_t)((s * T + t) * T)]; }
  double* row(long s, long t) { return &w[(size_t)((s * T + t) * T)]; }

  static AttentionWeightMatrix zeros(long T, long slices) {
    AttentionWeightMatrix a;
    a.T = T;
    a.slices = slices;
    a.w.assign((size_t)(slices * T * T), 0.0);
    return a;
  }
};

// Time-varying SCMs, same layout as ISCMSequence.
struct SCMSequence {
  long T = 0, F = 0, C = 0;
  std::vector<std::complex<double>> phi;  // [T][F][C][C]

  std::complex<double>& at(long t, long f, long i, long j) {
    return phi[(size_t)(((t * F + f) * C + i) * C + j)];
  }
  std::complex<double> at(long t, long f, long i, long j) const {
    return phi[(size_t)(((t * F + f) * C + i) * C + j)];
  }

  static SCMSequence zeros(long T, long F, long C) {
    SCMSequence s;
    s.T = T;
    s.F = F;
    s.C = C;
    s.phi.assign((size_t)(T * F * C * C), {0.0, 0.0});
    return s;
  }
};

constexpr double kDegenerateMaskSum = 1e-10;

// Time-invariant scheme: every row weights frame t' by 1 / sum_tau m(tau, f).
// An all-silent bin falls back to uniform 1/T rows.
inline AttentionWeightMatrix weights_time_invariant(const TimeFrequencyMask& mask) {
  const long T = mask.T, F = mask.F;
  if (T <= 0 || F <= 0) throw std::invalid_argument("weights_time_invariant: empty mask");
  AttentionWeightMatrix out = AttentionWeightMatrix::zeros(T, F);
  for (long f = 0; f < F; ++f) {
    double sum = 0;
    for (long t = 0; t < T; ++t) sum += mask.at(t, f);
    double wv;
    if (sum < kDegenerateMaskSum) {
      wv = 1.0 / (double)T;
      out.degenerate_rows += T;
    } else {
      wv = 1.0 / sum;
    }
    for (long t = 0; t < T; ++t)
      for (long tp = 0; tp < T; ++tp) out.at(f, t, tp) = wv;
  }
  return out;
}

// Online scheme: c_{t,t'} = alpha^(t-t') for t' <= t, else 0. Unnormalized,
// matching the recursive update Phi_t = alpha * Phi_{t-1} + Psi_t.
inline AttentionWeightMatrix weights_online(double alpha, long T) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("weights_online: alpha must be in (0, 1]");
  if (T <= 0) throw std::invalid_argument("weights_online: T must be positive");
  AttentionWeightMatrix out = AttentionWeightMatrix::zeros(T, 1);
  for (long t = 0; t < T; ++t) {
    double p = 1.0;
    for (long tp = t; tp >= 0; --tp) {
      out.at(0, t, tp) = p;
      p *= alpha;
    }
  }
  return out;
}

// Blockwise scheme: rows cover t' in [t-L, t+L] with a block shift of one
// frame, normalized by the in-block mask sum at each frequency.
inline AttentionWeightMatrix weights_blockwise(const TimeFrequencyMask& mask, long L) {
  if (L < 0) throw std::invalid_argument("weights_blockwise: L must be >= 0");
  const long T = mask.T, F = mask.F;
  if (T <= 0 || F <= 0) throw std::invalid_argument("weights_blockwise: empty mask");
  AttentionWeightMatrix out = AttentionWeightMatrix::zeros(T, F);
  for (long f = 0; f < F; ++f) {
    for (long t = 0; t < T; ++t) {
      long lo = std::max<long>(0, t - L);
      long hi = std::min<long>(T - 1, t + L);
      double sum = 0;
      for (long tp = lo; tp <= hi; ++tp) sum += mask.at(tp, f);
      double wv;
      if (sum < kDegenerateMaskSum) {
        wv = 1.0 / (double)(hi - lo + 1);
        ++out.degenerate_rows;
      } else {
        wv = 1.0 / sum;
      }
      for (long tp = lo; tp <= hi; ++tp) out.at(f, t, tp) = wv;
    }
  }
  return out;
}

// Phi_{t,f} = sum_t' c_{t,t'} Psi_{t',f}  (Hermitian PSD preserved for
// nonnegative weights).
inline SCMSequence apply_weights(const AttentionWeightMatrix& weights, const ISCMSequence& iscms) {
  const long T = iscms.T, F = iscms.F, C = iscms.C;
  if (weights.T != T)
    throw std::invalid_argument("apply_weights: weight frame count does not match ISCMs");
  if (weights.slices != 1 && weights.slices != F)
    throw std::invalid_argument("apply_weights: weight slices must be 1 or F");
  SCMSequence out = SCMSequence::zeros(T, F, C);
  const long block = C * C;
  if (weights.slices == 1) {
    for (long t = 0; t < T; ++t) {
      const double* wr = weights.row(0, t);
      for (long tp = 0; tp < T; ++tp) {
        double wv = wr[tp];
        if (wv == 0.0) continue;
        const std::complex<double>* src = &iscms.psi[(size_t)(tp * F * block)];
        std::complex<double>* dst = &out.phi[(size_t)(t * F * block)];
        for (long i = 0; i < F * block; ++i) dst[i] += wv * src[i];
      }
    }
  } else {
    for (long f = 0; f < F; ++f) {
      for (long t = 0; t < T; ++t) {
        const double* wr = weights.row(f, t);
        std::complex<double>* dst = &out.phi[(size_t)((t * F + f) * block)];
        for (long tp = 0; tp < T; ++tp) {
          double wv = wr[tp];
          if (wv == 0.0) continue;
          const std::complex<double>* src = &iscms.psi[(size_t)((tp * F + f) * block)];
          for (long i = 0; i < block; ++i) dst[i] += wv * src[i];
        }
      }
    }
  }
  return out;
}

// Moving-average smoothing over query rows: row t becomes the mean of rows
// t-L' .. t+L', truncated at the edges with the actual count.
inline AttentionWeightMatrix smooth_weights(const AttentionWeightMatrix& in, long L_prime) {
  if (L_prime < 0) throw std::invalid_argument("smooth_weights: L' must be >= 0");
  if (L_prime == 0) return in;
  const long T = in.T;
  AttentionWeightMatrix out = AttentionWeightMatrix::zeros(T, in.slices);
  for (long s = 0; s < in.slices; ++s) {
    for (long t = 0; t < T; ++t) {
      long lo = std::max<long>(0, t - L_prime);
      long hi = std::min<long>(T - 1, t + L_prime);
      double inv = 1.0 / (double)(hi - lo + 1);
      double* dst = out.row(s, t);
      for (long tau = lo; tau <= hi; ++tau) {
        const double* src = in.row(s, tau);
        for (long tp = 0; tp < T; ++tp) dst[tp] += inv * src[tp];
      }
    }
  }
  return out;
}

// Weights multiplied by the per-frame voice activity (sum of the source's
// mask over frequency) and row-normalized; used for heatmap export. Rows with
// zero denominator are emitted as zeros and counted in degenerate_rows.
inline AttentionWeightMatrix visualization_weights(const AttentionWeightMatrix& in,
                                                   const TimeFrequencyMask& mask) {
  if (mask.T != in.T)
    throw std::invalid_argument("visualization_weights: mask frames do not match weights");
  const long T = in.T;
  std::vector<double> activity((size_t)T);
  for (long t = 0; t < T; ++t) activity[(size_t)t] = mask.frame_sum(t);
  AttentionWeightMatrix out = AttentionWeightMatrix::zeros(T, in.slices);
  for (long s = 0; s < in.slices; ++s) {
    for (long t = 0; t < T; ++t) {
      const double* src = in.row(s, t);
      double denom = 0;
      for (long tp = 0; tp < T; ++tp) denom += src[tp] * activity[(size_t)tp];
      double* dst = out.row(s, t);
      if (denom <= 0.0) {
        ++out.degenerate_rows;
        continue;
      }
      for (long tp = 0; tp < T; ++tp) dst[tp] = src[tp] * activity[(size_t)tp] / denom;
    }
  }
  return out;
}

inline constexpr char kWeightMagic[4] = {'M', 'B', 'W', 'T'};

// Export one slice of a weight matrix in the grid container format.
inline void save_weight_matrix(const std::string& path, const AttentionWeightMatrix& w, long slice = 0) {
  if (slice < 0 || slice >= w.slices) throw std::invalid_argument("save_weight_matrix: bad slice");
  Grid g;
  g.rows = w.T;
  g.cols = w.T;
  g.values.assign(w.w.begin() + (long)(slice * w.T * w.T), w.w.begin() + (long)((slice + 1) * w.T * w.T));
  write_grid(path, kWeightMagic, g);
}

inline AttentionWeightMatrix load_weight_matrix(const std::string& path) {
  Grid g = read_grid(path, kWeightMagic);
  if (g.rows != g.cols) throw std::runtime_error("load_weight_matrix: grid is not square");
  AttentionWeightMatrix w = AttentionWeightMatrix::zeros(g.rows, 1);
  w.w = g.values;
  return w;
}

}  // namespace movebeam
