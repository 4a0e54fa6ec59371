#pragma once

#include <complex>

#include "movebeam/mask.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/tensor.hpp"
#include "movebeam/weights.hpp"

namespace movebeam {

// Conversions between the signal-domain structs and the real-pair tensors
// the autodiff graph consumes.

inline Tensor spectrogram_to_tensor(const Spectrogram& spec) {
  Tensor t({spec.T, spec.F, spec.C, 2});
  for (long i = 0; i < (long)spec.coeffs.size(); ++i) t.set_cplx(i, spec.coeffs[(size_t)i]);
  return t;
}

inline Tensor channel_to_tensor(const Spectrogram& spec, long c) {
  Tensor t({spec.T, spec.F, 2});
  for (long tt = 0; tt < spec.T; ++tt)
    for (long f = 0; f < spec.F; ++f) t.set_cplx(tt * spec.F + f, spec.at(tt, f, c));
  return t;
}

inline Tensor iscm_to_tensor(const ISCMSequence& s) {
  Tensor t({s.T, s.F, s.C, s.C, 2});
  for (long i = 0; i < (long)s.psi.size(); ++i) t.set_cplx(i, s.psi[(size_t)i]);
  return t;
}

inline Tensor scm_to_tensor(const SCMSequence& s) {
  Tensor t({s.T, s.F, s.C, s.C, 2});
  for (long i = 0; i < (long)s.phi.size(); ++i) t.set_cplx(i, s.phi[(size_t)i]);
  return t;
}

inline SCMSequence tensor_to_scm(const Tensor& t) {
  if (t.rank() != 5 || t.dim(4) != 2 || t.dim(2) != t.dim(3))
    throw std::invalid_argument("tensor_to_scm: expected [T, F, C, C, 2]");
  SCMSequence s = SCMSequence::zeros(t.dim(0), t.dim(1), t.dim(2));
  for (long i = 0; i < (long)s.phi.size(); ++i) s.phi[(size_t)i] = t.cplx(i);
  return s;
}

// Restrict SCM-like sequences to a subset of frequency bins.
inline ISCMSequence select_bins(const ISCMSequence& s, const std::vector<long>& bins) {
  ISCMSequence out = ISCMSequence::zeros(s.T, (long)bins.size(), s.C);
  for (long t = 0; t < s.T; ++t)
    for (long j = 0; j < (long)bins.size(); ++j)
      for (long i = 0; i < s.C * s.C; ++i)
        out.psi[(size_t)((t * out.F + j) * s.C * s.C + i)] =
            s.psi[(size_t)((t * s.F + bins[(size_t)j]) * s.C * s.C + i)];
  return out;
}

}  // namespace movebeam
