#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/autodiff.hpp"
#include "movebeam/mask.hpp"
#include "movebeam/params.hpp"
#include "movebeam/rng.hpp"
#include "movebeam/weights.hpp"

namespace movebeam {

// Vectorized ISCMs: one row per frame, frequency-major, per frequency the
// real C x C block (row-major) followed by the imaginary block. dim = 2FC^2.
inline Tensor vectorize_iscms(const ISCMSequence& iscms) {
  const long T = iscms.T, F = iscms.F, C = iscms.C;
  const long block = 2 * C * C;
  Tensor out({T, F * block});
  for (long t = 0; t < T; ++t)
    for (long f = 0; f < F; ++f)
      for (long i = 0; i < C; ++i)
        for (long j = 0; j < C; ++j) {
          std::complex<double> z = iscms.at(t, f, i, j);
          out[t * F * block + f * block + i * C + j] = z.real();
          out[t * F * block + f * block + C * C + i * C + j] = z.imag();
        }
  return out;
}

struct AttentionNetConfig {
  long d_model = 64;
  long d_ff = 256;
  long n_heads = 4;
  long n_blocks = 2;  // total blocks; the last one only emits weights
  bool positional_encoding = false;
  bool normalize_input = true;  // scale psi by its global RMS
  uint64_t seed = 1;

  void validate() const {
    if (d_model <= 0 || d_ff <= 0 || n_heads <= 0 || n_blocks < 1)
      throw std::invalid_argument("attention: invalid network dimensions");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("attention: d_model must be divisible by n_heads");
  }
};

// Fan-in uniform init for linear maps, ones/zeros for layer norms, fixed by
// the config seed.
inline ParameterStore init_attention_params(const AttentionNetConfig& cfg, long input_dim) {
  cfg.validate();
  if (input_dim <= 0) throw std::invalid_argument("attention: input_dim must be positive");
  ParameterStore store;
  Rng rng(Rng::derive(cfg.seed, 0xa77));
  auto linear = [&](const std::string& name, long fan_in, long fan_out) {
    Tensor w({fan_in, fan_out});
    double r = 1.0 / std::sqrt((double)fan_in);
    for (long i = 0; i < w.size(); ++i) w[i] = rng.uniform(-r, r);
    store.add(name, std::move(w));
    store.add(name + "_b", Tensor({fan_out}));
  };
  auto norm = [&](const std::string& name, long d) {
    store.add(name + "_g", Tensor::full({d}, 1.0));
    store.add(name + "_b", Tensor({d}));
  };
  linear("in", input_dim, cfg.d_model);
  for (long i = 0; i + 1 < cfg.n_blocks; ++i) {
    std::string p = "blk" + std::to_string(i) + "/";
    linear(p + "att/q", cfg.d_model, cfg.d_model);
    linear(p + "att/k", cfg.d_model, cfg.d_model);
    linear(p + "att/v", cfg.d_model, cfg.d_model);
    linear(p + "att/o", cfg.d_model, cfg.d_model);
    norm(p + "ln1", cfg.d_model);
    linear(p + "ff/w1", cfg.d_model, cfg.d_ff);
    linear(p + "ff/w2", cfg.d_ff, cfg.d_model);
    norm(p + "ln2", cfg.d_model);
  }
  linear("final/q", cfg.d_model, cfg.d_model);
  linear("final/k", cfg.d_model, cfg.d_model);
  return store;
}

inline Tensor sinusoidal_encoding(long T, long d) {
  Tensor pe({T, d});
  for (long t = 0; t < T; ++t)
    for (long i = 0; i < d; ++i) {
      double angle = (double)t / std::pow(10000.0, (double)(2 * (i / 2)) / (double)d);
      pe[t * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

namespace attdetail {

inline ad::Node* linear(ad::Graph& g, const BoundParams& params, const std::string& name,
                        ad::Node* x) {
  return ad::add(g, ad::matmul(g, x, params.node(name)), params.node(name + "_b"));
}

inline ad::Node* norm(ad::Graph& g, const BoundParams& params, const std::string& name,
                      ad::Node* x) {
  return ad::layer_norm(g, x, params.node(name + "_g"), params.node(name + "_b"));
}

}  // namespace attdetail

// Stacked self-attention forward: input projection, n_blocks-1 multi-head
// blocks with residual + layer norm, then a single-head weight layer whose
// softmax rows are the emitted attention weights [T, T].
inline ad::Node* attention_forward_graph(ad::Graph& g, const BoundParams& params,
                                         Tensor psi, const AttentionNetConfig& cfg) {
  cfg.validate();
  using namespace attdetail;
  if (psi.rank() != 2) throw std::invalid_argument("attention: psi must be [T, dim]");
  const long T = psi.dim(0);
  if (T < 1) throw std::invalid_argument("attention: need at least one frame");
  if (cfg.normalize_input) {
    double ss = 0;
    for (long i = 0; i < psi.size(); ++i) ss += psi[i] * psi[i];
    double rms = std::sqrt(ss / (double)psi.size());
    if (rms > 0)
      for (long i = 0; i < psi.size(); ++i) psi[i] /= rms;
  }
  ad::Node* z = linear(g, params, "in", g.constant(std::move(psi)));
  if (cfg.positional_encoding)
    z = ad::add(g, z, g.constant(sinusoidal_encoding(T, cfg.d_model)));

  const long dk = cfg.d_model / cfg.n_heads;
  for (long i = 0; i + 1 < cfg.n_blocks; ++i) {
    std::string p = "blk" + std::to_string(i) + "/";
    ad::Node* q = linear(g, params, p + "att/q", z);
    ad::Node* k = linear(g, params, p + "att/k", z);
    ad::Node* v = linear(g, params, p + "att/v", z);
    std::vector<ad::Node*> heads;
    for (long h = 0; h < cfg.n_heads; ++h) {
      ad::Node* qh = ad::slice_last(g, q, h * dk, dk);
      ad::Node* kh = ad::slice_last(g, k, h * dk, dk);
      ad::Node* vh = ad::slice_last(g, v, h * dk, dk);
      ad::Node* logits = ad::scale(g, ad::matmul(g, qh, ad::transpose2(g, kh)),
                                   1.0 / std::sqrt((double)dk));
      heads.push_back(ad::matmul(g, ad::softmax_last(g, logits), vh));
    }
    ad::Node* att = linear(g, params, p + "att/o", ad::concat_last(g, heads));
    z = norm(g, params, p + "ln1", ad::add(g, z, att));
    ad::Node* ff = linear(g, params, p + "ff/w2",
                          ad::relu(g, linear(g, params, p + "ff/w1", z)));
    z = norm(g, params, p + "ln2", ad::add(g, z, ff));
  }
  ad::Node* q = linear(g, params, "final/q", z);
  ad::Node* k = linear(g, params, "final/k", z);
  ad::Node* logits = ad::scale(g, ad::matmul(g, q, ad::transpose2(g, k)),
                               1.0 / std::sqrt((double)cfg.d_model));
  return ad::softmax_last(g, logits);
}

// Inference-only forward returning the weight matrix.
inline AttentionWeightMatrix attention_forward(const ParameterStore& params, const Tensor& psi,
                                               const AttentionNetConfig& cfg) {
  ad::Graph g;
  BoundParams bound = bind_params(g, params, /*trainable=*/false);
  ad::Node* a = attention_forward_graph(g, bound, psi, cfg);
  AttentionWeightMatrix w = AttentionWeightMatrix::zeros(a->value.dim(0), 1);
  for (long i = 0; i < a->value.size(); ++i) w.w[(size_t)i] = a->value[i];
  return w;
}

struct BuiltScms {
  SCMSequence scm_s, scm_n;
  AttentionWeightMatrix weights_s, weights_n;
};

// Per source: weights from the source's own network over its vectorized
// ISCMs, optional smoothing, then the weighted ISCM sum.
inline BuiltScms build_scms(const ParameterStore& net_s, const ParameterStore& net_n,
                            const AttentionNetConfig& cfg, const ISCMSequence& iscms_s,
                            const ISCMSequence& iscms_n, long smoothing_l = 0) {
  if (iscms_s.T != iscms_n.T || iscms_s.F != iscms_n.F || iscms_s.C != iscms_n.C)
    throw std::invalid_argument("build_scms: ISCM shapes differ");
  BuiltScms out;
  out.weights_s = attention_forward(net_s, vectorize_iscms(iscms_s), cfg);
  out.weights_n = attention_forward(net_n, vectorize_iscms(iscms_n), cfg);
  if (smoothing_l > 0) {
    out.weights_s = smooth_weights(out.weights_s, smoothing_l);
    out.weights_n = smooth_weights(out.weights_n, smoothing_l);
  }
  out.scm_s = apply_weights(out.weights_s, iscms_s);
  out.scm_n = apply_weights(out.weights_n, iscms_n);
  return out;
}

}  // namespace movebeam
