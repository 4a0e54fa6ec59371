#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "movebeam/attention.hpp"
#include "movebeam/autodiff.hpp"
#include "movebeam/rng.hpp"
#include "movebeam/training.hpp"

namespace movebeam {

// Central finite-difference checks for every registered op and for the full
// ISCM -> attention -> MVDR -> iSTFT -> SNR-loss chain.

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0;
  double tol = 0;
  bool pass = false;
};

namespace gcdetail {

constexpr double kFdStep = 1e-5;

inline double rel_err(double a, double b) {
  double denom = std::max(std::abs(a) + std::abs(b), 1e-6);
  return std::abs(a - b) / denom;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

using Builder = std::function<ad::Node*(ad::Graph&, const std::vector<ad::Node*>&)>;

// Scalarizes the op output with a fixed random weighting, then compares the
// analytic input gradients against central differences.
inline double check_builder(const Builder& build, const std::vector<Tensor>& inputs,
                            uint64_t seed) {
  Rng wrng(Rng::derive(seed, 0x3f));
  Tensor weights;
  auto loss_value = [&](const std::vector<Tensor>& ins) {
    ad::Graph g;
    std::vector<ad::Node*> nodes;
    for (const auto& t : ins) nodes.push_back(g.constant(t));
    ad::Node* out = build(g, nodes);
    double s = 0;
    for (long i = 0; i < out->value.size(); ++i) s += out->value[i] * weights[i];
    return s;
  };

  // analytic pass
  ad::Graph g;
  std::vector<ad::Node*> nodes;
  for (const auto& t : inputs) nodes.push_back(g.input(t));
  ad::Node* out = build(g, nodes);
  weights = random_tensor(out->value.shape(), wrng);
  ad::Node* loss = ad::sum_all(g, ad::mul(g, out, g.constant(weights)));
  g.backward(loss);

  double worst = 0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (long i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> pert = inputs;
      pert[k][i] += kFdStep;
      double up = loss_value(pert);
      pert[k][i] -= 2 * kFdStep;
      double dn = loss_value(pert);
      double fd = (up - dn) / (2 * kFdStep);
      worst = std::max(worst, rel_err(nodes[k]->grad[i], fd));
    }
  }
  return worst;
}

// Well-conditioned random Hermitian-PSD-ish complex matrices for inverse ops:
// A = B B^H + 2 I as a [batch, C, C, 2] tensor.
inline Tensor random_invertible(long batch, long c, Rng& rng) {
  Tensor t({batch, c, c, 2});
  for (long b = 0; b < batch; ++b) {
    std::vector<std::complex<double>> bm((size_t)(c * c));
    for (auto& z : bm) z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (long i = 0; i < c; ++i)
      for (long j = 0; j < c; ++j) {
        std::complex<double> s = i == j ? 2.0 : 0.0;
        for (long k = 0; k < c; ++k) s += bm[(size_t)(i * c + k)] * std::conj(bm[(size_t)(j * c + k)]);
        t.set_cplx((b * c + i) * c + j, s);
      }
  }
  return t;
}

}  // namespace gcdetail

inline std::vector<GradcheckEntry> run_op_gradchecks(uint64_t seed, double tol = 1e-4) {
  using namespace gcdetail;
  Rng rng(Rng::derive(seed, 0x60));
  std::vector<GradcheckEntry> out;
  auto check = [&](const std::string& name, const Builder& build, std::vector<Tensor> inputs) {
    GradcheckEntry e;
    e.name = name;
    e.tol = tol;
    e.max_rel_err = check_builder(build, inputs, Rng::derive(seed, out.size() + 1));
    e.pass = e.max_rel_err < tol;
    out.push_back(e);
  };

  check("add", [](ad::Graph& g, const auto& n) { return ad::add(g, n[0], n[1]); },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
  check("add_broadcast", [](ad::Graph& g, const auto& n) { return ad::add(g, n[0], n[1]); },
        {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
  check("sub", [](ad::Graph& g, const auto& n) { return ad::sub(g, n[0], n[1]); },
        {random_tensor({5}, rng), random_tensor({5}, rng)});
  check("mul", [](ad::Graph& g, const auto& n) { return ad::mul(g, n[0], n[1]); },
        {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  check("scale", [](ad::Graph& g, const auto& n) { return ad::scale(g, n[0], -2.5); },
        {random_tensor({4}, rng)});
  check("matmul", [](ad::Graph& g, const auto& n) { return ad::matmul(g, n[0], n[1]); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  check("transpose", [](ad::Graph& g, const auto& n) { return ad::transpose2(g, n[0]); },
        {random_tensor({3, 4}, rng)});
  check("reshape", [](ad::Graph& g, const auto& n) { return ad::reshape(g, n[0], {4, 3}); },
        {random_tensor({3, 4}, rng)});
  check("concat",
        [](ad::Graph& g, const auto& n) {
          return ad::concat_last(g, {n[0], n[1]});
        },
        {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)});
  check("slice", [](ad::Graph& g, const auto& n) { return ad::slice_last(g, n[0], 1, 2); },
        {random_tensor({3, 4}, rng)});
  check("softmax", [](ad::Graph& g, const auto& n) { return ad::softmax_last(g, n[0]); },
        {random_tensor({3, 5}, rng, -2, 2)});
  check("relu", [](ad::Graph& g, const auto& n) { return ad::relu(g, n[0]); },
        {random_tensor({8}, rng, 0.2, 1.0)});
  check("layer_norm",
        [](ad::Graph& g, const auto& n) { return ad::layer_norm(g, n[0], n[1], n[2]); },
        {random_tensor({3, 6}, rng), random_tensor({6}, rng, 0.5, 1.5),
         random_tensor({6}, rng)});
  check("sum", [](ad::Graph& g, const auto& n) { return ad::sum_all(g, n[0]); },
        {random_tensor({3, 3}, rng)});
  check("mean", [](ad::Graph& g, const auto& n) { return ad::mean_all(g, n[0]); },
        {random_tensor({7}, rng)});
  check("sum_axis", [](ad::Graph& g, const auto& n) { return ad::sum_axis(g, n[0], 1); },
        {random_tensor({2, 3, 4}, rng)});
  check("log", [](ad::Graph& g, const auto& n) { return ad::log_op(g, n[0]); },
        {random_tensor({5}, rng, 0.5, 3.0)});
  check("clamp_min", [](ad::Graph& g, const auto& n) { return ad::clamp_min(g, n[0], 0.0); },
        {random_tensor({6}, rng, 0.3, 1.0)});
  check("cmul", [](ad::Graph& g, const auto& n) { return ad::cmul(g, n[0], n[1]); },
        {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)});
  check("conj", [](ad::Graph& g, const auto& n) { return ad::conj_op(g, n[0]); },
        {random_tensor({4, 2}, rng)});
  check("chermitian", [](ad::Graph& g, const auto& n) { return ad::chermitian(g, n[0]); },
        {random_tensor({2, 3, 2, 2}, rng)});
  check("cmatmul", [](ad::Graph& g, const auto& n) { return ad::cmatmul(g, n[0], n[1]); },
        {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 2, 4, 2}, rng)});
  check("cmatmul_shared", [](ad::Graph& g, const auto& n) { return ad::cmatmul(g, n[0], n[1]); },
        {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 4, 2}, rng)});
  {
    Rng r2(Rng::derive(seed, 0x99));
    check("cinverse", [](ad::Graph& g, const auto& n) { return ad::cinverse(g, n[0]); },
          {random_invertible(2, 3, r2)});
    check("diag_load", [](ad::Graph& g, const auto& n) { return ad::diag_load(g, n[0], 0.1); },
          {random_invertible(2, 2, r2)});
  }
  check("ctrace", [](ad::Graph& g, const auto& n) { return ad::ctrace(g, n[0]); },
        {random_tensor({3, 3, 3, 2}, rng)});
  check("cdiv_scalar", [](ad::Graph& g, const auto& n) { return ad::cdiv_scalar(g, n[0], n[1]); },
        {random_tensor({3, 4, 2}, rng), random_tensor({3, 2}, rng, 0.5, 2.0)});
  check("real_part", [](ad::Graph& g, const auto& n) { return ad::real_part(g, n[0]); },
        {random_tensor({5, 2}, rng)});
  check("magnitude_squared",
        [](ad::Graph& g, const auto& n) { return ad::magnitude_squared(g, n[0]); },
        {random_tensor({5, 2}, rng)});
  check("istft", [](ad::Graph& g, const auto& n) { return ad::istft_op(g, n[0], 8, 2, 12); },
        {random_tensor({6, 5, 2}, rng)});
  check("scatter_bins",
        [](ad::Graph& g, const auto& n) {
          return ad::scatter_bins(g, n[0], n[1], {1, 3});
        },
        {random_tensor({3, 2, 2}, rng), random_tensor({3, 5, 2}, rng)});
  return out;
}

// Synthetic utterance at the pipeline-check scale (C = 2, F = 3, T = 4).
inline PreparedUtterance make_gradcheck_utterance(uint64_t seed) {
  const long T = 4, F = 3, C = 2;
  PreparedUtterance utt;
  utt.stft_cfg.sample_rate = 8000;
  utt.stft_cfg.frame_ms = 0.5;   // 4 samples
  utt.stft_cfg.hop_ms = 0.25;    // 2 samples
  utt.cfg.array.mics = {{1, 1, 1}, {1.05, 1, 1}};
  utt.cfg.array.reference_channel = 0;
  Rng rng(Rng::derive(seed, 0x91de));
  utt.spec_mix = Spectrogram::zeros(T, F, C, 4, 2, 8000);
  for (auto& z : utt.spec_mix.coeffs) z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  utt.masks.speech = TimeFrequencyMask::zeros(T, F);
  utt.masks.noise = TimeFrequencyMask::zeros(T, F);
  for (long i = 0; i < T * F; ++i) {
    double m = rng.uniform(0.2, 0.8);
    utt.masks.speech.v[(size_t)i] = m;
    utt.masks.noise.v[(size_t)i] = 1.0 - m;
  }
  utt.iscm_s = compute_iscm(utt.spec_mix, utt.masks.speech);
  utt.iscm_n = compute_iscm(utt.spec_mix, utt.masks.noise);
  utt.out_len = T * utt.stft_cfg.hop_samples();
  utt.clean_ref.resize((size_t)utt.out_len);
  for (auto& v : utt.clean_ref) v = rng.uniform(-0.5, 0.5);
  return utt;
}

inline AttentionNetConfig gradcheck_net_config(uint64_t seed) {
  AttentionNetConfig att;
  att.d_model = 8;
  att.d_ff = 16;
  att.n_heads = 2;
  att.n_blocks = 2;
  att.seed = seed;
  return att;
}

// Finite differences through the entire training chain for every scalar of
// both networks.
inline GradcheckEntry run_pipeline_gradcheck(uint64_t seed, double tol = 1e-3) {
  PreparedUtterance utt = make_gradcheck_utterance(seed);
  AttentionNetConfig att = gradcheck_net_config(Rng::derive(seed, 3));
  const long input_dim = 2 * utt.iscm_s.F * utt.iscm_s.C * utt.iscm_s.C;
  ParameterStore net_s = init_attention_params(att, input_dim);
  AttentionNetConfig att_n = att;
  att_n.seed = Rng::derive(seed, 4);
  ParameterStore net_n = init_attention_params(att_n, input_dim);

  ad::Graph g;
  UtteranceGraph ug = build_training_graph(g, net_s, net_n, att, utt, {}, 1e-6);
  g.backward(ug.loss);

  auto loss_value = [&]() {
    ad::Graph g2;
    return build_training_graph(g2, net_s, net_n, att, utt, {}, 1e-6, /*trainable=*/false)
        .loss->value[0];
  };

  GradcheckEntry e;
  e.name = "pipeline(C=2,F=3,T=4)";
  e.tol = tol;
  auto sweep = [&](ParameterStore& store, const BoundParams& bound) {
    auto& entries = store.entries();
    for (size_t p = 0; p < entries.size(); ++p) {
      for (long i = 0; i < entries[p].value.size(); ++i) {
        double keep = entries[p].value[i];
        entries[p].value[i] = keep + gcdetail::kFdStep;
        double up = loss_value();
        entries[p].value[i] = keep - gcdetail::kFdStep;
        double dn = loss_value();
        entries[p].value[i] = keep;
        double fd = (up - dn) / (2 * gcdetail::kFdStep);
        e.max_rel_err = std::max(e.max_rel_err, gcdetail::rel_err(bound.nodes[p]->grad[i], fd));
      }
    }
  };
  sweep(net_s, ug.bound_s);
  sweep(net_n, ug.bound_n);
  e.pass = e.max_rel_err < tol;
  return e;
}

}  // namespace movebeam
