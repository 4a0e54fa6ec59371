#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/attention.hpp"
#include "movebeam/convert.hpp"
#include "movebeam/mask.hpp"
#include "movebeam/mvdr.hpp"
#include "movebeam/params.hpp"
#include "movebeam/scene.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/weights.hpp"

namespace movebeam {

// ---- SNR loss (Eq. of the training objective) ----

constexpr double kLossDistortionFloorRel = 1e-12;  // bounds the loss at -120 dB

// loss = -10 log10(||s||^2 / max(||s - s_hat||^2, floor)), floor relative to
// the reference energy. Differentiable in the estimate.
inline ad::Node* snr_loss_graph(ad::Graph& g, ad::Node* estimate, const Tensor& reference) {
  if (estimate->value.rank() != 1 || reference.rank() != 1 ||
      estimate->value.size() != reference.size())
    throw std::invalid_argument("snr_loss: estimate and reference lengths differ");
  double ref_energy = 0;
  for (long i = 0; i < reference.size(); ++i) ref_energy += reference[i] * reference[i];
  if (ref_energy <= 0) throw std::invalid_argument("snr_loss: zero reference");
  ad::Node* diff = ad::sub(g, estimate, g.constant(reference));
  ad::Node* err = ad::clamp_min(g, ad::sum_all(g, ad::mul(g, diff, diff)),
                                kLossDistortionFloorRel * ref_energy);
  ad::Node* loss = ad::scale(g, ad::log_op(g, err), 10.0 / std::log(10.0));
  return ad::add(g, loss, g.constant(Tensor::scalar(-10.0 * std::log10(ref_energy))));
}

inline double snr_loss(const std::vector<double>& estimate, const std::vector<double>& reference) {
  ad::Graph g;
  ad::Node* est = g.constant(Tensor({(long)estimate.size()}, estimate));
  return snr_loss_graph(g, est, Tensor({(long)reference.size()}, reference))->value[0];
}

// ---- utterance preprocessing shared by training and evaluation ----

struct PreparedUtterance {
  SceneConfig cfg;
  StftConfig stft_cfg;
  MultichannelWaveform mixture, clean, noise;
  Spectrogram spec_mix;
  MaskPair masks;
  ISCMSequence iscm_s, iscm_n;
  std::vector<double> clean_ref;  // metric/loss reference channel, cropped
  long out_len = 0;
};

// Loads a manifest entry, computes oracle masks and ISCMs, optionally crops
// to max_frames (loss window = cropped frames * hop samples).
inline PreparedUtterance prepare_utterance(const ManifestEntry& entry, long max_frames = 0) {
  PreparedUtterance u;
  u.cfg = scene_from_config(TextConfig::parse_file(entry.cfg_path));
  u.stft_cfg = u.cfg.stft();
  u.mixture = read_wav(entry.mixture_path);
  u.clean = read_wav(entry.clean_path);
  u.noise = read_wav(entry.noise_path);
  Spectrogram spec_clean = stft(u.clean, u.stft_cfg);
  Spectrogram spec_noise = stft(u.noise, u.stft_cfg);
  u.spec_mix = stft(u.mixture, u.stft_cfg);
  const int ref = u.cfg.array.reference_channel;
  u.masks = wiener_like_mask(spec_clean, spec_noise, ref);
  long T = u.spec_mix.T;
  u.out_len = u.mixture.num_samples();
  if (max_frames > 0 && T > max_frames) {
    T = max_frames;
    u.out_len = T * u.stft_cfg.hop_samples();
    Spectrogram crop = Spectrogram::zeros(T, u.spec_mix.F, u.spec_mix.C,
                                          u.spec_mix.frame_len_samples, u.spec_mix.hop_samples,
                                          u.spec_mix.sample_rate);
    std::copy(u.spec_mix.coeffs.begin(),
              u.spec_mix.coeffs.begin() + (long)(T * u.spec_mix.F * u.spec_mix.C),
              crop.coeffs.begin());
    u.spec_mix = std::move(crop);
    TimeFrequencyMask ms = TimeFrequencyMask::zeros(T, u.masks.speech.F);
    TimeFrequencyMask mn = TimeFrequencyMask::zeros(T, u.masks.noise.F);
    std::copy(u.masks.speech.v.begin(), u.masks.speech.v.begin() + (long)(T * ms.F), ms.v.begin());
    std::copy(u.masks.noise.v.begin(), u.masks.noise.v.begin() + (long)(T * mn.F), mn.v.begin());
    u.masks.speech = std::move(ms);
    u.masks.noise = std::move(mn);
  }
  u.iscm_s = compute_iscm(u.spec_mix, u.masks.speech);
  u.iscm_n = compute_iscm(u.spec_mix, u.masks.noise);
  u.clean_ref.assign(u.clean.channels[(size_t)ref].begin(),
                     u.clean.channels[(size_t)ref].begin() + u.out_len);
  return u;
}

// ---- end-to-end training graph ----

struct UtteranceGraph {
  ad::Node* loss = nullptr;
  BoundParams bound_s, bound_n;
};

// Oracle masks -> ISCMs -> two attention forwards -> weighted SCMs -> MVDR
// -> inverse STFT -> SNR loss. An empty bin list keeps every bin in the
// graph; otherwise only the listed bins are beamformed and the remaining
// bins pass the reference-channel mixture through.
inline UtteranceGraph build_training_graph(ad::Graph& g, const ParameterStore& net_s,
                                           const ParameterStore& net_n,
                                           const AttentionNetConfig& att,
                                           const PreparedUtterance& utt,
                                           const std::vector<long>& bins, double mvdr_eps,
                                           bool trainable = true) {
  const long T = utt.iscm_s.T, F = utt.iscm_s.F, C = utt.iscm_s.C;
  const int ref = utt.cfg.array.reference_channel;
  UtteranceGraph out;
  out.bound_s = bind_params(g, net_s, trainable);
  out.bound_n = bind_params(g, net_n, trainable);
  ad::Node* a_s = attention_forward_graph(g, out.bound_s, vectorize_iscms(utt.iscm_s), att);
  ad::Node* a_n = attention_forward_graph(g, out.bound_n, vectorize_iscms(utt.iscm_n), att);

  const bool subset = !bins.empty() && (long)bins.size() < F;
  ISCMSequence sel_s = subset ? select_bins(utt.iscm_s, bins) : utt.iscm_s;
  ISCMSequence sel_n = subset ? select_bins(utt.iscm_n, bins) : utt.iscm_n;
  const long Fs = sel_s.F;
  ad::Node* psi_s = g.constant(iscm_to_tensor(sel_s).reshaped({T, Fs * C * C * 2}));
  ad::Node* psi_n = g.constant(iscm_to_tensor(sel_n).reshaped({T, Fs * C * C * 2}));
  ad::Node* scm_s = ad::reshape(g, ad::matmul(g, a_s, psi_s), {T, Fs, C, C, 2});
  ad::Node* scm_n = ad::reshape(g, ad::matmul(g, a_n, psi_n), {T, Fs, C, C, 2});

  ad::Node* filters = mvdr_filters_graph(g, scm_s, scm_n, ref, mvdr_eps);
  Tensor obs({T, Fs, C, 2});
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < Fs; ++j)
      for (long c = 0; c < C; ++c)
        obs.set_cplx((t * Fs + j) * C + c,
                     utt.spec_mix.at(t, subset ? bins[(size_t)j] : j, c));
  ad::Node* shat = apply_filters_graph(g, filters, g.constant(std::move(obs)));  // [T,Fs,2]
  if (subset) {
    ad::Node* base = g.constant(channel_to_tensor(utt.spec_mix, ref));
    shat = ad::scatter_bins(g, shat, base, bins);
  }
  ad::Node* est = ad::istft_op(g, shat, utt.stft_cfg.frame_samples(), utt.stft_cfg.hop_samples(),
                               utt.out_len);
  out.loss = snr_loss_graph(g, est, Tensor({(long)utt.clean_ref.size()}, utt.clean_ref));
  return out;
}

// ---- dataset generation (desk-scale sampling of the simulation protocol) ----

struct DatasetSpec {
  long n_train = 200, n_dev = 20, n_eval = 20;
  uint64_t seed = 1;
  std::string out_dir = "data";
  // sampling ranges
  std::vector<double> room_sizes{3.0, 3.5, 4.0, 4.5, 5.0};  // square rooms
  double room_height = 2.5;
  double t60_min = 0.1, t60_max = 0.3;
  double snr_min_db = 2.0, snr_max_db = 8.0;
  long trajectory_points = 32;
  double source_height_min = 1.5, source_height_max = 1.9;
  double mic_height = 1.0;
  // desk-scale profile
  int sample_rate = 8000;
  double stft_frame_ms = 32.0, stft_hop_ms = 8.0;
  double duration_min_s = 2.0, duration_max_s = 2.5;
  double array_radius = 0.0577;  // circumradius of the mic triangle
  bool fixed_eval_variant = true;
};

struct DatasetManifests {
  std::string train, dev, eval_moving, eval_fixed;
};

// Mic triangle (equilateral) centered at (cx, cy), rotated by phi.
inline ArrayGeometry make_triangle_array(double cx, double cy, double z, double radius,
                                         double phi) {
  ArrayGeometry geo;
  for (int k = 0; k < 3; ++k) {
    double a = phi + 2.0 * M_PI * k / 3.0;
    geo.mics.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a), z});
  }
  geo.reference_channel = 0;
  return geo;
}

inline SceneConfig sample_scene(const DatasetSpec& spec, uint64_t scene_seed) {
  Rng rng(Rng::derive(scene_seed, 0x5a3));
  SceneConfig cfg;
  double s = spec.room_sizes[(size_t)rng.randint((long)spec.room_sizes.size())];
  cfg.room = {s, s, spec.room_height};
  cfg.t60 = rng.uniform(spec.t60_min, spec.t60_max);
  cfg.snr_db = rng.uniform(spec.snr_min_db, spec.snr_max_db);
  cfg.sample_rate = spec.sample_rate;
  cfg.stft_frame_ms = spec.stft_frame_ms;
  cfg.stft_hop_ms = spec.stft_hop_ms;
  cfg.seed = scene_seed;
  cfg.synth.duration_s = rng.uniform(spec.duration_min_s, spec.duration_max_s);
  double cx = s / 2.0 + rng.uniform(-0.25, 0.25);
  double cy = s / 2.0 + rng.uniform(-0.25, 0.25);
  cfg.array = make_triangle_array(cx, cy, spec.mic_height, spec.array_radius,
                                  rng.uniform(0.0, 2.0 * M_PI));
  // Start and end positions in opposite bands of the room so every utterance
  // sweeps a substantial arc around the array.
  const double margin = 0.45;
  double z = rng.uniform(spec.source_height_min, spec.source_height_max);
  bool along_x = rng.uniform() < 0.5;
  bool flip = rng.uniform() < 0.5;
  for (int attempt = 0; attempt < 100; ++attempt) {
    double a_lo = margin, a_hi = s / 2.0 - 0.2;
    double b_lo = s / 2.0 + 0.2, b_hi = s - margin;
    if (flip) {
      std::swap(a_lo, b_lo);
      std::swap(a_hi, b_hi);
    }
    double u0 = rng.uniform(std::min(a_lo, a_hi), std::max(a_lo, a_hi));
    double u1 = rng.uniform(std::min(b_lo, b_hi), std::max(b_lo, b_hi));
    double v0 = rng.uniform(margin, s - margin);
    double v1 = rng.uniform(margin, s - margin);
    Vec3 start = along_x ? Vec3{u0, v0, z} : Vec3{v0, u0, z};
    Vec3 end = along_x ? Vec3{u1, v1, z} : Vec3{v1, u1, z};
    auto far_enough = [&](const Vec3& p) {
      double dx = p.x - cx, dy = p.y - cy;
      return std::sqrt(dx * dx + dy * dy) >= 0.4;
    };
    if (far_enough(start) && far_enough(end)) {
      cfg.trajectory = make_line_trajectory(start, end, spec.trajectory_points);
      cfg.kind = TrajectoryKind::kLine;
      break;
    }
  }
  if (cfg.trajectory.empty())
    throw std::runtime_error("sample_scene: could not place the trajectory");
  return cfg;
}

inline DatasetManifests make_dataset(const DatasetSpec& spec) {
  if (spec.n_train < 1 || spec.n_dev < 1 || spec.n_eval < 1)
    throw std::invalid_argument("make_dataset: split sizes must be >= 1");
  std::filesystem::create_directories(spec.out_dir);
  DatasetManifests out;
  auto render_split = [&](const std::string& name, long count, uint64_t tag,
                          bool fixed) -> std::string {
    std::vector<ManifestEntry> entries;
    for (long k = 0; k < count; ++k) {
      SceneConfig cfg = sample_scene(spec, Rng::derive(spec.seed, tag + (uint64_t)k));
      if (fixed) {
        cfg.trajectory = {cfg.trajectory.front()};
        cfg.kind = TrajectoryKind::kFixed;
      }
      SimulatedUtterance utt = generate_scene(cfg);
      char id[32];
      std::snprintf(id, sizeof(id), "utt%04ld", k);
      entries.push_back(write_utterance(spec.out_dir + "/" + name, id, utt));
    }
    std::string manifest = spec.out_dir + "/" + name + ".manifest";
    write_manifest(manifest, entries);
    return manifest;
  };
  out.train = render_split("train", spec.n_train, 0, false);
  out.dev = render_split("dev", spec.n_dev, 1u << 20, false);
  out.eval_moving = render_split("eval_moving", spec.n_eval, 2u << 20, false);
  if (spec.fixed_eval_variant)
    out.eval_fixed = render_split("eval_fixed", spec.n_eval, 2u << 20, true);
  return out;
}

// ---- training loop ----

struct TrainingConfig {
  long batch_size = 2;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long epochs = 10;
  long max_frames = 256;
  uint64_t seed = 1;
  std::string manifest;      // training set
  std::string dev_manifest;  // optional
  std::string out_dir = "run";
  long checkpoint_interval = 0;  // extra checkpoints every N steps; 0 = per epoch only
  long graph_bins = 0;           // 0 = auto (all bins when F <= 64, else 64 random)
  double mvdr_eps = 1e-6;
  long threads = 1;  // parallel graphs within a batch
  AttentionNetConfig att;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("train: lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  }
};

struct TrainingState {
  long epoch = 0;        // next epoch to run
  long batch_index = 0;  // next batch within that epoch
  long step = 0;         // global step counter
  double best_dev_loss = std::numeric_limits<double>::infinity();
  ParameterStore net_s, net_n;
  AdamState adam_s, adam_n;
  AttentionNetConfig att;
  long input_dim = 0;
};

inline void save_training_state(const std::string& path, const TrainingState& st) {
  std::vector<Record> records;
  append_store_records(records, "net_S", st.net_s);
  append_store_records(records, "net_N", st.net_n);
  auto append_adam = [&](const std::string& prefix, const AdamState& a,
                         const ParameterStore& store) {
    records.push_back(Record{prefix + "/steps", 0, Tensor::scalar((double)a.step_count), {}});
    for (size_t i = 0; i < a.m.size(); ++i) {
      records.push_back(Record{prefix + "/m/" + store.entries()[i].name, 0, a.m[i], {}});
      records.push_back(Record{prefix + "/v/" + store.entries()[i].name, 0, a.v[i], {}});
    }
  };
  append_adam("adam_S", st.adam_s, st.net_s);
  append_adam("adam_N", st.adam_n, st.net_n);
  records.push_back(Record{"meta/counters", 0,
                           Tensor({4}, {(double)st.epoch, (double)st.batch_index, (double)st.step,
                                        st.best_dev_loss}),
                           {}});
  records.push_back(Record{
      "meta/att", 0,
      Tensor({7}, {(double)st.att.d_model, (double)st.att.d_ff, (double)st.att.n_heads,
                   (double)st.att.n_blocks, st.att.positional_encoding ? 1.0 : 0.0,
                   st.att.normalize_input ? 1.0 : 0.0, (double)st.att.seed}),
      {}});
  records.push_back(Record{"meta/input_dim", 0, Tensor::scalar((double)st.input_dim), {}});
  write_records(path, records);
}

inline TrainingState load_training_state(const std::string& path) {
  auto records = read_records(path);
  TrainingState st;
  st.net_s = load_store_records(records, "net_S");
  st.net_n = load_store_records(records, "net_N");
  auto find = [&](const std::string& name) -> const Record& {
    for (const auto& r : records)
      if (r.name == name) return r;
    throw std::runtime_error("checkpoint: missing record " + name + " in " + path);
  };
  auto load_adam = [&](const std::string& prefix, AdamState& a, const ParameterStore& store) {
    a.step_count = (long)find(prefix + "/steps").tensor[0];
    for (const auto& e : store.entries()) {
      a.m.push_back(find(prefix + "/m/" + e.name).tensor);
      a.v.push_back(find(prefix + "/v/" + e.name).tensor);
    }
  };
  load_adam("adam_S", st.adam_s, st.net_s);
  load_adam("adam_N", st.adam_n, st.net_n);
  const Tensor& counters = find("meta/counters").tensor;
  st.epoch = (long)counters[0];
  st.batch_index = (long)counters[1];
  st.step = (long)counters[2];
  st.best_dev_loss = counters[3];
  const Tensor& att = find("meta/att").tensor;
  st.att.d_model = (long)att[0];
  st.att.d_ff = (long)att[1];
  st.att.n_heads = (long)att[2];
  st.att.n_blocks = (long)att[3];
  st.att.positional_encoding = att[4] != 0;
  st.att.normalize_input = att[5] != 0;
  st.att.seed = (uint64_t)att[6];
  st.input_dim = (long)find("meta/input_dim").tensor[0];
  return st;
}

namespace traindetail {

// Stochastic choices derive statelessly from (seed, epoch, batch) so a
// resumed run replays the identical stream.
inline std::vector<size_t> epoch_order(uint64_t seed, long epoch, size_t n) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 0xE90C0000ULL + (uint64_t)epoch));
  rng.shuffle(order);
  return order;
}

inline std::vector<long> pick_bins(uint64_t seed, long epoch, long batch, long slot, long F,
                                   long graph_bins) {
  long want = graph_bins;
  if (want == 0) want = F <= 64 ? F : 64;
  want = std::min(want, F);
  if (want >= F) return {};
  std::vector<long> all((size_t)F);
  for (long f = 0; f < F; ++f) all[(size_t)f] = f;
  Rng rng(Rng::derive(seed, 0xB173000000ULL + (uint64_t)epoch * 1048576ULL +
                                (uint64_t)batch * 64ULL + (uint64_t)slot));
  rng.shuffle(all);
  all.resize((size_t)want);
  std::sort(all.begin(), all.end());
  return all;
}

struct StepResult {
  double loss = 0;
  std::vector<Tensor> grads_s, grads_n;
};

inline StepResult run_utterance(const ParameterStore& net_s, const ParameterStore& net_n,
                                const AttentionNetConfig& att, const ManifestEntry& entry,
                                long max_frames, const std::vector<long>& bins, double mvdr_eps) {
  PreparedUtterance utt = prepare_utterance(entry, max_frames);
  ad::Graph g;
  UtteranceGraph ug = build_training_graph(g, net_s, net_n, att, utt, bins, mvdr_eps);
  g.backward(ug.loss);
  StepResult r;
  r.loss = ug.loss->value[0];
  for (auto* n : ug.bound_s.nodes) r.grads_s.push_back(n->grad);
  for (auto* n : ug.bound_n.nodes) r.grads_n.push_back(n->grad);
  return r;
}

}  // namespace traindetail

// Mean SNR loss over a manifest with the current parameters (forward only).
inline double evaluate_loss(const std::vector<ManifestEntry>& entries,
                            const ParameterStore& net_s, const ParameterStore& net_n,
                            const AttentionNetConfig& att, long max_frames,
                            double mvdr_eps) {
  double total = 0;
  for (const auto& e : entries) {
    PreparedUtterance utt = prepare_utterance(e, max_frames);
    ad::Graph g;
    UtteranceGraph ug =
        build_training_graph(g, net_s, net_n, att, utt, {}, mvdr_eps, /*trainable=*/false);
    total += ug.loss->value[0];
  }
  return total / (double)entries.size();
}

// End-to-end training of the two attention networks. Deterministic per seed
// for a fixed thread count or not -- per-utterance graphs are independent and
// gradients accumulate in batch order.
inline TrainingState train(const TrainingConfig& cfg, const std::string& resume_path = "") {
  cfg.validate();
  auto entries = read_manifest(cfg.manifest);
  if (entries.empty()) throw std::runtime_error("train: empty dataset manifest");
  std::vector<ManifestEntry> dev;
  if (!cfg.dev_manifest.empty()) dev = read_manifest(cfg.dev_manifest);
  std::filesystem::create_directories(cfg.out_dir);

  // Probe the first utterance for the network input dimension.
  PreparedUtterance probe = prepare_utterance(entries[0], cfg.max_frames);
  const long F = probe.iscm_s.F, C = probe.iscm_s.C;
  const long input_dim = 2 * F * C * C;

  TrainingState st;
  if (!resume_path.empty()) {
    st = load_training_state(resume_path);
    if (st.input_dim != input_dim)
      throw std::runtime_error("train: checkpoint input dimension does not match dataset");
  } else {
    st.att = cfg.att;
    st.att.seed = Rng::derive(cfg.seed, 0x11);
    st.net_s = init_attention_params(st.att, input_dim);
    AttentionNetConfig att_n = st.att;
    att_n.seed = Rng::derive(cfg.seed, 0x22);
    st.net_n = init_attention_params(att_n, input_dim);
    st.input_dim = input_dim;
  }

  std::ofstream log(cfg.out_dir + "/train_log.csv", std::ios::app);
  std::ofstream dev_log(cfg.out_dir + "/dev_log.csv", std::ios::app);
  if (!log || !dev_log) throw std::runtime_error("train: cannot write training log");
  if (st.step == 0) {
    log << "step,epoch,loss,wall_ms\n";
    dev_log << "step,epoch,dev_loss\n";
  }

  const long num_batches = ((long)entries.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (long epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    auto order = traindetail::epoch_order(cfg.seed, epoch, entries.size());
    long batch0 = (epoch == st.epoch) ? st.batch_index : 0;
    for (long b = batch0; b < num_batches; ++b) {
      auto t0 = std::chrono::steady_clock::now();
      long lo = b * cfg.batch_size;
      long hi = std::min<long>((long)entries.size(), lo + cfg.batch_size);
      long bs = hi - lo;
      std::vector<std::vector<long>> bins((size_t)bs);
      for (long i = 0; i < bs; ++i)
        bins[(size_t)i] = traindetail::pick_bins(cfg.seed, epoch, b, i, F, cfg.graph_bins);

      std::vector<traindetail::StepResult> results((size_t)bs);
      if (cfg.threads > 1) {
        std::vector<std::future<traindetail::StepResult>> futs;
        for (long i = 0; i < bs; ++i)
          futs.push_back(std::async(std::launch::async, [&, i] {
            return traindetail::run_utterance(st.net_s, st.net_n, st.att,
                                              entries[order[(size_t)(lo + i)]], cfg.max_frames,
                                              bins[(size_t)i], cfg.mvdr_eps);
          }));
        for (long i = 0; i < bs; ++i) results[(size_t)i] = futs[(size_t)i].get();
      } else {
        for (long i = 0; i < bs; ++i)
          results[(size_t)i] =
              traindetail::run_utterance(st.net_s, st.net_n, st.att, entries[order[(size_t)(lo + i)]],
                                         cfg.max_frames, bins[(size_t)i], cfg.mvdr_eps);
      }

      st.net_s.zero_grads();
      st.net_n.zero_grads();
      double batch_loss = 0;
      const double scale = 1.0 / (double)bs;
      for (long i = 0; i < bs; ++i) {
        batch_loss += results[(size_t)i].loss * scale;
        auto& es = st.net_s.entries();
        auto& en = st.net_n.entries();
        for (size_t p = 0; p < es.size(); ++p)
          for (long j = 0; j < es[p].grad.size(); ++j)
            es[p].grad[j] += scale * results[(size_t)i].grads_s[p][j];
        for (size_t p = 0; p < en.size(); ++p)
          for (long j = 0; j < en[p].grad.size(); ++j)
            en[p].grad[j] += scale * results[(size_t)i].grads_n[p][j];
      }
      st.net_s.mark_grads_populated();
      st.net_n.mark_grads_populated();
      if (!std::isfinite(batch_loss)) {
        save_training_state(cfg.out_dir + "/ckpt_abort.bin", st);
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(st.step) +
                                 " (state dumped to ckpt_abort.bin)");
      }
      adam_step(st.net_s, st.adam_s, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      adam_step(st.net_n, st.adam_n, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

      ++st.step;
      st.epoch = epoch;
      st.batch_index = b + 1;
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      log << st.step << "," << epoch << "," << batch_loss << "," << ms << "\n";
      log.flush();
      if (cfg.checkpoint_interval > 0 && st.step % cfg.checkpoint_interval == 0)
        save_training_state(cfg.out_dir + "/ckpt_step" + std::to_string(st.step) + ".bin", st);
    }
    st.epoch = epoch + 1;
    st.batch_index = 0;
    if (!dev.empty()) {
      double dev_loss =
          evaluate_loss(dev, st.net_s, st.net_n, st.att, cfg.max_frames, cfg.mvdr_eps);
      dev_log << st.step << "," << epoch << "," << dev_loss << "\n";
      dev_log.flush();
      if (dev_loss < st.best_dev_loss) {
        st.best_dev_loss = dev_loss;
        save_training_state(cfg.out_dir + "/ckpt_best.bin", st);
      }
    }
    save_training_state(cfg.out_dir + "/ckpt_latest.bin", st);
  }
  save_training_state(cfg.out_dir + "/ckpt_final.bin", st);
  return st;
}

}  // namespace movebeam
