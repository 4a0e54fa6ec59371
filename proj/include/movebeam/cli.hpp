#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "movebeam/eval.hpp"
#include "movebeam/gradcheck.hpp"
#include "movebeam/training.hpp"

namespace movebeam::cli {

// Subcommand front end. Exit codes: 0 success, 1 usage error, 2 runtime
// failure. Every run writes a resolved-config snapshot plus the seed into the
// output directory.

namespace clidetail {

inline TextConfig dataset_defaults() {
  TextConfig c;
  DatasetSpec d;
  c.set_int("dataset.n_train", d.n_train);
  c.set_int("dataset.n_dev", d.n_dev);
  c.set_int("dataset.n_eval", d.n_eval);
  c.set_int("dataset.seed", (long)d.seed);
  c.set_vec("dataset.room_sizes", d.room_sizes);
  c.set_double("dataset.room_height", d.room_height);
  c.set_double("dataset.t60_min", d.t60_min);
  c.set_double("dataset.t60_max", d.t60_max);
  c.set_double("dataset.snr_min_db", d.snr_min_db);
  c.set_double("dataset.snr_max_db", d.snr_max_db);
  c.set_int("dataset.trajectory_points", d.trajectory_points);
  c.set_double("dataset.source_height_min", d.source_height_min);
  c.set_double("dataset.source_height_max", d.source_height_max);
  c.set_double("dataset.mic_height", d.mic_height);
  c.set_int("dataset.sample_rate", d.sample_rate);
  c.set_double("dataset.stft_frame_ms", d.stft_frame_ms);
  c.set_double("dataset.stft_hop_ms", d.stft_hop_ms);
  c.set_double("dataset.duration_min_s", d.duration_min_s);
  c.set_double("dataset.duration_max_s", d.duration_max_s);
  c.set_double("dataset.array_radius", d.array_radius);
  c.set_bool("dataset.fixed_eval_variant", d.fixed_eval_variant);
  return c;
}

inline DatasetSpec dataset_from_config(const TextConfig& c) {
  DatasetSpec d;
  d.n_train = c.get_int("dataset.n_train");
  d.n_dev = c.get_int("dataset.n_dev");
  d.n_eval = c.get_int("dataset.n_eval");
  d.seed = (uint64_t)c.get_int("dataset.seed");
  d.room_sizes = c.get_vec("dataset.room_sizes");
  d.room_height = c.get_double("dataset.room_height");
  d.t60_min = c.get_double("dataset.t60_min");
  d.t60_max = c.get_double("dataset.t60_max");
  d.snr_min_db = c.get_double("dataset.snr_min_db");
  d.snr_max_db = c.get_double("dataset.snr_max_db");
  d.trajectory_points = c.get_int("dataset.trajectory_points");
  d.source_height_min = c.get_double("dataset.source_height_min");
  d.source_height_max = c.get_double("dataset.source_height_max");
  d.mic_height = c.get_double("dataset.mic_height");
  d.sample_rate = (int)c.get_int("dataset.sample_rate");
  d.stft_frame_ms = c.get_double("dataset.stft_frame_ms");
  d.stft_hop_ms = c.get_double("dataset.stft_hop_ms");
  d.duration_min_s = c.get_double("dataset.duration_min_s");
  d.duration_max_s = c.get_double("dataset.duration_max_s");
  d.array_radius = c.get_double("dataset.array_radius");
  d.fixed_eval_variant = c.get_bool("dataset.fixed_eval_variant");
  return d;
}

inline TextConfig train_defaults() {
  TextConfig c;
  TrainingConfig t;
  c.set_int("train.batch_size", t.batch_size);
  c.set_double("train.lr", t.lr);
  c.set_double("train.beta1", t.beta1);
  c.set_double("train.beta2", t.beta2);
  c.set_double("train.adam_eps", t.adam_eps);
  c.set_int("train.epochs", t.epochs);
  c.set_int("train.max_frames", t.max_frames);
  c.set_int("train.seed", (long)t.seed);
  c.set_int("train.checkpoint_interval", t.checkpoint_interval);
  c.set_int("train.graph_bins", t.graph_bins);
  c.set_double("train.mvdr_eps", t.mvdr_eps);
  c.set_int("train.threads", t.threads);
  c.set_int("att.d_model", t.att.d_model);
  c.set_int("att.d_ff", t.att.d_ff);
  c.set_int("att.n_heads", t.att.n_heads);
  c.set_int("att.n_blocks", t.att.n_blocks);
  c.set_bool("att.positional_encoding", t.att.positional_encoding);
  c.set_bool("att.normalize_input", t.att.normalize_input);
  return c;
}

inline TrainingConfig train_from_config(const TextConfig& c) {
  TrainingConfig t;
  t.batch_size = c.get_int("train.batch_size");
  t.lr = c.get_double("train.lr");
  t.beta1 = c.get_double("train.beta1");
  t.beta2 = c.get_double("train.beta2");
  t.adam_eps = c.get_double("train.adam_eps");
  t.epochs = c.get_int("train.epochs");
  t.max_frames = c.get_int("train.max_frames");
  t.seed = (uint64_t)c.get_int("train.seed");
  t.checkpoint_interval = c.get_int("train.checkpoint_interval");
  t.graph_bins = c.get_int("train.graph_bins");
  t.mvdr_eps = c.get_double("train.mvdr_eps");
  t.threads = c.get_int("train.threads");
  t.att.d_model = c.get_int("att.d_model");
  t.att.d_ff = c.get_int("att.d_ff");
  t.att.n_heads = c.get_int("att.n_heads");
  t.att.n_blocks = c.get_int("att.n_blocks");
  t.att.positional_encoding = c.get_bool("att.positional_encoding");
  t.att.normalize_input = c.get_bool("att.normalize_input");
  return t;
}

// defaults <- optional config file <- key=value overrides (strict keys).
inline TextConfig resolve_config(TextConfig defaults, const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
  if (!config_path.empty()) defaults.merge(TextConfig::parse_file(config_path), /*strict=*/true);
  for (const auto& kv : overrides) defaults.apply_override(kv);
  return defaults;
}

inline void write_snapshot(const std::string& out_dir, const std::string& name, TextConfig cfg,
                           uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  cfg.set_int("run.seed", (long)seed);
  cfg.write_file(out_dir + "/" + name + "_resolved.cfg");
}

}  // namespace clidetail

inline int run(int argc, const char* const* argv) {
  using namespace clidetail;
  CLI::App app{"mask-based MVDR beamforming for moving sources"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "generate simulated datasets");
  std::string sim_config, sim_out = "data";
  long sim_n = 0;
  long sim_seed = -1;
  std::vector<std::string> sim_overrides;
  sim->add_option("--config", sim_config, "dataset config file");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--n", sim_n, "generate a single split with N utterances");
  sim->add_option("--seed", sim_seed, "override dataset seed");
  sim->add_option("overrides", sim_overrides, "key=value config overrides");

  // ---- train ----
  auto* trn = app.add_subcommand("train", "train the attention weight networks");
  std::string trn_config, trn_manifest, trn_dev, trn_out = "run", trn_resume;
  long trn_seed = -1;
  std::vector<std::string> trn_overrides;
  trn->add_option("--config", trn_config, "training config file");
  trn->add_option("--manifest", trn_manifest, "training manifest")->required();
  trn->add_option("--dev", trn_dev, "development manifest");
  trn->add_option("--out", trn_out, "output directory");
  trn->add_option("--resume", trn_resume, "resume from a training state checkpoint");
  trn->add_option("--seed", trn_seed, "override training seed");
  trn->add_option("overrides", trn_overrides, "key=value config overrides");

  // ---- enhance ----
  auto* enh = app.add_subcommand("enhance", "beamform one utterance to a WAV file");
  std::string enh_mix, enh_clean, enh_noise, enh_masks, enh_scene, enh_ckpt, enh_out = "enhanced.wav";
  std::string enh_scheme = "tiv";
  double enh_alpha = 0.999;
  long enh_block = 50, enh_smooth = 0;
  enh->add_option("--in", enh_mix, "mixture WAV")->required();
  enh->add_option("--clean", enh_clean, "clean reverberant WAV (oracle masks)");
  enh->add_option("--noise", enh_noise, "noise WAV (oracle masks)");
  enh->add_option("--masks", enh_masks, "external speech-mask file");
  enh->add_option("--scene", enh_scene, "scene config (STFT settings and reference channel)");
  enh->add_option("--scheme", enh_scheme, "tiv | onl | blk | att");
  enh->add_option("--alpha", enh_alpha, "online forgetting factor");
  enh->add_option("--block", enh_block, "blockwise half span L");
  enh->add_option("--smooth", enh_smooth, "attention smoothing L'");
  enh->add_option("--checkpoint", enh_ckpt, "attention checkpoint (scheme att)");
  enh->add_option("--out", enh_out, "output WAV path");

  // ---- evaluate ----
  auto* evl = app.add_subcommand("evaluate", "compare systems over a manifest");
  std::string evl_manifest, evl_systems = "mixture,masking,tiv,onl,blk,att", evl_ckpt;
  std::string evl_out = "report", evl_masks_dir, evl_heatmaps;
  double evl_alpha = 0.999;
  long evl_block = 50, evl_smooth = 0, evl_taps = 512;
  evl->add_option("--manifest", evl_manifest, "evaluation manifest")->required();
  evl->add_option("--systems", evl_systems, "comma-separated system list");
  evl->add_option("--alpha", evl_alpha, "online forgetting factor");
  evl->add_option("--block", evl_block, "blockwise half span L");
  evl->add_option("--smooth", evl_smooth, "attention smoothing L'");
  evl->add_option("--taps", evl_taps, "SDR FIR taps");
  evl->add_option("--checkpoint", evl_ckpt, "attention checkpoint");
  evl->add_option("--masks-dir", evl_masks_dir, "directory of external <id>.mask files");
  evl->add_option("--export-attention", evl_heatmaps,
                  "also export attention heatmaps for the first utterance");
  evl->add_option("--out", evl_out, "output directory");

  // ---- beampattern ----
  auto* bpt = app.add_subcommand("beampattern", "export beam patterns for a scene");
  std::string bpt_scene, bpt_ckpt, bpt_out = "beampattern", bpt_scheme = "att", bpt_freqs = "1000,2000";
  long bpt_frames = 8, bpt_smooth = 0;
  double bpt_alpha = 0.999;
  long bpt_block = 50;
  bpt->add_option("--scene", bpt_scene, "scene config to re-render")->required();
  bpt->add_option("--scheme", bpt_scheme, "tiv | onl | blk | att");
  bpt->add_option("--checkpoint", bpt_ckpt, "attention checkpoint (scheme att)");
  bpt->add_option("--frames", bpt_frames, "number of evenly spaced frames to export");
  bpt->add_option("--freqs", bpt_freqs, "probe frequencies in Hz");
  bpt->add_option("--alpha", bpt_alpha, "online forgetting factor");
  bpt->add_option("--block", bpt_block, "blockwise half span L");
  bpt->add_option("--smooth", bpt_smooth, "attention smoothing L'");
  bpt->add_option("--out", bpt_out, "output directory");

  // ---- gradcheck ----
  auto* gck = app.add_subcommand("gradcheck", "finite-difference checks for all ops");
  long gck_seed = 1;
  gck->add_option("--seed", gck_seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      TextConfig cfg = resolve_config(dataset_defaults(), sim_config, sim_overrides);
      if (sim_seed >= 0) cfg.set_int("dataset.seed", sim_seed);
      DatasetSpec spec = dataset_from_config(cfg);
      spec.out_dir = sim_out;
      write_snapshot(sim_out, "simulate", cfg, spec.seed);
      if (sim_n > 0) {
        std::vector<ManifestEntry> entries;
        for (long k = 0; k < sim_n; ++k) {
          SceneConfig scene = sample_scene(spec, Rng::derive(spec.seed, (uint64_t)k));
          char id[32];
          std::snprintf(id, sizeof(id), "utt%04ld", k);
          entries.push_back(write_utterance(sim_out + "/scenes", id, generate_scene(scene)));
        }
        write_manifest(sim_out + "/scenes.manifest", entries);
        std::cout << "wrote " << sim_n << " utterances to " << sim_out << "/scenes\n";
      } else {
        DatasetManifests m = make_dataset(spec);
        std::cout << "train: " << m.train << "\ndev: " << m.dev
                  << "\neval_moving: " << m.eval_moving << "\neval_fixed: " << m.eval_fixed
                  << "\n";
      }
      return 0;
    }

    if (trn->parsed()) {
      TextConfig cfg = resolve_config(train_defaults(), trn_config, trn_overrides);
      if (trn_seed >= 0) cfg.set_int("train.seed", trn_seed);
      TrainingConfig tc = train_from_config(cfg);
      tc.manifest = trn_manifest;
      tc.dev_manifest = trn_dev;
      tc.out_dir = trn_out;
      write_snapshot(trn_out, "train", cfg, tc.seed);
      TrainingState st = train(tc, trn_resume);
      std::cout << "trained " << st.step << " steps; final checkpoint " << trn_out
                << "/ckpt_final.bin\n";
      return 0;
    }

    if (enh->parsed()) {
      StftConfig scfg;
      int ref = 0;
      if (!enh_scene.empty()) {
        SceneConfig scene = scene_from_config(TextConfig::parse_file(enh_scene));
        scfg = scene.stft();
        ref = scene.array.reference_channel;
      }
      MultichannelWaveform mix = read_wav(enh_mix);
      if (enh_scene.empty()) scfg.sample_rate = mix.sample_rate;
      Spectrogram y = stft(mix, scfg);
      MaskPair masks;
      if (!enh_masks.empty()) {
        masks = load_external_masks(enh_masks, y.T, y.F).masks;
      } else if (!enh_clean.empty() && !enh_noise.empty()) {
        masks = wiener_like_mask(stft(read_wav(enh_clean), scfg), stft(read_wav(enh_noise), scfg),
                                 ref);
      } else {
        throw std::invalid_argument("enhance: need either --masks or --clean and --noise");
      }
      ISCMSequence iscm_s = compute_iscm(y, masks.speech);
      ISCMSequence iscm_n = compute_iscm(y, masks.noise);
      SCMSequence scm_s, scm_n;
      if (enh_scheme == "tiv") {
        scm_s = apply_weights(weights_time_invariant(masks.speech), iscm_s);
        scm_n = apply_weights(weights_time_invariant(masks.noise), iscm_n);
      } else if (enh_scheme == "onl") {
        AttentionWeightMatrix w = weights_online(enh_alpha, y.T);
        scm_s = apply_weights(w, iscm_s);
        scm_n = apply_weights(w, iscm_n);
      } else if (enh_scheme == "blk") {
        scm_s = apply_weights(weights_blockwise(masks.speech, enh_block), iscm_s);
        scm_n = apply_weights(weights_blockwise(masks.noise, enh_block), iscm_n);
      } else if (enh_scheme == "att") {
        if (enh_ckpt.empty()) throw std::invalid_argument("enhance: scheme att needs --checkpoint");
        AttentionCheckpoint ck = load_attention_checkpoint(enh_ckpt);
        BuiltScms built = build_scms(ck.net_s, ck.net_n, ck.att, iscm_s, iscm_n, enh_smooth);
        scm_s = std::move(built.scm_s);
        scm_n = std::move(built.scm_n);
      } else {
        throw std::invalid_argument("enhance: unknown scheme " + enh_scheme);
      }
      MultichannelWaveform out = enhance(y, scm_s, scm_n, ref, scfg, mix.num_samples());
      write_wav(enh_out, out);
      std::cout << "wrote " << enh_out << "\n";
      return 0;
    }

    if (evl->parsed()) {
      EvalParams params;
      params.systems.clear();
      std::stringstream ss(evl_systems);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) params.systems.push_back(item);
      params.alpha = evl_alpha;
      params.block_l = evl_block;
      params.smooth_l = evl_smooth;
      params.sdr_taps = evl_taps;
      params.checkpoint = evl_ckpt;
      params.external_masks = evl_masks_dir;
      TextConfig snap;
      snap.set("eval.manifest", evl_manifest);
      snap.set("eval.systems", evl_systems);
      snap.set_double("eval.alpha", params.alpha);
      snap.set_int("eval.block", params.block_l);
      snap.set_int("eval.smooth", params.smooth_l);
      snap.set_int("eval.taps", params.sdr_taps);
      snap.set("eval.checkpoint", params.checkpoint);
      write_snapshot(evl_out, "evaluate", snap, 0);
      EvalReport report = compare_systems(evl_manifest, params);
      write_report_csv(evl_out + "/report.csv", report);
      for (const auto& n : report.notices) std::cout << "notice: " << n << "\n";
      for (const auto& s : report.systems)
        std::cout << s << ": mean SNR " << report.mean_snr(s) << " dB, mean SDR "
                  << report.mean_sdr(s) << " dB\n";
      if (!evl_heatmaps.empty()) {
        if (params.checkpoint.empty())
          throw std::invalid_argument("evaluate: --export-attention needs --checkpoint");
        auto entries = read_manifest(evl_manifest);
        PreparedUtterance utt = prepare_utterance(entries[0]);
        AttentionCheckpoint ck = load_attention_checkpoint(params.checkpoint);
        export_attention_heatmaps(utt, ck, params.smooth_l, evl_out + "/" + evl_heatmaps);
      }
      std::cout << "report: " << evl_out << "/report.csv\n";
      return 0;
    }

    if (bpt->parsed()) {
      SceneConfig scene = scene_from_config(TextConfig::parse_file(bpt_scene));
      SimulatedUtterance utt = generate_scene(scene);
      StftConfig scfg = scene.stft();
      const int ref = scene.array.reference_channel;
      Spectrogram y = stft(utt.mixture, scfg);
      MaskPair masks = wiener_like_mask(stft(utt.clean_reverberant, scfg),
                                        stft(utt.noise, scfg), ref);
      ISCMSequence iscm_s = compute_iscm(y, masks.speech);
      ISCMSequence iscm_n = compute_iscm(y, masks.noise);
      SCMSequence scm_s, scm_n;
      if (bpt_scheme == "att") {
        if (bpt_ckpt.empty()) throw std::invalid_argument("beampattern: scheme att needs --checkpoint");
        AttentionCheckpoint ck = load_attention_checkpoint(bpt_ckpt);
        BuiltScms built = build_scms(ck.net_s, ck.net_n, ck.att, iscm_s, iscm_n, bpt_smooth);
        scm_s = std::move(built.scm_s);
        scm_n = std::move(built.scm_n);
      } else if (bpt_scheme == "tiv") {
        scm_s = apply_weights(weights_time_invariant(masks.speech), iscm_s);
        scm_n = apply_weights(weights_time_invariant(masks.noise), iscm_n);
      } else if (bpt_scheme == "onl") {
        AttentionWeightMatrix w = weights_online(bpt_alpha, y.T);
        scm_s = apply_weights(w, iscm_s);
        scm_n = apply_weights(w, iscm_n);
      } else if (bpt_scheme == "blk") {
        scm_s = apply_weights(weights_blockwise(masks.speech, bpt_block), iscm_s);
        scm_n = apply_weights(weights_blockwise(masks.noise, bpt_block), iscm_n);
      } else {
        throw std::invalid_argument("beampattern: unknown scheme " + bpt_scheme);
      }
      BeamformerFilters filters = mvdr_filters(scm_s, scm_n, ref);
      std::vector<double> freqs;
      std::stringstream fs(bpt_freqs);
      std::string item;
      while (std::getline(fs, item, ','))
        if (!item.empty()) freqs.push_back(std::stod(item));
      std::filesystem::create_directories(bpt_out);
      std::vector<std::string> csvs;
      std::vector<double> true_az;
      auto active = active_frames(masks.speech);
      std::vector<long> frames;
      for (long k = 0; k < bpt_frames; ++k) {
        long t = (long)((double)(k + 1) / (double)(bpt_frames + 1) * (double)y.T);
        frames.push_back(std::min(t, y.T - 1));
      }
      for (long t : frames) {
        BeamPattern bp = beam_pattern(filters, scene.array, t, freqs, scene.sample_rate);
        long point = utt.trajectory_frame_map[(size_t)t];
        bp.true_azimuth_deg = source_azimuth_deg(scene.trajectory[(size_t)point], scene.array);
        std::vector<double> grid;
        for (size_t a = 0; a < bp.azimuth_deg.size(); ++a) {
          grid.push_back(bp.azimuth_deg[a]);
          for (size_t f = 0; f < freqs.size(); ++f) grid.push_back(bp.gain((long)a, (long)f));
        }
        std::string csv = bpt_out + "/frame" + std::to_string(t) + ".csv";
        write_csv_grid(csv, grid, (long)bp.azimuth_deg.size(), 1 + (long)freqs.size());
        csvs.push_back(csv);
        true_az.push_back(bp.true_azimuth_deg);
        std::cout << "frame " << t << (active[(size_t)t] ? " (active)" : " (inactive)")
                  << ": true azimuth " << bp.true_azimuth_deg << " deg, main lobe "
                  << bp.main_lobe_deg(0) << " deg\n";
      }
      write_beampattern_plot_script(bpt_out + "/plot.py", csvs, true_az);
      std::cout << "beam patterns in " << bpt_out << "\n";
      return 0;
    }

    if (gck->parsed()) {
      auto ops = run_op_gradchecks((uint64_t)gck_seed);
      bool all_pass = true;
      std::printf("%-18s %12s %10s  %s\n", "op", "max_rel_err", "tol", "status");
      for (const auto& e : ops) {
        std::printf("%-18s %12.3e %10.0e  %s\n", e.name.c_str(), e.max_rel_err, e.tol,
                    e.pass ? "pass" : "FAIL");
        all_pass = all_pass && e.pass;
      }
      GradcheckEntry pipe = run_pipeline_gradcheck((uint64_t)gck_seed);
      std::printf("%-18s %12.3e %10.0e  %s\n", pipe.name.c_str(), pipe.max_rel_err, pipe.tol,
                  pipe.pass ? "pass" : "FAIL");
      all_pass = all_pass && pipe.pass;
      return all_pass ? 0 : 2;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace movebeam::cli
