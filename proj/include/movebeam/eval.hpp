#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/attention.hpp"
#include "movebeam/beampattern.hpp"
#include "movebeam/metrics.hpp"
#include "movebeam/mvdr.hpp"
#include "movebeam/training.hpp"

namespace movebeam {

struct EvalParams {
  std::vector<std::string> systems{"mixture", "masking", "tiv", "onl", "blk", "att"};
  double alpha = 0.999;   // online forgetting factor
  long block_l = 50;      // blockwise half span
  long smooth_l = 0;      // attention weight smoothing
  double mvdr_eps = 1e-6;
  long sdr_taps = 512;
  std::string checkpoint;      // attention networks; empty -> att skipped
  std::string external_masks;  // directory of <id>.mask files; empty -> oracle
};

struct EvalRow {
  std::string utterance, system;
  double snr_db = 0, sdr_db = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> systems;  // systems actually run
  std::vector<std::string> notices;
  std::string dataset, config_digest;

  double mean_snr(const std::string& system) const { return mean(system, true); }
  double mean_sdr(const std::string& system) const { return mean(system, false); }

 private:
  double mean(const std::string& system, bool snr) const {
    double s = 0;
    long n = 0;
    for (const auto& r : rows)
      if (r.system == system) {
        s += snr ? r.snr_db : r.sdr_db;
        ++n;
      }
    if (n == 0) throw std::invalid_argument("report: no rows for system " + system);
    return s / (double)n;
  }
};

struct AttentionCheckpoint {
  ParameterStore net_s, net_n;
  AttentionNetConfig att;
  long input_dim = 0;
};

inline AttentionCheckpoint load_attention_checkpoint(const std::string& path) {
  TrainingState st = load_training_state(path);
  AttentionCheckpoint ck;
  ck.net_s = std::move(st.net_s);
  ck.net_n = std::move(st.net_n);
  ck.att = st.att;
  ck.input_dim = st.input_dim;
  return ck;
}

// Runs the requested systems over the manifest with shared masks and
// ISCMs per utterance. Metric reference: clean reverberant signal at the
// configured reference channel.
inline EvalReport compare_systems(const std::string& manifest_path, const EvalParams& params) {
  auto entries = read_manifest(manifest_path);
  if (entries.empty()) throw std::runtime_error("compare_systems: empty manifest");
  EvalReport report;
  report.dataset = manifest_path;

  bool want_att = false;
  std::vector<std::string> systems;
  for (const auto& s : params.systems) {
    if (s == "att") {
      if (params.checkpoint.empty()) {
        report.notices.push_back("att skipped: no checkpoint provided");
        continue;
      }
      want_att = true;
    }
    systems.push_back(s);
  }
  report.systems = systems;

  AttentionCheckpoint ck;
  if (want_att) ck = load_attention_checkpoint(params.checkpoint);

  for (const auto& entry : entries) {
    PreparedUtterance utt = prepare_utterance(entry);
    if (!params.external_masks.empty()) {
      auto loaded = load_external_masks(params.external_masks + "/" + entry.id + ".mask",
                                        utt.spec_mix.T, utt.spec_mix.F);
      utt.masks = loaded.masks;
      utt.iscm_s = compute_iscm(utt.spec_mix, utt.masks.speech);
      utt.iscm_n = compute_iscm(utt.spec_mix, utt.masks.noise);
    }
    const int ref = utt.cfg.array.reference_channel;
    const StftConfig& scfg = utt.stft_cfg;
    const long out_len = utt.out_len;

    auto evaluate = [&](const std::string& system, const std::vector<double>& est) {
      EvalRow row;
      row.utterance = entry.id;
      row.system = system;
      row.snr_db = metric_snr(est, utt.clean_ref);
      row.sdr_db = metric_sdr_fir(est, utt.clean_ref, params.sdr_taps);
      report.rows.push_back(row);
    };
    auto beamform = [&](const SCMSequence& s, const SCMSequence& n) {
      return enhance(utt.spec_mix, s, n, ref, scfg, out_len, params.mvdr_eps)
          .channels[0];
    };

    for (const auto& system : systems) {
      if (system == "mixture") {
        evaluate(system, std::vector<double>(utt.mixture.channels[(size_t)ref].begin(),
                                             utt.mixture.channels[(size_t)ref].begin() + out_len));
      } else if (system == "masking") {
        Spectrogram masked = Spectrogram::zeros(utt.spec_mix.T, utt.spec_mix.F, 1,
                                                utt.spec_mix.frame_len_samples,
                                                utt.spec_mix.hop_samples, utt.spec_mix.sample_rate);
        for (long t = 0; t < utt.spec_mix.T; ++t)
          for (long f = 0; f < utt.spec_mix.F; ++f)
            masked.at(t, f, 0) = utt.masks.speech.at(t, f) * utt.spec_mix.at(t, f, ref);
        evaluate(system, istft(masked, scfg, out_len).channels[0]);
      } else if (system == "tiv") {
        SCMSequence s = apply_weights(weights_time_invariant(utt.masks.speech), utt.iscm_s);
        SCMSequence n = apply_weights(weights_time_invariant(utt.masks.noise), utt.iscm_n);
        evaluate(system, beamform(s, n));
      } else if (system == "onl") {
        AttentionWeightMatrix w = weights_online(params.alpha, utt.spec_mix.T);
        evaluate(system, beamform(apply_weights(w, utt.iscm_s), apply_weights(w, utt.iscm_n)));
      } else if (system == "blk") {
        SCMSequence s = apply_weights(weights_blockwise(utt.masks.speech, params.block_l), utt.iscm_s);
        SCMSequence n = apply_weights(weights_blockwise(utt.masks.noise, params.block_l), utt.iscm_n);
        evaluate(system, beamform(s, n));
      } else if (system == "att") {
        BuiltScms built = build_scms(ck.net_s, ck.net_n, ck.att, utt.iscm_s, utt.iscm_n,
                                     params.smooth_l);
        evaluate(system, beamform(built.scm_s, built.scm_n));
      } else {
        throw std::invalid_argument("compare_systems: unknown system " + system);
      }
    }
  }
  return report;
}

inline void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("report: cannot write " + path);
  f.precision(10);
  f << "utterance,system,snr_db,sdr_db\n";
  for (const auto& r : report.rows)
    f << r.utterance << "," << r.system << "," << r.snr_db << "," << r.sdr_db << "\n";
  for (const auto& s : report.systems)
    f << "mean," << s << "," << report.mean_snr(s) << "," << report.mean_sdr(s) << "\n";
  for (const auto& n : report.notices) f << "# " << n << "\n";
}

// ---- CSV grids and plot scripts for heatmaps and beam patterns ----

inline void write_csv_grid(const std::string& path, const std::vector<double>& values, long rows,
                           long cols) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("grid: cannot write " + path);
  f.precision(8);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) f << (c ? "," : "") << values[(size_t)(r * cols + c)];
    f << "\n";
  }
}

inline void write_heatmap_plot_script(const std::string& path,
                                      const std::vector<std::string>& csv_files,
                                      const std::vector<std::string>& titles) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("plot script: cannot write " + path);
  f << "#!/usr/bin/env python3\n"
       "# Renders the exported CSV grids next to this script.\n"
       "import csv, sys\n"
       "import matplotlib.pyplot as plt\n\n"
       "def load(path):\n"
       "    with open(path) as fh:\n"
       "        return [[float(x) for x in row] for row in csv.reader(fh)]\n\n"
       "files = [\n";
  for (size_t i = 0; i < csv_files.size(); ++i)
    f << "    (\"" << csv_files[i] << "\", \"" << titles[i] << "\"),\n";
  f << "]\n"
       "fig, axes = plt.subplots(1, len(files), figsize=(6 * len(files), 5))\n"
       "axes = axes if len(files) > 1 else [axes]\n"
       "for ax, (path, title) in zip(axes, files):\n"
       "    grid = load(path)\n"
       "    im = ax.imshow(grid, origin=\"lower\", aspect=\"auto\", cmap=\"viridis\")\n"
       "    ax.set_title(title)\n"
       "    ax.set_xlabel(\"key frame\")\n"
       "    ax.set_ylabel(\"query frame\")\n"
       "    fig.colorbar(im, ax=ax)\n"
       "out = sys.argv[1] if len(sys.argv) > 1 else \"heatmaps.png\"\n"
       "fig.savefig(out, dpi=120, bbox_inches=\"tight\")\n"
       "print(out)\n";
}

inline void write_beampattern_plot_script(const std::string& path,
                                          const std::vector<std::string>& csv_files,
                                          const std::vector<double>& true_azimuths) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("plot script: cannot write " + path);
  f << "#!/usr/bin/env python3\n"
       "# Polar beam patterns; column 0 is azimuth in degrees, later columns\n"
       "# are gains in dB per probe frequency.\n"
       "import csv, math, sys\n"
       "import matplotlib.pyplot as plt\n\n"
       "def load(path):\n"
       "    with open(path) as fh:\n"
       "        return [[float(x) for x in row] for row in csv.reader(fh)]\n\n"
       "files = [\n";
  for (size_t i = 0; i < csv_files.size(); ++i)
    f << "    (\"" << csv_files[i] << "\", " << true_azimuths[i] << "),\n";
  f << "]\n"
       "fig, axes = plt.subplots(1, len(files), figsize=(4 * len(files), 4),\n"
       "                         subplot_kw={\"projection\": \"polar\"})\n"
       "axes = axes if len(files) > 1 else [axes]\n"
       "for ax, (path, true_az) in zip(axes, files):\n"
       "    rows = load(path)\n"
       "    az = [math.radians(r[0]) for r in rows]\n"
       "    for k in range(1, len(rows[0])):\n"
       "        ax.plot(az, [r[k] for r in rows])\n"
       "    ax.axvline(math.radians(true_az), color=\"black\")\n"
       "    ax.set_title(f\"true {true_az:.0f} deg\")\n"
       "out = sys.argv[1] if len(sys.argv) > 1 else \"beampatterns.png\"\n"
       "fig.savefig(out, dpi=120, bbox_inches=\"tight\")\n"
       "print(out)\n";
}

// Speech activity from the framewise mask sum: a frame is active when its
// mask mass reaches the given fraction of the maximum frame's mass.
inline std::vector<bool> active_frames(const TimeFrequencyMask& mask_s, double fraction = 0.2) {
  std::vector<bool> active((size_t)mask_s.T, false);
  double mx = 0;
  for (long t = 0; t < mask_s.T; ++t) mx = std::max(mx, mask_s.frame_sum(t));
  for (long t = 0; t < mask_s.T; ++t)
    active[(size_t)t] = mask_s.frame_sum(t) >= fraction * mx;
  return active;
}

// Visualization-weight export for both networks of a checkpoint: binary
// containers, CSV grids, and a plot script.
inline void export_attention_heatmaps(const PreparedUtterance& utt, const AttentionCheckpoint& ck,
                                      long smooth_l, const std::string& out_prefix) {
  BuiltScms built = build_scms(ck.net_s, ck.net_n, ck.att, utt.iscm_s, utt.iscm_n, smooth_l);
  AttentionWeightMatrix vis_s = visualization_weights(built.weights_s, utt.masks.speech);
  AttentionWeightMatrix vis_n = visualization_weights(built.weights_n, utt.masks.noise);
  save_weight_matrix(out_prefix + "_speech.wts", vis_s);
  save_weight_matrix(out_prefix + "_noise.wts", vis_n);
  write_csv_grid(out_prefix + "_speech.csv", vis_s.w, vis_s.T, vis_s.T);
  write_csv_grid(out_prefix + "_noise.csv", vis_n.w, vis_n.T, vis_n.T);
  write_heatmap_plot_script(out_prefix + "_plot.py",
                            {out_prefix + "_speech.csv", out_prefix + "_noise.csv"},
                            {"speech attention", "noise attention"});
}

}  // namespace movebeam
