#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/config.hpp"
#include "movebeam/rng.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/wav.hpp"

namespace movebeam {

constexpr double kSpeedOfSound = 343.0;  // m/s

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

struct ArrayGeometry {
  std::vector<Vec3> mics;  // room coordinates, meters
  int reference_channel = 0;

  long num_channels() const { return (long)mics.size(); }
  Vec3 centroid() const {
    Vec3 c;
    for (const auto& m : mics) c = c + m;
    return c * (1.0 / (double)mics.size());
  }
  void validate(const Vec3& room) const {
    if (mics.empty()) throw std::invalid_argument("geometry: need at least one microphone");
    if (reference_channel < 0 || reference_channel >= (int)mics.size())
      throw std::invalid_argument("geometry: reference channel out of range");
    for (const auto& m : mics)
      if (m.x <= 0 || m.y <= 0 || m.z <= 0 || m.x >= room.x || m.y >= room.y || m.z >= room.z)
        throw std::invalid_argument("geometry: microphone outside the room");
  }
};

// Harmonic source with on/off amplitude segments; the pauses create the
// speech-inactive regions the noise statistics need.
struct SyntheticSourceSpec {
  double duration_s = 2.0;
  double f0_min_hz = 100.0, f0_max_hz = 250.0;
  double seg_min_s = 0.2, seg_max_s = 0.5;
  double edge_silence_s = 0.25;  // enforced silence at both ends
  double peak = 0.5;
};

struct NoiseSpec {
  int num_sources = 8;      // static point sources
  double wall_offset = 0.1;  // shell distance inside the walls, meters
};

enum class TrajectoryKind { kLine, kCircle, kFixed };

inline std::string trajectory_kind_name(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::kLine: return "line";
    case TrajectoryKind::kCircle: return "circle";
    case TrajectoryKind::kFixed: return "fixed";
  }
  return "line";
}

inline TrajectoryKind trajectory_kind_from(const std::string& s) {
  if (s == "line") return TrajectoryKind::kLine;
  if (s == "circle") return TrajectoryKind::kCircle;
  if (s == "fixed") return TrajectoryKind::kFixed;
  throw std::invalid_argument("unknown trajectory kind: " + s);
}

// Full description of one simulated utterance.
struct SceneConfig {
  Vec3 room{4.0, 4.0, 2.5};
  double t60 = 0.2;
  std::vector<Vec3> trajectory;  // source positions, in room coordinates
  TrajectoryKind kind = TrajectoryKind::kLine;
  double snr_db = 5.0;
  std::string source_wav;  // empty -> synthetic source
  SyntheticSourceSpec synth;
  NoiseSpec noise;
  ArrayGeometry array;
  uint64_t seed = 1;
  int sample_rate = 8000;
  double stft_frame_ms = 32.0, stft_hop_ms = 8.0;
  double crossfade_ms = 8.0;
  int max_order = 20;

  StftConfig stft() const {
    StftConfig cfg;
    cfg.frame_ms = stft_frame_ms;
    cfg.hop_ms = stft_hop_ms;
    cfg.sample_rate = sample_rate;
    return cfg;
  }

  void validate() const {
    if (t60 < 0.05 || t60 > 1.0) throw std::invalid_argument("scene: t60 outside [0.05, 1.0]");
    if (!std::isfinite(snr_db)) throw std::invalid_argument("scene: snr must be finite");
    if (trajectory.empty()) throw std::invalid_argument("scene: empty trajectory");
    for (const auto& p : trajectory)
      if (p.x <= 0 || p.y <= 0 || p.z <= 0 || p.x >= room.x || p.y >= room.y || p.z >= room.z)
        throw std::invalid_argument("scene: trajectory point outside the room");
    array.validate(room);
  }
};

inline void scene_to_config(const SceneConfig& s, TextConfig& c) {
  c.set_vec("scene.room", {s.room.x, s.room.y, s.room.z});
  c.set_double("scene.t60", s.t60);
  c.set("scene.trajectory_kind", trajectory_kind_name(s.kind));
  std::vector<double> flat;
  for (const auto& p : s.trajectory) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  c.set_vec("scene.trajectory", flat);
  c.set_double("scene.snr_db", s.snr_db);
  c.set("scene.source_wav", s.source_wav);
  c.set_int("scene.seed", (long)s.seed);
  c.set_int("scene.sample_rate", s.sample_rate);
  c.set_double("scene.stft_frame_ms", s.stft_frame_ms);
  c.set_double("scene.stft_hop_ms", s.stft_hop_ms);
  c.set_double("scene.crossfade_ms", s.crossfade_ms);
  c.set_int("scene.max_order", s.max_order);
  c.set_double("synth.duration_s", s.synth.duration_s);
  c.set_double("synth.f0_min_hz", s.synth.f0_min_hz);
  c.set_double("synth.f0_max_hz", s.synth.f0_max_hz);
  c.set_double("synth.seg_min_s", s.synth.seg_min_s);
  c.set_double("synth.seg_max_s", s.synth.seg_max_s);
  c.set_double("synth.edge_silence_s", s.synth.edge_silence_s);
  c.set_double("synth.peak", s.synth.peak);
  c.set_int("noise.num_sources", s.noise.num_sources);
  c.set_double("noise.wall_offset", s.noise.wall_offset);
  std::vector<double> mics;
  for (const auto& m : s.array.mics) {
    mics.push_back(m.x);
    mics.push_back(m.y);
    mics.push_back(m.z);
  }
  c.set_vec("array.mics", mics);
  c.set_int("array.reference_channel", s.array.reference_channel);
}

inline SceneConfig scene_from_config(const TextConfig& c) {
  SceneConfig s;
  auto room = c.get_vec("scene.room");
  if (room.size() != 3) throw std::invalid_argument("scene.room needs 3 values");
  s.room = {room[0], room[1], room[2]};
  s.t60 = c.get_double("scene.t60");
  s.kind = trajectory_kind_from(c.get_str("scene.trajectory_kind"));
  auto flat = c.get_vec("scene.trajectory");
  if (flat.size() % 3 != 0 || flat.empty()) throw std::invalid_argument("scene.trajectory needs 3k values");
  for (size_t i = 0; i + 3 <= flat.size(); i += 3) s.trajectory.push_back({flat[i], flat[i + 1], flat[i + 2]});
  s.snr_db = c.get_double("scene.snr_db");
  s.source_wav = c.get_str("scene.source_wav", "");
  s.seed = (uint64_t)c.get_int("scene.seed");
  s.sample_rate = (int)c.get_int("scene.sample_rate");
  s.stft_frame_ms = c.get_double("scene.stft_frame_ms");
  s.stft_hop_ms = c.get_double("scene.stft_hop_ms");
  s.crossfade_ms = c.get_double("scene.crossfade_ms");
  s.max_order = (int)c.get_int("scene.max_order");
  s.synth.duration_s = c.get_double("synth.duration_s");
  s.synth.f0_min_hz = c.get_double("synth.f0_min_hz");
  s.synth.f0_max_hz = c.get_double("synth.f0_max_hz");
  s.synth.seg_min_s = c.get_double("synth.seg_min_s");
  s.synth.seg_max_s = c.get_double("synth.seg_max_s");
  s.synth.edge_silence_s = c.get_double("synth.edge_silence_s");
  s.synth.peak = c.get_double("synth.peak");
  s.noise.num_sources = (int)c.get_int("noise.num_sources");
  s.noise.wall_offset = c.get_double("noise.wall_offset");
  auto mics = c.get_vec("array.mics");
  if (mics.size() % 3 != 0 || mics.empty()) throw std::invalid_argument("array.mics needs 3k values");
  for (size_t i = 0; i + 3 <= mics.size(); i += 3) s.array.mics.push_back({mics[i], mics[i + 1], mics[i + 2]});
  s.array.reference_channel = (int)c.get_int("array.reference_channel");
  return s;
}

// Image-method room impulse responses along a trajectory.
struct RirSet {
  long P = 0, C = 0, taps = 0;
  int sample_rate = 0;
  std::vector<double> h;  // [P][C][taps]

  double* rir(long p, long c) { return &h[(size_t)((p * C + c) * taps)]; }
  const double* rir(long p, long c) const { return &h[(size_t)((p * C + c) * taps)]; }
};

namespace sim {

// Sabine absorption for a uniform reflection coefficient on all surfaces.
inline double sabine_reflection(const Vec3& room, double t60) {
  double V = room.x * room.y * room.z;
  double S = 2.0 * (room.x * room.y + room.x * room.z + room.y * room.z);
  double alpha = 0.161 * V / (t60 * S);
  if (alpha >= 1.0)
    throw std::invalid_argument("simulate_rir: t60 too small, Sabine reflection coefficient <= 0");
  return std::sqrt(1.0 - alpha);
}

// Allen-Berkley image method, uniform walls, omnidirectional source and
// microphones. Fractional delays are spread linearly over the two adjacent
// taps, which keeps sub-sample inter-channel phase while staying causal.
inline void image_method_rir(const Vec3& room, double t60, const Vec3& src, const Vec3& mic,
                             int sample_rate, int max_order, long taps, double* out) {
  const double beta = sabine_reflection(room, t60);
  const double diag = room.norm();
  const double max_dist = std::min(10.0 * diag, kSpeedOfSound * (double)(taps + 1) / sample_rate);
  std::fill(out, out + taps, 0.0);

  const double rd[3] = {room.x, room.y, room.z};
  const double sp[3] = {src.x, src.y, src.z};
  const double mp[3] = {mic.x, mic.y, mic.z};
  long nmax[3];
  for (int d = 0; d < 3; ++d)
    nmax[d] = std::min<long>(max_order / 2 + 1, (long)std::ceil(max_dist / (2.0 * rd[d])) + 1);

  for (int qx = 0; qx <= 1; ++qx)
    for (int qy = 0; qy <= 1; ++qy)
      for (int qz = 0; qz <= 1; ++qz)
        for (long nx = -nmax[0]; nx <= nmax[0]; ++nx)
          for (long ny = -nmax[1]; ny <= nmax[1]; ++ny)
            for (long nz = -nmax[2]; nz <= nmax[2]; ++nz) {
              const long q[3] = {qx, qy, qz};
              const long n[3] = {nx, ny, nz};
              long refl = 0;
              double dist2 = 0;
              for (int d = 0; d < 3; ++d) {
                double img = (1 - 2 * (double)q[d]) * sp[d] + 2.0 * (double)n[d] * rd[d];
                double diff = img - mp[d];
                dist2 += diff * diff;
                refl += std::labs(n[d] - q[d]) + std::labs(n[d]);
              }
              if (refl > max_order) continue;
              double dist = std::sqrt(dist2);
              if (dist > max_dist) continue;
              double delay = dist / kSpeedOfSound * sample_rate;
              double amp = std::pow(beta, (double)refl) / (4.0 * M_PI * std::max(dist, 1e-2));
              long i0 = (long)std::floor(delay);
              double frac = delay - (double)i0;
              if (i0 >= 0 && i0 < taps) out[i0] += amp * (1.0 - frac);
              if (i0 + 1 >= 0 && i0 + 1 < taps) out[i0 + 1] += amp * frac;
            }
}

inline long default_rir_taps(double t60, const Vec3& room, int sample_rate) {
  double span = std::max(t60 * 1.25, t60 + 0.05) + room.norm() / kSpeedOfSound;
  return (long)std::ceil(span * sample_rate);
}

}  // namespace sim

inline std::vector<double> simulate_rir(const Vec3& room, double t60, const Vec3& src,
                                        const Vec3& mic, int sample_rate, int max_order,
                                        long taps = 0) {
  if (src.x <= 0 || src.y <= 0 || src.z <= 0 || src.x >= room.x || src.y >= room.y || src.z >= room.z)
    throw std::invalid_argument("simulate_rir: source outside the room");
  if (mic.x <= 0 || mic.y <= 0 || mic.z <= 0 || mic.x >= room.x || mic.y >= room.y || mic.z >= room.z)
    throw std::invalid_argument("simulate_rir: microphone outside the room");
  if (t60 <= 0) throw std::invalid_argument("simulate_rir: t60 must be positive");
  if (taps <= 0) taps = sim::default_rir_taps(t60, room, sample_rate);
  std::vector<double> out((size_t)taps, 0.0);
  sim::image_method_rir(room, t60, src, mic, sample_rate, max_order, taps, out.data());
  return out;
}

inline RirSet simulate_rirs(const Vec3& room, double t60, const std::vector<Vec3>& trajectory,
                            const ArrayGeometry& geometry, int sample_rate, int max_order,
                            long taps = 0) {
  if (trajectory.empty()) throw std::invalid_argument("simulate_rirs: empty trajectory");
  if (taps <= 0) taps = sim::default_rir_taps(t60, room, sample_rate);
  RirSet set;
  set.P = (long)trajectory.size();
  set.C = geometry.num_channels();
  set.taps = taps;
  set.sample_rate = sample_rate;
  set.h.assign((size_t)(set.P * set.C * taps), 0.0);
  for (long p = 0; p < set.P; ++p)
    for (long c = 0; c < set.C; ++c) {
      auto rir = simulate_rir(room, t60, trajectory[(size_t)p], geometry.mics[(size_t)c],
                              sample_rate, max_order, taps);
      std::copy(rir.begin(), rir.end(), set.rir(p, c));
    }
  return set;
}

// Split the dry signal into one segment per trajectory point, convolve each
// with its RIR, and join adjacent segments with a linear cross-fade.
inline MultichannelWaveform render_moving_source(const std::vector<double>& dry, const RirSet& rirs,
                                                 long crossfade_samples) {
  const long P = rirs.P, C = rirs.C, taps = rirs.taps;
  const long n = (long)dry.size();
  if (n < P) throw std::invalid_argument("render_moving_source: dry signal shorter than trajectory");
  if (crossfade_samples < 0) throw std::invalid_argument("render_moving_source: negative crossfade");
  const long out_len = n + taps - 1;
  MultichannelWaveform out = MultichannelWaveform::zeros(C, out_len, rirs.sample_rate);

  const double seg = (double)n / (double)P;
  crossfade_samples = std::min(crossfade_samples, (long)seg);  // ramps must not overlap
  std::vector<double> gated;
  for (long p = 0; p < P; ++p) {
    // Gains: 1 inside the segment, linear ramps of crossfade_samples centered
    // on the segment boundaries, 0 elsewhere. Adjacent gains sum to 1.
    double lo_b = seg * (double)p;
    double hi_b = seg * (double)(p + 1);
    long lo = std::max<long>(0, (long)std::floor(lo_b - 0.5 * (double)crossfade_samples));
    long hi = std::min<long>(n, (long)std::ceil(hi_b + 0.5 * (double)crossfade_samples));
    gated.assign((size_t)(hi - lo), 0.0);
    for (long i = lo; i < hi; ++i) {
      double g = 1.0;
      if (p > 0 && crossfade_samples > 0) {
        double r = ((double)i - (lo_b - 0.5 * (double)crossfade_samples)) / (double)crossfade_samples;
        g = std::min(g, std::max(0.0, std::min(1.0, r)));
      } else if (p > 0) {
        g = std::min(g, (double)i >= lo_b ? 1.0 : 0.0);
      }
      if (p + 1 < P && crossfade_samples > 0) {
        double r = ((hi_b + 0.5 * (double)crossfade_samples) - (double)i) / (double)crossfade_samples;
        g = std::min(g, std::max(0.0, std::min(1.0, r)));
      } else if (p + 1 < P) {
        g = std::min(g, (double)i < hi_b ? 1.0 : 0.0);
      }
      gated[(size_t)(i - lo)] = dry[(size_t)i] * g;
    }
    for (long c = 0; c < C; ++c) {
      const double* h = rirs.rir(p, c);
      auto& dst = out.channels[(size_t)c];
      for (long i = 0; i < (long)gated.size(); ++i) {
        double x = gated[(size_t)i];
        if (x == 0.0) continue;
        for (long k = 0; k < taps; ++k) dst[(size_t)(lo + i + k)] += x * h[k];
      }
    }
  }
  return out;
}

// Sum of static white-noise point sources near the walls, convolved with
// their RIRs. Deterministic per seed.
inline MultichannelWaveform generate_diffuse_noise(const Vec3& room, double t60,
                                                   const ArrayGeometry& geometry, long samples,
                                                   int sample_rate, const NoiseSpec& spec,
                                                   uint64_t seed, int max_order = 20) {
  if (samples <= 0) throw std::invalid_argument("generate_diffuse_noise: duration must be positive");
  geometry.validate(room);
  const long C = geometry.num_channels();
  MultichannelWaveform out = MultichannelWaveform::zeros(C, samples, sample_rate);
  Rng pos_rng(Rng::derive(seed, 0));
  const double off = spec.wall_offset;
  const long taps = sim::default_rir_taps(t60, room, sample_rate);
  std::vector<double> white((size_t)samples);
  for (int k = 0; k < spec.num_sources; ++k) {
    // Position on the inward-offset box shell: pick a face by area, then a
    // uniform point on it.
    double ax = (room.y - 2 * off) * (room.z - 2 * off);
    double ay = (room.x - 2 * off) * (room.z - 2 * off);
    double az = (room.x - 2 * off) * (room.y - 2 * off);
    double pick = pos_rng.uniform() * 2.0 * (ax + ay + az);
    Vec3 p;
    double u = pos_rng.uniform(), v = pos_rng.uniform();
    if (pick < 2 * ax) {
      p = {pick < ax ? off : room.x - off, off + u * (room.y - 2 * off), off + v * (room.z - 2 * off)};
    } else if (pick < 2 * ax + 2 * ay) {
      p = {off + u * (room.x - 2 * off), (pick - 2 * ax) < ay ? off : room.y - off,
           off + v * (room.z - 2 * off)};
    } else {
      p = {off + u * (room.x - 2 * off), off + v * (room.y - 2 * off),
           (pick - 2 * ax - 2 * ay) < az ? off : room.z - off};
    }
    Rng sig_rng(Rng::derive(seed, (uint64_t)(k + 1)));
    for (long i = 0; i < samples; ++i) white[(size_t)i] = sig_rng.normal();
    for (long c = 0; c < C; ++c) {
      auto h = simulate_rir(room, t60, p, geometry.mics[(size_t)c], sample_rate, max_order, taps);
      auto& dst = out.channels[(size_t)c];
      for (long i = 0; i < samples; ++i) {
        double x = white[(size_t)i];
        if (x == 0.0) continue;
        long kmax = std::min(taps, samples - i);
        for (long t = 0; t < kmax; ++t) dst[(size_t)(i + t)] += x * h[(size_t)t];
      }
    }
  }
  return out;
}

struct SimulatedUtterance {
  MultichannelWaveform mixture, clean_reverberant, noise;
  SceneConfig config;
  std::vector<long> trajectory_frame_map;  // frame index -> trajectory point
};

// Scale the noise so the reference-channel SNR equals snr_db exactly, then
// mix. Noise longer than the clean signal is truncated.
inline SimulatedUtterance mix_at_snr(const MultichannelWaveform& clean,
                                     const MultichannelWaveform& noise, double snr_db,
                                     int ref_channel) {
  clean.validate();
  noise.validate();
  if (clean.num_channels() != noise.num_channels())
    throw std::invalid_argument("mix_at_snr: channel counts differ");
  if (noise.num_samples() < clean.num_samples())
    throw std::invalid_argument("mix_at_snr: noise shorter than clean signal");
  const long n = clean.num_samples();
  const long C = clean.num_channels();
  double pc = 0, pn = 0;
  for (long i = 0; i < n; ++i) {
    double s = clean.channels[(size_t)ref_channel][(size_t)i];
    double w = noise.channels[(size_t)ref_channel][(size_t)i];
    pc += s * s;
    pn += w * w;
  }
  if (pc <= 0) throw std::invalid_argument("mix_at_snr: silent clean signal, SNR undefined");
  if (pn <= 0) throw std::invalid_argument("mix_at_snr: silent noise signal, SNR undefined");
  double gain = std::sqrt(pc / pn * std::pow(10.0, -snr_db / 10.0));

  SimulatedUtterance out;
  out.clean_reverberant = clean;
  out.noise = MultichannelWaveform::zeros(C, n, clean.sample_rate);
  out.mixture = MultichannelWaveform::zeros(C, n, clean.sample_rate);
  for (long c = 0; c < C; ++c)
    for (long i = 0; i < n; ++i) {
      double w = gain * noise.channels[(size_t)c][(size_t)i];
      out.noise.channels[(size_t)c][(size_t)i] = w;
      out.mixture.channels[(size_t)c][(size_t)i] = clean.channels[(size_t)c][(size_t)i] + w;
    }
  return out;
}

// Harmonic stack with slow pitch drift, gated by random on/off segments with
// raised-cosine edges.
inline std::vector<double> synth_source(const SyntheticSourceSpec& spec, int sample_rate, Rng& rng) {
  const long n = (long)std::llround(spec.duration_s * sample_rate);
  std::vector<double> x((size_t)n, 0.0);
  const double f0 = rng.uniform(spec.f0_min_hz, spec.f0_max_hz);
  const double drift_rate = rng.uniform(0.2, 0.5);
  const double drift_phase = rng.uniform(0.0, 2.0 * M_PI);
  const long n_harm = std::max<long>(1, (long)std::floor(0.45 * sample_rate / f0 / 1.1));
  std::vector<double> amp((size_t)n_harm), phase((size_t)n_harm);
  for (long h = 0; h < n_harm; ++h) {
    amp[(size_t)h] = (1.0 / (double)(h + 1)) * rng.uniform(0.7, 1.0);
    phase[(size_t)h] = rng.uniform(0.0, 2.0 * M_PI);
  }
  // Envelope: edge silences, then alternating on/off segments (first and last
  // interior segments on).
  std::vector<double> env((size_t)n, 0.0);
  long edge = (long)std::llround(spec.edge_silence_s * sample_rate);
  long pos = edge;
  bool on = true;
  while (pos < n - edge) {
    long seg = (long)std::llround(rng.uniform(spec.seg_min_s, spec.seg_max_s) * sample_rate);
    long end = std::min(n - edge, pos + seg);
    if (on)
      for (long i = pos; i < end; ++i) env[(size_t)i] = 1.0;
    pos = end;
    on = !on;
  }
  // 10 ms raised-cosine ramps.
  long ramp = std::max<long>(1, sample_rate / 100);
  std::vector<double> sm((size_t)n, 0.0);
  for (long i = 0; i < n; ++i) {
    if (env[(size_t)i] == 0.0) continue;
    for (long j = std::max<long>(0, i - ramp); j <= std::min(n - 1, i + ramp); ++j) {
      double w = 0.5 + 0.5 * std::cos(M_PI * (double)(j - i) / (double)ramp);
      sm[(size_t)j] = std::max(sm[(size_t)j], w);
    }
  }
  double ph = 0.0;
  for (long i = 0; i < n; ++i) {
    double tsec = (double)i / sample_rate;
    double f_inst = f0 * (1.0 + 0.05 * std::sin(2.0 * M_PI * drift_rate * tsec + drift_phase));
    ph += 2.0 * M_PI * f_inst / sample_rate;
    double s = 0;
    for (long h = 0; h < n_harm; ++h) s += amp[(size_t)h] * std::sin((double)(h + 1) * ph + phase[(size_t)h]);
    x[(size_t)i] = s * sm[(size_t)i];
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (auto& v : x) v *= spec.peak / peak;
  return x;
}

inline std::vector<Vec3> make_line_trajectory(const Vec3& start, const Vec3& end, long points) {
  std::vector<Vec3> out;
  for (long p = 0; p < points; ++p) {
    double a = points == 1 ? 0.0 : (double)p / (double)(points - 1);
    out.push_back(start + (end - start) * a);
  }
  return out;
}

inline std::vector<Vec3> make_circle_trajectory(const Vec3& center, double radius, long points,
                                                double start_angle_rad = 0.0) {
  std::vector<Vec3> out;
  for (long p = 0; p < points; ++p) {
    double a = start_angle_rad + 2.0 * M_PI * (double)p / (double)points;
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a), center.z});
  }
  return out;
}

// Compose source synthesis, trajectory RIRs, rendering, diffuse noise and SNR
// mixing into one utterance. Pure function of the config.
inline SimulatedUtterance generate_scene(const SceneConfig& config) {
  config.validate();
  Rng rng(Rng::derive(config.seed, 0x5ce9e));
  std::vector<double> dry;
  if (!config.source_wav.empty()) {
    MultichannelWaveform w = read_wav(config.source_wav);
    if (w.sample_rate != config.sample_rate)
      throw std::invalid_argument("generate_scene: source wav sample rate mismatch");
    dry = w.channels[0];
  } else {
    dry = synth_source(config.synth, config.sample_rate, rng);
  }
  const std::vector<Vec3>& traj = config.trajectory;
  RirSet rirs = simulate_rirs(config.room, config.t60, traj, config.array, config.sample_rate,
                              config.max_order);
  long crossfade = (long)std::llround(config.crossfade_ms * config.sample_rate / 1000.0);
  MultichannelWaveform clean = render_moving_source(dry, rirs, crossfade);
  MultichannelWaveform noise =
      generate_diffuse_noise(config.room, config.t60, config.array, clean.num_samples(),
                             config.sample_rate, config.noise, Rng::derive(config.seed, 0xd1ff));
  SimulatedUtterance utt =
      mix_at_snr(clean, noise, config.snr_db, config.array.reference_channel);
  utt.config = config;
  const long hop = config.stft().hop_samples();
  const long T = dsp::num_frames(utt.mixture.num_samples(), hop);
  const long P = (long)traj.size();
  utt.trajectory_frame_map.resize((size_t)T);
  for (long t = 0; t < T; ++t)
    utt.trajectory_frame_map[(size_t)t] = std::min(P - 1, t * P / T);
  return utt;
}

// ---- dataset manifest: one utterance per line ----
// id <TAB> cfg <TAB> mixture <TAB> clean <TAB> noise <TAB> seed <TAB> digest

struct ManifestEntry {
  std::string id, cfg_path, mixture_path, clean_path, noise_path;
  uint64_t seed = 0;
  std::string digest;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  for (const auto& e : entries)
    f << e.id << "\t" << e.cfg_path << "\t" << e.mixture_path << "\t" << e.clean_path << "\t"
      << e.noise_path << "\t" << e.seed << "\t" << e.digest << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> parts;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      parts.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (parts.size() != 7)
      throw std::runtime_error("manifest: bad line " + std::to_string(lineno) + " in " + path);
    ManifestEntry e;
    e.id = parts[0];
    e.cfg_path = parts[1];
    e.mixture_path = parts[2];
    e.clean_path = parts[3];
    e.noise_path = parts[4];
    e.seed = (uint64_t)std::stoull(parts[5]);
    e.digest = parts[6];
    entries.push_back(std::move(e));
  }
  return entries;
}

// Render one scene to disk as a WAV triplet plus its config snapshot.
inline ManifestEntry write_utterance(const std::string& dir, const std::string& id,
                                     const SimulatedUtterance& utt) {
  std::filesystem::create_directories(dir);
  TextConfig cfg;
  scene_to_config(utt.config, cfg);
  ManifestEntry e;
  e.id = id;
  e.cfg_path = dir + "/" + id + ".cfg";
  e.mixture_path = dir + "/" + id + "_mix.wav";
  e.clean_path = dir + "/" + id + "_clean.wav";
  e.noise_path = dir + "/" + id + "_noise.wav";
  e.seed = utt.config.seed;
  e.digest = cfg.digest();
  cfg.write_file(e.cfg_path);
  write_wav(e.mixture_path, utt.mixture);
  write_wav(e.clean_path, utt.clean_reverberant);
  write_wav(e.noise_path, utt.noise);
  return e;
}

}  // namespace movebeam
