#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace movebeam {

// Real multichannel audio, amplitude nominally in [-1, 1].
struct MultichannelWaveform {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;

  long num_channels() const { return (long)channels.size(); }
  long num_samples() const { return channels.empty() ? 0 : (long)channels[0].size(); }

  void validate() const {
    if (channels.empty()) throw std::invalid_argument("waveform: no channels");
    if (sample_rate <= 0) throw std::invalid_argument("waveform: sample_rate must be > 0");
    for (const auto& c : channels)
      if (c.size() != channels[0].size())
        throw std::invalid_argument("waveform: channels differ in length");
  }

  static MultichannelWaveform zeros(long channels, long samples, int sample_rate) {
    MultichannelWaveform w;
    w.channels.assign((size_t)channels, std::vector<double>((size_t)samples, 0.0));
    w.sample_rate = sample_rate;
    return w;
  }
};

struct StftConfig {
  double frame_ms = 64.0;
  double hop_ms = 16.0;
  enum class Window { kHann } window = Window::kHann;
  int sample_rate = 16000;

  long frame_samples() const { return (long)std::llround(frame_ms * sample_rate / 1000.0); }
  long hop_samples() const { return (long)std::llround(hop_ms * sample_rate / 1000.0); }
  long num_bins() const { return frame_samples() / 2 + 1; }

  void validate() const {
    long n = frame_samples(), h = hop_samples();
    if (sample_rate <= 0) throw std::invalid_argument("stft: sample_rate must be > 0");
    if (n <= 0 || h <= 0) throw std::invalid_argument("stft: frame and hop must be positive");
    if (h > n) throw std::invalid_argument("stft: hop exceeds frame length");
    if (n % h != 0) throw std::invalid_argument("stft: hop must divide frame length");
    if ((n & (n - 1)) != 0) throw std::invalid_argument("stft: frame length must be a power of two samples");
  }
};

// Complex STFT coefficients, indexed [frame][bin][channel].
struct Spectrogram {
  long T = 0, F = 0, C = 0;
  long frame_len_samples = 0, hop_samples = 0;
  int sample_rate = 0;
  std::vector<std::complex<double>> coeffs;

  std::complex<double>& at(long t, long f, long c) { return coeffs[(size_t)((t * F + f) * C + c)]; }
  std::complex<double> at(long t, long f, long c) const { return coeffs[(size_t)((t * F + f) * C + c)]; }

  static Spectrogram zeros(long T, long F, long C, long frame_len, long hop, int sr) {
    Spectrogram s;
    s.T = T;
    s.F = F;
    s.C = C;
    s.frame_len_samples = frame_len;
    s.hop_samples = hop;
    s.sample_rate = sr;
    s.coeffs.assign((size_t)(T * F * C), {0.0, 0.0});
    return s;
  }
};

namespace dsp {

// In-place iterative radix-2 FFT. inverse=true applies conjugate transform
// and 1/N scaling.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / (double)len * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= (double)n;
}

// One-sided spectrum of a real frame (length N, power of two): F = N/2+1 bins.
inline void rfft(const double* frame, long n, std::complex<double>* out) {
  std::vector<std::complex<double>> buf((size_t)n);
  for (long i = 0; i < n; ++i) buf[(size_t)i] = {frame[i], 0.0};
  fft_radix2(buf, false);
  for (long k = 0; k <= n / 2; ++k) out[k] = buf[(size_t)k];
}

// Real frame from a one-sided spectrum (Hermitian expansion, 1/N scaling).
inline void irfft(const std::complex<double>* spec, long n, double* frame) {
  std::vector<std::complex<double>> buf((size_t)n);
  for (long k = 0; k <= n / 2; ++k) buf[(size_t)k] = spec[k];
  for (long k = n / 2 + 1; k < n; ++k) buf[(size_t)k] = std::conj(spec[n - k]);
  fft_radix2(buf, true);
  for (long i = 0; i < n; ++i) frame[i] = buf[(size_t)i].real();
}

// Periodic Hann window.
inline std::vector<double> hann_window(long n) {
  std::vector<double> w((size_t)n);
  for (long i = 0; i < n; ++i) w[(size_t)i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (double)i / (double)n);
  return w;
}

// Reflect index for padding ("abcd" -> "...cb|abcd|cb...").
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

inline long num_frames(long samples, long hop) { return (samples + hop - 1) / hop; }

// Analysis of one channel: frame t is centered at sample t*hop via N/2
// reflect padding on both ends. Output is row-major [T][F].
inline std::vector<std::complex<double>> stft_channel(const double* x, long samples, long n, long hop) {
  const long T = num_frames(samples, hop);
  const long F = n / 2 + 1;
  const long pad = n / 2;
  const auto win = hann_window(n);
  std::vector<std::complex<double>> out((size_t)(T * F));
  std::vector<double> frame((size_t)n);
  for (long t = 0; t < T; ++t) {
    for (long i = 0; i < n; ++i) {
      long src = t * hop + i - pad;
      frame[(size_t)i] = x[reflect_index(src, samples)] * win[(size_t)i];
    }
    rfft(frame.data(), n, &out[(size_t)(t * F)]);
  }
  return out;
}

// Squared-window overlap-add normalization weights for T frames.
inline std::vector<double> ola_norm(long T, long n, long hop) {
  const auto win = hann_window(n);
  std::vector<double> wsum((size_t)((T - 1) * hop + n), 0.0);
  for (long t = 0; t < T; ++t)
    for (long i = 0; i < n; ++i) wsum[(size_t)(t * hop + i)] += win[(size_t)i] * win[(size_t)i];
  return wsum;
}

// Synthesis of one channel: windowed overlap-add with per-sample
// normalization, then the reflect-pad margin is cropped. spec is [T][F].
inline void istft_channel(const std::complex<double>* spec, long T, long n, long hop,
                          long out_len, double* out) {
  const long F = n / 2 + 1;
  const long pad = n / 2;
  const auto win = hann_window(n);
  const auto wsum = ola_norm(T, n, hop);
  std::vector<double> acc(wsum.size(), 0.0);
  std::vector<double> frame((size_t)n);
  for (long t = 0; t < T; ++t) {
    irfft(&spec[(size_t)(t * F)], n, frame.data());
    for (long i = 0; i < n; ++i) acc[(size_t)(t * hop + i)] += frame[(size_t)i] * win[(size_t)i];
  }
  for (size_t i = 0; i < acc.size(); ++i) acc[i] = wsum[i] > 1e-300 ? acc[i] / wsum[i] : 0.0;
  for (long j = 0; j < out_len; ++j) {
    long src = pad + j;
    out[j] = src < (long)acc.size() ? acc[(size_t)src] : 0.0;
  }
}

// Adjoint of istft_channel as a linear map from the (re, im) coefficient
// pairs to the output samples. g has out_len entries; grad is [T][F] pairs
// accumulated as d/d(re), d/d(im).
inline void istft_channel_adjoint(const double* g, long out_len, long T, long n, long hop,
                                  std::complex<double>* grad) {
  const long F = n / 2 + 1;
  const long pad = n / 2;
  const auto win = hann_window(n);
  const auto wsum = ola_norm(T, n, hop);
  std::vector<double> acc(wsum.size(), 0.0);
  for (long j = 0; j < out_len; ++j) {
    long dst = pad + j;
    if (dst < (long)acc.size()) acc[(size_t)dst] += g[j];
  }
  for (size_t i = 0; i < acc.size(); ++i) acc[i] = wsum[i] > 1e-300 ? acc[i] / wsum[i] : 0.0;
  std::vector<double> frame((size_t)n);
  std::vector<std::complex<double>> spec((size_t)F);
  for (long t = 0; t < T; ++t) {
    for (long i = 0; i < n; ++i) frame[(size_t)i] = acc[(size_t)(t * hop + i)] * win[(size_t)i];
    rfft(frame.data(), n, spec.data());
    for (long k = 0; k < F; ++k) {
      // d frame_n / d re(X_k) carries weight 2/N except at DC and Nyquist.
      double s = (k == 0 || k == n / 2) ? 1.0 / (double)n : 2.0 / (double)n;
      double gim = (k == 0 || k == n / 2) ? 0.0 : s * spec[(size_t)k].imag();
      grad[(size_t)(t * F + k)] += std::complex<double>(s * spec[(size_t)k].real(), gim);
    }
  }
}

}  // namespace dsp

inline Spectrogram stft(const MultichannelWaveform& wave, const StftConfig& cfg) {
  wave.validate();
  cfg.validate();
  if (wave.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("stft: waveform sample rate does not match config");
  if (wave.num_samples() == 0) throw std::invalid_argument("stft: empty waveform");
  const long n = cfg.frame_samples(), hop = cfg.hop_samples();
  const long T = dsp::num_frames(wave.num_samples(), hop);
  const long F = cfg.num_bins();
  Spectrogram spec = Spectrogram::zeros(T, F, wave.num_channels(), n, hop, cfg.sample_rate);
  for (long c = 0; c < wave.num_channels(); ++c) {
    auto ch = dsp::stft_channel(wave.channels[(size_t)c].data(), wave.num_samples(), n, hop);
    for (long t = 0; t < T; ++t)
      for (long f = 0; f < F; ++f) spec.at(t, f, c) = ch[(size_t)(t * F + f)];
  }
  return spec;
}

inline MultichannelWaveform istft(const Spectrogram& spec, const StftConfig& cfg, long out_len) {
  cfg.validate();
  if (spec.F != cfg.num_bins() || spec.frame_len_samples != cfg.frame_samples() ||
      spec.hop_samples != cfg.hop_samples())
    throw std::invalid_argument("istft: spectrogram is inconsistent with config");
  if (spec.T <= 0 || spec.C <= 0) throw std::invalid_argument("istft: empty spectrogram");
  MultichannelWaveform out = MultichannelWaveform::zeros(spec.C, out_len, cfg.sample_rate);
  std::vector<std::complex<double>> ch((size_t)(spec.T * spec.F));
  for (long c = 0; c < spec.C; ++c) {
    for (long t = 0; t < spec.T; ++t)
      for (long f = 0; f < spec.F; ++f) ch[(size_t)(t * spec.F + f)] = spec.at(t, f, c);
    dsp::istft_channel(ch.data(), spec.T, cfg.frame_samples(), cfg.hop_samples(), out_len,
                       out.channels[(size_t)c].data());
  }
  return out;
}

// Single channel of a spectrogram as a [T][F] row-major vector.
inline std::vector<std::complex<double>> channel_slice(const Spectrogram& spec, long c) {
  std::vector<std::complex<double>> out((size_t)(spec.T * spec.F));
  for (long t = 0; t < spec.T; ++t)
    for (long f = 0; f < spec.F; ++f) out[(size_t)(t * spec.F + f)] = spec.at(t, f, c);
  return out;
}

}  // namespace movebeam
