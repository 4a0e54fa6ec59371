#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <filesystem>

#include "movebeam/rng.hpp"
#include "movebeam/signal.hpp"
#include "movebeam/wav.hpp"

using namespace movebeam;

namespace {

MultichannelWaveform random_wave(long channels, long samples, int sr, uint64_t seed) {
  MultichannelWaveform w = MultichannelWaveform::zeros(channels, samples, sr);
  Rng rng(seed);
  for (auto& ch : w.channels)
    for (auto& v : ch) v = rng.uniform(-0.9, 0.9);
  return w;
}

StftConfig table_cfg() {
  StftConfig cfg;  // 64 ms / 16 ms Hann at 16 kHz
  return cfg;
}

// Direct windowed DFT of one interior frame, the oracle for the FFT path.
std::vector<std::complex<double>> dft_frame_oracle(const std::vector<double>& x, long center,
                                                   long n) {
  auto win = dsp::hann_window(n);
  std::vector<std::complex<double>> out((size_t)(n / 2 + 1));
  for (long k = 0; k <= n / 2; ++k) {
    std::complex<double> s(0, 0);
    for (long i = 0; i < n; ++i) {
      double v = x[(size_t)(center - n / 2 + i)] * win[(size_t)i];
      double ang = -2.0 * M_PI * (double)k * (double)i / (double)n;
      s += v * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[(size_t)k] = s;
  }
  return out;
}

}  // namespace

TEST_CASE("stft shape: 64 ms frame at 16 kHz gives 513 bins") {
  auto wave = random_wave(2, 16000, 16000, 1);
  Spectrogram spec = stft(wave, table_cfg());
  REQUIRE(spec.F == 513);
  REQUIRE(spec.C == 2);
  REQUIRE(spec.T == (16000 + 255) / 256);  // ceil(samples / hop)
}

TEST_CASE("stft of a bin-centered sinusoid matches the direct DFT oracle") {
  StftConfig cfg = table_cfg();
  const long n = cfg.frame_samples();
  const long k0 = 32;  // bin-center frequency k0 * fs / N
  MultichannelWaveform wave = MultichannelWaveform::zeros(1, 16000, 16000);
  for (long i = 0; i < 16000; ++i)
    wave.channels[0][(size_t)i] = std::sin(2.0 * M_PI * (double)k0 * (double)i / (double)n);
  Spectrogram spec = stft(wave, cfg);

  const long t = 6;  // interior frame, no reflect padding in its span
  auto oracle = dft_frame_oracle(wave.channels[0], t * cfg.hop_samples(), n);
  for (long k = 0; k < spec.F; ++k)
    REQUIRE(std::abs(spec.at(t, k, 0) - oracle[(size_t)k]) < 1e-8);

  // Hann transform: side bins at half the main-bin magnitude, others tiny.
  double main = std::abs(spec.at(t, k0, 0));
  REQUIRE(main > 100.0);
  REQUIRE(std::abs(spec.at(t, k0 + 1, 0)) / main == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(std::abs(spec.at(t, k0 - 1, 0)) / main == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(std::abs(spec.at(t, k0 + 8, 0)) / main < 1e-9);
}

TEST_CASE("stft of silence is zero with the padded frame count") {
  MultichannelWaveform wave = MultichannelWaveform::zeros(1, 16000, 16000);
  Spectrogram spec = stft(wave, table_cfg());
  REQUIRE(spec.T == 63);
  for (const auto& z : spec.coeffs) REQUIRE(std::abs(z) == 0.0);
}

TEST_CASE("istft(stft(x)) reconstructs within 1e-10 of peak") {
  StftConfig cfg = table_cfg();
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    auto wave = random_wave(2, 12345, 16000, seed);
    Spectrogram spec = stft(wave, cfg);
    MultichannelWaveform rec = istft(spec, cfg, wave.num_samples());
    double peak = 0, err = 0;
    for (long c = 0; c < 2; ++c)
      for (long i = 0; i < wave.num_samples(); ++i) {
        peak = std::max(peak, std::abs(wave.channels[(size_t)c][(size_t)i]));
        err = std::max(err, std::abs(rec.channels[(size_t)c][(size_t)i] -
                                     wave.channels[(size_t)c][(size_t)i]));
      }
    REQUIRE(err < 1e-10 * peak);
  }
}

TEST_CASE("istft of a zero spectrogram is silence, and out_len truncates") {
  StftConfig cfg = table_cfg();
  Spectrogram spec = Spectrogram::zeros(20, cfg.num_bins(), 1, cfg.frame_samples(),
                                        cfg.hop_samples(), cfg.sample_rate);
  MultichannelWaveform out = istft(spec, cfg, 1000);
  REQUIRE(out.num_samples() == 1000);
  for (double v : out.channels[0]) REQUIRE(v == 0.0);

  auto wave = random_wave(1, 5000, 16000, 7);
  MultichannelWaveform full = istft(stft(wave, cfg), cfg, 5000);
  MultichannelWaveform cut = istft(stft(wave, cfg), cfg, 1234);
  REQUIRE(cut.num_samples() == 1234);
  for (long i = 0; i < 1234; ++i)
    REQUIRE(cut.channels[0][(size_t)i] == full.channels[0][(size_t)i]);
}

TEST_CASE("stft is linear") {
  StftConfig cfg = table_cfg();
  auto x = random_wave(1, 8000, 16000, 11);
  auto y = random_wave(1, 8000, 16000, 12);
  MultichannelWaveform z = MultichannelWaveform::zeros(1, 8000, 16000);
  const double a = 0.7, b = -1.3;
  for (long i = 0; i < 8000; ++i)
    z.channels[0][(size_t)i] = a * x.channels[0][(size_t)i] + b * y.channels[0][(size_t)i];
  Spectrogram sx = stft(x, cfg), sy = stft(y, cfg), sz = stft(z, cfg);
  for (size_t i = 0; i < sz.coeffs.size(); ++i)
    REQUIRE(std::abs(sz.coeffs[i] - (a * sx.coeffs[i] + b * sy.coeffs[i])) < 1e-9);
}

TEST_CASE("Parseval consistency per frame") {
  StftConfig cfg = table_cfg();
  auto wave = random_wave(1, 16000, 16000, 21);
  Spectrogram spec = stft(wave, cfg);
  const long n = cfg.frame_samples();
  auto win = dsp::hann_window(n);
  const long pad = n / 2;
  for (long t = 4; t < spec.T - 4; ++t) {  // interior frames, no padding
    double e_time = 0;
    for (long i = 0; i < n; ++i) {
      double v = wave.channels[0][(size_t)(t * cfg.hop_samples() + i - pad)] * win[(size_t)i];
      e_time += v * v;
    }
    double e_freq = std::norm(spec.at(t, 0, 0)) + std::norm(spec.at(t, spec.F - 1, 0));
    for (long k = 1; k < spec.F - 1; ++k) e_freq += 2.0 * std::norm(spec.at(t, k, 0));
    e_freq /= (double)n;
    REQUIRE(e_freq == Catch::Approx(e_time).epsilon(1e-8));
  }
}

TEST_CASE("stft error paths") {
  StftConfig cfg = table_cfg();
  MultichannelWaveform empty;
  empty.sample_rate = 16000;
  REQUIRE_THROWS_AS(stft(empty, cfg), std::invalid_argument);

  StftConfig bad = cfg;
  bad.hop_ms = 128.0;  // hop > frame
  auto wave = random_wave(1, 4000, 16000, 5);
  REQUIRE_THROWS_AS(stft(wave, bad), std::invalid_argument);

  Spectrogram spec = stft(wave, cfg);
  StftConfig other = cfg;
  other.frame_ms = 32.0;
  other.hop_ms = 8.0;
  REQUIRE_THROWS_AS(istft(spec, other, 4000), std::invalid_argument);
}

TEST_CASE("wav float round trip is bit exact") {
  auto dir = std::filesystem::temp_directory_path() / "movebeam_wav_test";
  std::filesystem::create_directories(dir);
  MultichannelWaveform w = MultichannelWaveform::zeros(2, 777, 16000);
  Rng rng(3);
  for (auto& ch : w.channels)
    for (auto& v : ch) v = (double)(float)rng.uniform(-1.0, 1.0);  // float-representable
  std::string path = (dir / "f32.wav").string();
  write_wav(path, w, WavEncoding::kFloat32);
  MultichannelWaveform r = read_wav(path);
  REQUIRE(r.sample_rate == 16000);
  REQUIRE(r.num_channels() == 2);
  REQUIRE(r.num_samples() == 777);
  for (long c = 0; c < 2; ++c)
    for (long i = 0; i < 777; ++i)
      REQUIRE(r.channels[(size_t)c][(size_t)i] == w.channels[(size_t)c][(size_t)i]);
}

TEST_CASE("wav 16-bit scaling convention and 5-channel support") {
  auto dir = std::filesystem::temp_directory_path() / "movebeam_wav_test";
  std::filesystem::create_directories(dir);
  MultichannelWaveform w = MultichannelWaveform::zeros(1, 4, 8000);
  w.channels[0] = {32767.0 / 32768.0, -1.0, 0.5, 0.0};
  std::string path = (dir / "pcm16.wav").string();
  write_wav(path, w, WavEncoding::kPcm16);
  MultichannelWaveform r = read_wav(path);
  REQUIRE(r.channels[0][0] == 32767.0 / 32768.0);  // 0x7FFF
  REQUIRE(r.channels[0][1] == -1.0);
  REQUIRE(std::abs(r.channels[0][2] - 0.5) <= std::pow(2.0, -15));

  MultichannelWaveform five = MultichannelWaveform::zeros(5, 100, 16000);
  Rng rng(9);
  for (auto& ch : five.channels)
    for (auto& v : ch) v = rng.uniform(-0.5, 0.5);
  std::string p5 = (dir / "five.wav").string();
  write_wav(p5, five);
  REQUIRE(read_wav(p5).num_channels() == 5);
}

TEST_CASE("wav rejects malformed and unsupported files") {
  auto dir = std::filesystem::temp_directory_path() / "movebeam_wav_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "bad.wav").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a riff file at all";
  }
  REQUIRE_THROWS_AS(read_wav(path), std::runtime_error);
  REQUIRE_THROWS_AS(read_wav((dir / "missing.wav").string()), std::runtime_error);
}
