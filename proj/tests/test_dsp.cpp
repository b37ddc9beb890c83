// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/dsp.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "test_helpers.hpp"

using namespace avsm;
using namespace avsm::dsp;
using avsm_test::Rng;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

AudioBuffer random_audio(std::int64_t n, Rng& rng, double scale = 0.3) {
  AudioBuffer b;
  b.sample_rate = 16000;
  b.samples.resize(static_cast<std::size_t>(n));
  for (auto& v : b.samples) v = scale * rng.normal();
  return b;
}

// Independent oracle: direct DFT of one windowed frame in double precision.
void naive_frame_dft(const std::vector<double>& windowed_frame, int n_fft,
                     std::vector<double>& re, std::vector<double>& im) {
  const int bins = n_fft / 2 + 1;
  re.assign(static_cast<std::size_t>(bins), 0.0);
  im.assign(static_cast<std::size_t>(bins), 0.0);
  for (int k = 0; k < bins; ++k) {
    double sr = 0.0, si = 0.0;
    for (int i = 0; i < n_fft; ++i) {
      const double x =
          i < static_cast<int>(windowed_frame.size())
              ? windowed_frame[static_cast<std::size_t>(i)]
              : 0.0;
      const double a = 2.0 * kPi * k * i / n_fft;
      sr += x * std::cos(a);
      si -= x * std::sin(a);
    }
    re[static_cast<std::size_t>(k)] = sr;
    im[static_cast<std::size_t>(k)] = si;
  }
}

}  // namespace

TEST_CASE("config invariants are enforced") {
  StftConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.hop = 500;  // hop > win_len
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = StftConfig{};
  cfg.win_len = 500;  // win_len > n_fft
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = StftConfig{};
  cfg.compression_exponent = 0.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg.compression_exponent = 1.5;
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("stft of silence is a zero spectrogram with the documented shape") {
  StftConfig cfg;
  AudioBuffer b;
  b.samples.assign(16000, 0.0);
  Spectrogram s = stft(b, cfg);
  CHECK(s.bins == cfg.n_fft / 2 + 1);
  CHECK(s.frames == 1 + (16000 + 400 - 400) / 100);
  for (double v : s.real) CHECK(v == 0.0);
  for (double v : s.imag) CHECK(v == 0.0);
}

TEST_CASE("stft rejects empty and non-finite input") {
  StftConfig cfg;
  AudioBuffer b;
  CHECK_THROWS_AS(stft(b, cfg), Error);
  b.samples = {0.0, 1.0, std::nan("")};
  bool threw_domain = false;
  try {
    stft(b, cfg);
  } catch (const Error& e) {
    threw_domain = e.kind() == ErrorKind::kDomain;
  }
  CHECK(threw_domain);
}

TEST_CASE("stft frames match the direct-DFT oracle") {
  StftConfig cfg;
  cfg.center_pad = false;
  Rng rng(101);
  AudioBuffer b = random_audio(1200, rng);
  Spectrogram s = stft(b, cfg);
  const auto w = make_window(cfg.window, cfg.win_len);
  for (int m = 0; m < s.frames; ++m) {
    std::vector<double> frame(static_cast<std::size_t>(cfg.win_len));
    for (int i = 0; i < cfg.win_len; ++i)
      frame[static_cast<std::size_t>(i)] =
          b.samples[static_cast<std::size_t>(m * cfg.hop + i)] *
          w[static_cast<std::size_t>(i)];
    std::vector<double> re, im;
    naive_frame_dft(frame, cfg.n_fft, re, im);
    for (int k = 0; k < s.bins; ++k) {
      CHECK(s.re(m, k) ==
            doctest::Approx(re[static_cast<std::size_t>(k)]).epsilon(1e-9));
      CHECK(s.im(m, k) ==
            doctest::Approx(im[static_cast<std::size_t>(k)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("pure cosine at a bin center concentrates its energy there") {
  // n_fft 400 at 16 kHz: bin k sits at k*40 Hz; k=25 -> 1 kHz
  StftConfig cfg;
  cfg.center_pad = false;
  const int k = 25;
  AudioBuffer b;
  b.samples.resize(16000);
  for (std::size_t i = 0; i < b.samples.size(); ++i)
    b.samples[i] = 0.5 * std::cos(2.0 * kPi * (k * 40.0) * i / 16000.0);
  Spectrogram s = stft(b, cfg);
  const auto mag = s.magnitude();
  for (int m = 1; m + 1 < s.frames; ++m) {
    double total = 0.0, in_band = 0.0;
    for (int f = 0; f < s.bins; ++f) {
      const double e = mag[static_cast<std::size_t>(m * s.bins + f)] *
                       mag[static_cast<std::size_t>(m * s.bins + f)];
      total += e;
      if (std::abs(f - k) <= 1) in_band += e;  // window mainlobe
    }
    CHECK(in_band / total >= 0.99);
  }
}

TEST_CASE("stft is linear") {
  StftConfig cfg;
  Rng rng(55);
  AudioBuffer x = random_audio(4000, rng);
  AudioBuffer y = random_audio(4000, rng);
  AudioBuffer sum;
  sum.samples.resize(4000);
  for (int i = 0; i < 4000; ++i)
    sum.samples[static_cast<std::size_t>(i)] =
        x.samples[static_cast<std::size_t>(i)] +
        y.samples[static_cast<std::size_t>(i)];
  Spectrogram sx = stft(x, cfg), sy = stft(y, cfg), ss = stft(sum, cfg);
  double max_mag = 0.0;
  for (double v : ss.real) max_mag = std::max(max_mag, std::abs(v));
  for (std::int64_t i = 0; i < ss.size(); ++i) {
    CHECK(std::abs(ss.real[static_cast<std::size_t>(i)] -
                   (sx.real[static_cast<std::size_t>(i)] +
                    sy.real[static_cast<std::size_t>(i)])) <= 1e-10 * max_mag);
    CHECK(std::abs(ss.imag[static_cast<std::size_t>(i)] -
                   (sx.imag[static_cast<std::size_t>(i)] +
                    sy.imag[static_cast<std::size_t>(i)])) <= 1e-10 * max_mag);
  }
  AudioBuffer x2 = x;
  for (auto& v : x2.samples) v *= -2.5;
  Spectrogram sx2 = stft(x2, cfg);
  for (std::int64_t i = 0; i < sx.size(); ++i)
    CHECK(std::abs(sx2.real[static_cast<std::size_t>(i)] +
                   2.5 * sx.real[static_cast<std::size_t>(i)]) <=
          1e-10 * max_mag);
}

TEST_CASE("istft(stft(x)) round trip under the COLA default") {
  StftConfig cfg;
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    AudioBuffer x = random_audio(16000, rng);
    Spectrogram s = stft(x, cfg);
    AudioBuffer y = istft(s, cfg, 16000);
    REQUIRE(y.samples.size() == x.samples.size());
    double max_err = 0.0;
    for (std::size_t i = static_cast<std::size_t>(cfg.win_len);
         i + cfg.win_len < x.samples.size(); ++i)
      max_err = std::max(max_err, std::abs(y.samples[i] - x.samples[i]));
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("zero spectrogram synthesizes a zero waveform") {
  StftConfig cfg;
  Spectrogram s;
  s.frames = 20;
  s.bins = cfg.n_fft / 2 + 1;
  s.real.assign(static_cast<std::size_t>(s.size()), 0.0);
  s.imag.assign(static_cast<std::size_t>(s.size()), 0.0);
  AudioBuffer y = istft(s, cfg, 1500);
  for (double v : y.samples) CHECK(v == 0.0);
}

TEST_CASE("scaling the magnitude by 0.5 scales a sine by 0.5") {
  StftConfig cfg;
  AudioBuffer x;
  x.samples.resize(16000);
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    x.samples[i] = 0.6 * std::sin(2.0 * kPi * 440.0 * i / 16000.0);
  Spectrogram s = stft(x, cfg);
  for (auto& v : s.real) v *= 0.5;
  for (auto& v : s.imag) v *= 0.5;
  AudioBuffer y = istft(s, cfg, 16000);
  double max_err = 0.0;
  for (std::size_t i = static_cast<std::size_t>(cfg.win_len);
       i + cfg.win_len < x.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(y.samples[i] - 0.5 * x.samples[i]));
  CHECK(max_err < 1e-6);
}

TEST_CASE("istft rejects mismatched shapes") {
  StftConfig cfg;
  Spectrogram s;
  s.frames = 4;
  s.bins = 100;  // wrong for n_fft 400
  s.real.assign(400, 0.0);
  s.imag.assign(400, 0.0);
  CHECK_THROWS_AS(istft(s, cfg, 100), Error);
}

TEST_CASE("verify_cola agrees with a direct summation oracle") {
  auto direct_check = [](WindowKind kind, int win, int hop) {
    auto w = make_window(kind, win);
    const int frames = 64;
    std::vector<double> acc(
        static_cast<std::size_t>((frames - 1) * hop + win), 0.0);
    for (int m = 0; m < frames; ++m)
      for (int i = 0; i < win; ++i)
        acc[static_cast<std::size_t>(m * hop + i)] +=
            w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    double lo = 1e300, hi = 0.0;
    for (int j = 8 * win; j < 8 * win + hop; ++j) {
      lo = std::min(lo, acc[static_cast<std::size_t>(j)]);
      hi = std::max(hi, acc[static_cast<std::size_t>(j)]);
    }
    return (hi - lo) <= 1e-8 * hi;
  };

  StftConfig cfg;  // hann_sqrt 400/100
  CHECK(verify_cola(cfg) == direct_check(cfg.window, 400, 100));
  CHECK(verify_cola(cfg));

  cfg.window = WindowKind::kHann;
  CHECK(verify_cola(cfg) == direct_check(WindowKind::kHann, 400, 100));
  CHECK(verify_cola(cfg));

  cfg.hop = 300;  // hann 400/300 is not COLA
  CHECK(verify_cola(cfg) == direct_check(WindowKind::kHann, 400, 300));
  CHECK_FALSE(verify_cola(cfg));
}

TEST_CASE("verify_cola: disjoint rectangular frames tile exactly") {
  std::vector<double> rect(128, 1.0);
  CHECK(verify_cola_windows(rect, rect, 128));
  CHECK_FALSE(verify_cola_windows(rect, rect, 100));
}

TEST_CASE("Parseval energy check for the COLA default config") {
  StftConfig cfg;
  cfg.center_pad = false;
  Rng rng(99);
  AudioBuffer x = random_audio(8000, rng);
  Spectrogram s = stft(x, cfg);
  const auto w = make_window(cfg.window, cfg.win_len);
  double sig_energy = 0.0;
  for (int m = 0; m < s.frames; ++m)
    for (int i = 0; i < cfg.win_len; ++i) {
      const double v = x.samples[static_cast<std::size_t>(m * cfg.hop + i)] *
                       w[static_cast<std::size_t>(i)];
      sig_energy += v * v;
    }
  double spec_energy = 0.0;
  for (int m = 0; m < s.frames; ++m)
    for (int k = 0; k < s.bins; ++k) {
      const double e = s.re(m, k) * s.re(m, k) + s.im(m, k) * s.im(m, k);
      const bool sym = k != 0 && !(cfg.n_fft % 2 == 0 && k == s.bins - 1);
      spec_energy += (sym ? 2.0 : 1.0) * e;
    }
  spec_energy /= cfg.n_fft;
  CHECK(spec_energy == doctest::Approx(sig_energy).epsilon(1e-6));
}

TEST_CASE("magnitude >= 0 and phase in (-pi, pi]") {
  StftConfig cfg;
  Rng rng(123);
  AudioBuffer x = random_audio(3200, rng);
  Spectrogram s = stft(x, cfg);
  for (double v : s.magnitude()) CHECK(v >= 0.0);
  for (double v : s.phase()) {
    CHECK(v > -kPi);
    CHECK(v <= kPi);
  }
}

TEST_CASE("compress/decompress magnitude") {
  SUBCASE("c = 1 is the identity") {
    std::vector<double> m{0.0, 0.5, 2.0, 10.0};
    CHECK(compress_magnitude(m, 1.0) == m);
  }
  SUBCASE("zero maps to zero for any exponent") {
    std::vector<double> m{0.0};
    CHECK(compress_magnitude(m, 0.3)[0] == 0.0);
    CHECK(compress_magnitude(m, 0.77)[0] == 0.0);
  }
  SUBCASE("mag 4 with c 0.5 gives 2") {
    std::vector<double> m{4.0};
    CHECK(compress_magnitude(m, 0.5)[0] == doctest::Approx(2.0));
  }
  SUBCASE("round trip within 1e-9 relative above 1e-12") {
    Rng rng(1);
    std::vector<double> m(50);
    for (auto& v : m) v = std::pow(10.0, rng.uniform(-11.0, 2.0));
    auto rt = decompress_magnitude(compress_magnitude(m, 0.3), 0.3);
    for (std::size_t i = 0; i < m.size(); ++i)
      CHECK(std::abs(rt[i] - m[i]) <= 1e-9 * m[i]);
  }
  SUBCASE("negative input raises DomainError") {
    std::vector<double> m{-0.1};
    CHECK_THROWS_AS(compress_magnitude(m, 0.5), Error);
  }
}

TEST_CASE("wav round trip and error paths") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "avsm_wav_test";
  fs::create_directories(dir);
  SUBCASE("write then read recovers samples within one quantization step") {
    Rng rng(2);
    AudioBuffer x;
    x.samples.resize(2048);
    for (auto& v : x.samples) v = rng.uniform(-0.95, 0.95);
    const std::string p = (dir / "a.wav").string();
    write_wav(p, x);
    AudioBuffer y = read_wav(p);
    REQUIRE(y.samples.size() == x.samples.size());
    CHECK(y.sample_rate == 16000);
    for (std::size_t i = 0; i < x.samples.size(); ++i)
      CHECK(std::abs(y.samples[i] - x.samples[i]) <= 1.0 / 32768.0);
  }
  SUBCASE("clipping is symmetric at +/-32767") {
    AudioBuffer x;
    x.samples = {2.0, -2.0};
    const std::string p = (dir / "clip.wav").string();
    write_wav(p, x);
    AudioBuffer y = read_wav(p);
    CHECK(y.samples[0] == doctest::Approx(32767.0 / 32768.0));
    CHECK(y.samples[1] == doctest::Approx(-32767.0 / 32768.0));
  }
  SUBCASE("missing file raises FileError") {
    bool got = false;
    try {
      read_wav((dir / "nope.wav").string());
    } catch (const Error& e) {
      got = e.kind() == ErrorKind::kFile;
    }
    CHECK(got);
  }
  SUBCASE("wrong sample rate raises ResampleRequired") {
    AudioBuffer x;
    x.sample_rate = 44100;
    x.samples = {0.0, 0.1};
    const std::string p = (dir / "sr.wav").string();
    write_wav(p, x);
    bool got = false;
    try {
      read_wav(p);
    } catch (const Error& e) {
      got = e.kind() == ErrorKind::kResampleRequired;
    }
    CHECK(got);
  }
}
