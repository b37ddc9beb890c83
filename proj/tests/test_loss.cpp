// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/loss.hpp"

#include <cmath>

#include "avsm/dsp_ops.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace avsm;
using namespace avsm::loss;
using avsm_test::Rng;
using avsm_test::random_tensor;
using ad::Tensor;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;

dsp::AudioBuffer random_audio(std::int64_t n, Rng& rng, double scale = 0.3) {
  dsp::AudioBuffer b;
  b.sample_rate = 16000;
  b.samples.resize(static_cast<std::size_t>(n));
  for (auto& v : b.samples) v = scale * rng.normal();
  return b;
}

dsp::Spectrogram random_spec(int T, int F, Rng& rng) {
  dsp::Spectrogram s;
  s.frames = T;
  s.bins = F;
  s.real.resize(static_cast<std::size_t>(T) * F);
  s.imag.resize(static_cast<std::size_t>(T) * F);
  for (auto& v : s.real) v = rng.normal();
  for (auto& v : s.imag) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("weights validation") {
  LossWeights w;
  CHECK_NOTHROW(validate(w));
  w.w_mag = -0.1;
  CHECK_THROWS_AS(validate(w), Error);
  w = LossWeights{};
  w.w_time = w.w_mag = w.w_complex = w.w_phase = w.w_consistency = 0.0;
  CHECK_THROWS_AS(validate(w), Error);
}

TEST_CASE("loss_time") {
  Rng rng(1);
  dsp::AudioBuffer y = random_audio(500, rng);
  SUBCASE("identical signals give zero") {
    CHECK(loss_time(y, y) == 0.0);
  }
  SUBCASE("constant offset of 0.5 gives 0.5") {
    dsp::AudioBuffer yh = y;
    for (auto& v : yh.samples) v += 0.5;
    CHECK(loss_time(yh, y) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("matches an independently coded mean-abs oracle") {
    dsp::AudioBuffer yh = random_audio(500, rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.samples.size(); ++i)
      acc += std::fabs(yh.samples[i] - y.samples[i]);
    acc /= static_cast<double>(y.samples.size());
    CHECK(std::abs(loss_time(yh, y) - acc) < 1e-12);
  }
  SUBCASE("length mismatch raises") {
    dsp::AudioBuffer yh = random_audio(499, rng);
    CHECK_THROWS_AS(loss_time(yh, y), Error);
  }
}

TEST_CASE("loss_magnitude") {
  Rng rng(2);
  dsp::Spectrogram s = random_spec(6, 9, rng);
  SUBCASE("identical spectra give zero") {
    CHECK(loss_magnitude(s, s, 0.3) == 0.0);
  }
  SUBCASE("doubled magnitude with c=1 gives mean squared magnitude") {
    dsp::Spectrogram s2 = s;
    for (auto& v : s2.real) v *= 2.0;
    for (auto& v : s2.imag) v *= 2.0;
    const auto mag = s.magnitude();
    double expect = 0.0;
    for (double m : mag) expect += m * m;
    expect /= static_cast<double>(mag.size());
    CHECK(loss_magnitude(s2, s, 1.0) == doctest::Approx(expect).epsilon(1e-10));
  }
  SUBCASE("matches a naive double loop") {
    dsp::Spectrogram sh = random_spec(6, 9, rng);
    const double c = 0.3;
    double acc = 0.0;
    for (std::int64_t i = 0; i < s.size(); ++i) {
      const double mh = std::pow(
          std::hypot(sh.real[static_cast<std::size_t>(i)],
                     sh.imag[static_cast<std::size_t>(i)]),
          c);
      const double mr = std::pow(
          std::hypot(s.real[static_cast<std::size_t>(i)],
                     s.imag[static_cast<std::size_t>(i)]),
          c);
      acc += (mh - mr) * (mh - mr);
    }
    acc /= static_cast<double>(s.size());
    CHECK(loss_magnitude(sh, s, c) == doctest::Approx(acc).epsilon(1e-10));
  }
}

TEST_CASE("loss_complex") {
  Rng rng(3);
  dsp::Spectrogram s = random_spec(5, 7, rng);
  SUBCASE("identical spectra give zero") {
    CHECK(loss_complex(s, s, 0.3) == 0.0);
  }
  SUBCASE("unit-magnitude phase flip with c=1 gives 4") {
    dsp::Spectrogram a = s, b = s;
    for (std::int64_t i = 0; i < s.size(); ++i) {
      const double phi = rng.uniform(-kPi, kPi);
      a.real[static_cast<std::size_t>(i)] = std::cos(phi);
      a.imag[static_cast<std::size_t>(i)] = std::sin(phi);
      b.real[static_cast<std::size_t>(i)] = std::cos(phi + kPi);
      b.imag[static_cast<std::size_t>(i)] = std::sin(phi + kPi);
    }
    CHECK(loss_complex(b, a, 1.0) == doctest::Approx(4.0).epsilon(1e-10));
  }
  SUBCASE("matches a naive oracle") {
    dsp::Spectrogram sh = random_spec(5, 7, rng);
    const double c = 0.3;
    double acc_re = 0.0, acc_im = 0.0;
    for (std::int64_t i = 0; i < s.size(); ++i) {
      auto comp = [&](const dsp::Spectrogram& sp) {
        const double m = std::hypot(sp.real[static_cast<std::size_t>(i)],
                                    sp.imag[static_cast<std::size_t>(i)]);
        const double phi = std::atan2(sp.imag[static_cast<std::size_t>(i)],
                                      sp.real[static_cast<std::size_t>(i)]);
        return std::pair<double, double>{std::pow(m, c) * std::cos(phi),
                                         std::pow(m, c) * std::sin(phi)};
      };
      auto [rh, ih] = comp(sh);
      auto [rr, ir] = comp(s);
      acc_re += (rh - rr) * (rh - rr);
      acc_im += (ih - ir) * (ih - ir);
    }
    const double expect =
        acc_re / static_cast<double>(s.size()) +
        acc_im / static_cast<double>(s.size());
    CHECK(loss_complex(sh, s, c) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("loss_phase") {
  Rng rng(4);
  dsp::Spectrogram s = random_spec(6, 8, rng);
  SUBCASE("identical phases give zero") {
    CHECK(loss_phase(s, s) == 0.0);
  }
  SUBCASE("global 2pi offset gives zero") {
    Tensor p = Tensor::from({6, 8}, s.phase());
    Tensor p2 = p.clone();
    for (std::int64_t i = 0; i < p2.numel(); ++i) p2.ptr()[i] += kTwoPi;
    CHECK(loss_phase(nullptr, p2, p).value() ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("global pi offset: instantaneous term pi, derivative terms 0") {
    Tensor p = Tensor::from({6, 8}, s.phase());
    Tensor p2 = p.clone();
    for (std::int64_t i = 0; i < p2.numel(); ++i) p2.ptr()[i] += kPi;
    CHECK(loss_phase(nullptr, p2, p).value() ==
          doctest::Approx(kPi).epsilon(1e-10));
  }
  SUBCASE("cosine variant: zero at equality, positive otherwise") {
    Tensor p = Tensor::from({6, 8}, s.phase());
    CHECK(loss_phase(nullptr, p, p, true).value() == 0.0);
    Tensor p2 = p.clone();
    for (std::int64_t i = 0; i < p2.numel(); ++i) p2.ptr()[i] += 0.7;
    CHECK(loss_phase(nullptr, p2, p, true).value() > 0.0);
  }
}

TEST_CASE("loss_consistency") {
  dsp::StftConfig cfg;
  Rng rng(5);
  SUBCASE("stft-produced spectrograms are consistent (< 1e-10)") {
    dsp::AudioBuffer x = random_audio(4800, rng);
    dsp::Spectrogram s = dsp::stft(x, cfg);
    CHECK(loss_consistency(s, cfg,
                           static_cast<std::int64_t>(x.samples.size())) <
          1e-10);
  }
  SUBCASE("default length on a hop-aligned signal is also consistent") {
    dsp::AudioBuffer x = random_audio(4800, rng);  // 48 hops
    dsp::Spectrogram s = dsp::stft(x, cfg);
    CHECK(loss_consistency(s, cfg) < 1e-10);
  }
  SUBCASE("random-phase spectrograms are strictly inconsistent") {
    dsp::AudioBuffer x = random_audio(4800, rng);
    dsp::Spectrogram s = dsp::stft(x, cfg);
    for (std::int64_t i = 0; i < s.size(); ++i) {
      const double m = std::hypot(s.real[static_cast<std::size_t>(i)],
                                  s.imag[static_cast<std::size_t>(i)]);
      const double phi = rng.uniform(-kPi, kPi);
      s.real[static_cast<std::size_t>(i)] = m * std::cos(phi);
      s.imag[static_cast<std::size_t>(i)] = m * std::sin(phi);
    }
    CHECK(loss_consistency(s, cfg,
                           static_cast<std::int64_t>(x.samples.size())) >
          1e-6);
  }
  SUBCASE("quadratic homogeneity at c=1") {
    dsp::StftConfig cfg1 = cfg;
    cfg1.compression_exponent = 1.0;
    dsp::Spectrogram s = random_spec(24, cfg.n_fft / 2 + 1, rng);
    const double l1 = loss_consistency(s, cfg1);
    dsp::Spectrogram s2 = s;
    for (auto& v : s2.real) v *= 3.0;
    for (auto& v : s2.imag) v *= 3.0;
    const double l9 = loss_consistency(s2, cfg1);
    CHECK(l9 == doctest::Approx(9.0 * l1).epsilon(1e-8));
  }
}

TEST_CASE("total_loss") {
  dsp::StftConfig cfg;
  Rng rng(6);
  dsp::AudioBuffer y = random_audio(3200, rng);
  dsp::Spectrogram s = dsp::stft(y, cfg);
  SUBCASE("all-identical inputs give zero") {
    LossWeights w;
    CHECK(total_loss(y, y, s, s, w, cfg) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("zeroing one weight removes that term exactly; linear in weights") {
    dsp::AudioBuffer yh = random_audio(3200, rng);
    dsp::Spectrogram sh = dsp::stft(yh, cfg);
    LossWeights w;
    const double full = total_loss(yh, y, sh, s, w, cfg);
    LossWeights w0 = w;
    w0.w_phase = 0.0;
    const double no_phase = total_loss(yh, y, sh, s, w0, cfg);
    const double phase_term = loss_phase(sh, s);
    CHECK(full == doctest::Approx(no_phase + w.w_phase * phase_term)
                      .epsilon(1e-10));
    // doubling every weight doubles the value
    LossWeights w2 = w;
    w2.w_time *= 2;
    w2.w_mag *= 2;
    w2.w_complex *= 2;
    w2.w_phase *= 2;
    w2.w_consistency *= 2;
    CHECK(total_loss(yh, y, sh, s, w2, cfg) ==
          doctest::Approx(2.0 * full).epsilon(1e-10));
  }
}

TEST_CASE("loss terms are differentiable at random inputs") {
  Rng rng(7);
  const int T = 4, F = 6;
  Tensor re_h = random_tensor({T, F}, rng);
  Tensor im_h = random_tensor({T, F}, rng);
  Tensor re_r = random_tensor({T, F}, rng, 1.0, false);
  Tensor im_r = random_tensor({T, F}, rng, 1.0, false);
  SUBCASE("magnitude + complex") {
    auto res = avsm_test::gradcheck(
        [&](ad::Tape* t, const std::vector<Tensor>& in) {
          SpecTensors sh{in[0], in[1]};
          SpecTensors sr{re_r, im_r};
          return ad::add(t, loss_magnitude(t, sh, sr, 0.5),
                         loss_complex(t, sh, sr, 0.5));
        },
        {re_h, im_h}, 1e-6);
    CHECK(res.max_rel_err < 1e-5);
  }
  SUBCASE("phase (anti-wrapped, away from kinks)") {
    Tensor ph = random_tensor({T, F}, rng, 0.4);
    Tensor pr = random_tensor({T, F}, rng, 0.4, false);
    auto res = avsm_test::gradcheck(
        [&](ad::Tape* t, const std::vector<Tensor>& in) {
          return loss_phase(t, in[0], pr, false);
        },
        {ph}, 1e-6);
    CHECK(res.max_rel_err < 1e-5);
  }
  SUBCASE("consistency through istft/stft") {
    dsp::StftConfig tiny;
    tiny.n_fft = 32;
    tiny.win_len = 32;
    tiny.hop = 8;
    Tensor spec = random_tensor({2, 6, 17}, rng, 0.5);
    auto res = avsm_test::gradcheck(
        [&](ad::Tape* t, const std::vector<Tensor>& in) {
          return loss_consistency(t, in[0], tiny, 0.5);
        },
        {spec}, 1e-6, 60);
    CHECK(res.max_rel_err < 1e-4);
  }
}
