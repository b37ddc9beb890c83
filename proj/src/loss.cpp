// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/loss.hpp"

#include <cmath>

#include "avsm/dsp_ops.hpp"

namespace avsm::loss {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

using ad::Tape;
using ad::Tensor;

// anti-wrapping distance |x - 2pi round(x / 2pi)|
Tensor anti_wrap(Tape* t, const Tensor& x) {
  Tensor k = ad::round_detach(t, ad::mul_scalar(t, x, 1.0 / kTwoPi));
  return ad::abs(t, ad::sub(t, x, ad::mul_scalar(t, k, kTwoPi)));
}

Tensor mse(Tape* t, const Tensor& a, const Tensor& b) {
  Tensor d = ad::sub(t, a, b);
  return ad::mean_all(t, ad::mul(t, d, d));
}

// compressed complex parts mag^c e^{i phi} from (real, imag)
std::pair<Tensor, Tensor> compressed_complex(Tape* t, const SpecTensors& s,
                                             double c) {
  Tensor mag = ad::sqrt(
      t, ad::add(t, ad::mul(t, s.real, s.real), ad::mul(t, s.imag, s.imag)));
  Tensor mag_c = ad::pow_scalar(t, mag, c);
  Tensor phi = ad::atan2(t, s.imag, s.real);
  return {ad::mul(t, mag_c, ad::cos(t, phi)),
          ad::mul(t, mag_c, ad::sin(t, phi))};
}

}  // namespace

void validate(const LossWeights& w) {
  require(w.w_time >= 0 && w.w_mag >= 0 && w.w_complex >= 0 &&
              w.w_phase >= 0 && w.w_consistency >= 0,
          ErrorKind::kConfig, "loss weights must be nonnegative");
  require(w.w_time + w.w_mag + w.w_complex + w.w_phase + w.w_consistency > 0,
          ErrorKind::kConfig, "at least one loss weight must be positive");
}

SpecTensors spec_tensors(const dsp::Spectrogram& s) {
  SpecTensors out;
  out.real = Tensor::from({s.frames, s.bins}, s.real);
  out.imag = Tensor::from({s.frames, s.bins}, s.imag);
  return out;
}

Tensor loss_time(Tape* t, const Tensor& yhat, const Tensor& y) {
  require(yhat.same_shape(y), ErrorKind::kLengthMismatch,
          "loss_time: length mismatch");
  return ad::mean_all(t, ad::abs(t, ad::sub(t, yhat, y)));
}

Tensor loss_magnitude(Tape* t, const SpecTensors& shat, const SpecTensors& s,
                      double c) {
  require(shat.real.same_shape(s.real), ErrorKind::kShape,
          "loss_magnitude: shape mismatch");
  auto mag_of = [&](const SpecTensors& sp) {
    return ad::pow_scalar(
        t,
        ad::sqrt(t, ad::add(t, ad::mul(t, sp.real, sp.real),
                            ad::mul(t, sp.imag, sp.imag))),
        c);
  };
  return mse(t, mag_of(shat), mag_of(s));
}

Tensor loss_complex(Tape* t, const SpecTensors& shat, const SpecTensors& s,
                    double c) {
  require(shat.real.same_shape(s.real), ErrorKind::kShape,
          "loss_complex: shape mismatch");
  auto [re_h, im_h] = compressed_complex(t, shat, c);
  auto [re_r, im_r] = compressed_complex(t, s, c);
  return ad::add(t, mse(t, re_h, re_r), mse(t, im_h, im_r));
}

Tensor loss_phase(Tape* t, const Tensor& phase_hat, const Tensor& phase,
                  bool cosine) {
  require(phase_hat.same_shape(phase), ErrorKind::kShape,
          "loss_phase: shape mismatch");
  require(phase_hat.rank() == 2, ErrorKind::kShape,
          "loss_phase: expected [T,F] grids");
  Tensor d = ad::sub(t, phase_hat, phase);
  if (cosine) {
    return ad::mean_all(t, ad::add_scalar(t, ad::neg(t, ad::cos(t, d)), 1.0));
  }
  const int T = phase.dim(0), F = phase.dim(1);
  Tensor total = ad::mean_all(t, anti_wrap(t, d));
  if (T > 1) {
    Tensor dt = ad::sub(t, ad::slice_rows(t, d, 1, T),
                        ad::slice_rows(t, d, 0, T - 1));
    total = ad::add(t, total, ad::mean_all(t, anti_wrap(t, dt)));
  }
  if (F > 1) {
    Tensor df = ad::sub(t, ad::slice_cols(t, d, 1, F),
                        ad::slice_cols(t, d, 0, F - 1));
    total = ad::add(t, total, ad::mean_all(t, anti_wrap(t, df)));
  }
  return total;
}

Tensor loss_consistency(Tape* t, const Tensor& spec_tf,
                        const dsp::StftConfig& cfg, double c,
                        std::int64_t out_len) {
  require(spec_tf.rank() == 3 && spec_tf.dim(0) == 2, ErrorKind::kShape,
          "loss_consistency: expected [2,T,F]");
  const int T = spec_tf.dim(1);
  if (out_len < 0) out_len = static_cast<std::int64_t>(T - 1) * cfg.hop;
  require(out_len >= 1, ErrorKind::kShape,
          "loss_consistency: spectrogram too short to resynthesize");
  Tensor wave = ad::istft_op(t, spec_tf, cfg, out_len);
  Tensor reproj = ad::stft_op(t, wave, cfg);
  SpecTensors a{ad::plane(t, spec_tf, 0), ad::plane(t, spec_tf, 1)};
  SpecTensors b{ad::plane(t, reproj, 0), ad::plane(t, reproj, 1)};
  return loss_complex(t, a, b, c);
}

TotalLossTerms total_loss(Tape* t, const Tensor& wave_hat,
                          const Tensor& wave_ref, const Tensor& spec_hat,
                          const SpecTensors& spec_ref, const LossWeights& w,
                          const dsp::StftConfig& cfg, std::int64_t out_len) {
  validate(w);
  TotalLossTerms terms;
  SpecTensors shat{ad::plane(t, spec_hat, 0), ad::plane(t, spec_hat, 1)};
  const double c = cfg.compression_exponent;
  terms.time = loss_time(t, wave_hat, wave_ref);
  terms.magnitude = loss_magnitude(t, shat, spec_ref, c);
  terms.complex_spec = loss_complex(t, shat, spec_ref, c);
  Tensor phase_hat = ad::atan2(t, shat.imag, shat.real);
  Tensor phase_ref = ad::atan2(nullptr, spec_ref.imag, spec_ref.real);
  terms.phase = loss_phase(t, phase_hat, phase_ref, w.cosine_phase);
  terms.consistency = loss_consistency(t, spec_hat, cfg, c, out_len);
  Tensor total = ad::mul_scalar(t, terms.time, w.w_time);
  total = ad::add(t, total, ad::mul_scalar(t, terms.magnitude, w.w_mag));
  total = ad::add(t, total, ad::mul_scalar(t, terms.complex_spec, w.w_complex));
  total = ad::add(t, total, ad::mul_scalar(t, terms.phase, w.w_phase));
  total =
      ad::add(t, total, ad::mul_scalar(t, terms.consistency, w.w_consistency));
  terms.total = total;
  return terms;
}

// ---------------------------------------------------------------------------
// Plain-value forms
// ---------------------------------------------------------------------------

double loss_time(const dsp::AudioBuffer& yhat, const dsp::AudioBuffer& y) {
  require(yhat.samples.size() == y.samples.size(), ErrorKind::kLengthMismatch,
          "loss_time: length mismatch");
  Tensor a = Tensor::from({static_cast<int>(yhat.samples.size())},
                          yhat.samples);
  Tensor b = Tensor::from({static_cast<int>(y.samples.size())}, y.samples);
  return loss_time(nullptr, a, b).value();
}

double loss_magnitude(const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                      double c) {
  return loss_magnitude(nullptr, spec_tensors(shat), spec_tensors(s), c)
      .value();
}

double loss_complex(const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                    double c) {
  return loss_complex(nullptr, spec_tensors(shat), spec_tensors(s), c).value();
}

double loss_phase(const dsp::Spectrogram& shat, const dsp::Spectrogram& s) {
  require(shat.frames == s.frames && shat.bins == s.bins, ErrorKind::kShape,
          "loss_phase: shape mismatch");
  Tensor ph = Tensor::from({shat.frames, shat.bins}, shat.phase());
  Tensor pr = Tensor::from({s.frames, s.bins}, s.phase());
  return loss_phase(nullptr, ph, pr, false).value();
}

double loss_consistency(const dsp::Spectrogram& shat,
                        const dsp::StftConfig& cfg, std::int64_t out_len) {
  return loss_consistency(nullptr, ad::tensor_from_spec(shat), cfg,
                          cfg.compression_exponent, out_len)
      .value();
}

double total_loss(const dsp::AudioBuffer& yhat, const dsp::AudioBuffer& y,
                  const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                  const LossWeights& w, const dsp::StftConfig& cfg) {
  Tensor a = Tensor::from({static_cast<int>(yhat.samples.size())},
                          yhat.samples);
  Tensor b = Tensor::from({static_cast<int>(y.samples.size())}, y.samples);
  return total_loss(nullptr, a, b, ad::tensor_from_spec(shat),
                    spec_tensors(s), w, cfg,
                    static_cast<std::int64_t>(y.samples.size()))
      .total.value();
}

}  // namespace avsm::loss
