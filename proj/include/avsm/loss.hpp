// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsm/autodiff.hpp"
#include "avsm/dsp.hpp"

// Composite training objective: weighted waveform L1, STFT magnitude,
// complex spectral, phase and consistency terms. All pure functions; the
// tensor forms are differentiable end to end.
namespace avsm::loss {

struct LossWeights {
  double w_time = 0.2;
  double w_mag = 0.9;
  double w_complex = 0.1;
  double w_phase = 0.3;
  double w_consistency = 0.1;
  bool cosine_phase = false;  // single-term cosine distance alternative
};

void validate(const LossWeights& w);

// Complex spectrogram as a pair of [T,F] tensors.
struct SpecTensors {
  ad::Tensor real, imag;
};

SpecTensors spec_tensors(const dsp::Spectrogram& s);

// mean |yhat - y|
ad::Tensor loss_time(ad::Tape* t, const ad::Tensor& yhat, const ad::Tensor& y);
// MSE between compressed magnitudes
ad::Tensor loss_magnitude(ad::Tape* t, const SpecTensors& shat,
                          const SpecTensors& s, double c);
// MSE over compressed real/imag parts (compressed complex = mag^c e^{i phi}),
// normalized per bin
ad::Tensor loss_complex(ad::Tape* t, const SpecTensors& shat,
                        const SpecTensors& s, double c);
// Anti-wrapped instantaneous phase + time-difference + frequency-difference
// terms; `cosine` switches to mean(1 - cos(dphi)).
ad::Tensor loss_phase(ad::Tape* t, const ad::Tensor& phase_hat,
                      const ad::Tensor& phase, bool cosine = false);
// MSE between shat and stft(istft(shat)) on compressed real/imag parts.
// out_len < 0 uses (T-1)*hop.
ad::Tensor loss_consistency(ad::Tape* t, const ad::Tensor& spec_tf,
                            const dsp::StftConfig& cfg, double c,
                            std::int64_t out_len = -1);

struct TotalLossTerms {
  ad::Tensor total, time, magnitude, complex_spec, phase, consistency;
};

TotalLossTerms total_loss(ad::Tape* t, const ad::Tensor& wave_hat,
                          const ad::Tensor& wave_ref, const ad::Tensor& spec_hat,
                          const SpecTensors& spec_ref, const LossWeights& w,
                          const dsp::StftConfig& cfg, std::int64_t out_len);

// ---- plain-value forms over dsp types ----
double loss_time(const dsp::AudioBuffer& yhat, const dsp::AudioBuffer& y);
double loss_magnitude(const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                      double c);
double loss_complex(const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                    double c);
double loss_phase(const dsp::Spectrogram& shat, const dsp::Spectrogram& s);
double loss_consistency(const dsp::Spectrogram& shat,
                        const dsp::StftConfig& cfg,
                        std::int64_t out_len = -1);
double total_loss(const dsp::AudioBuffer& yhat, const dsp::AudioBuffer& y,
                  const dsp::Spectrogram& shat, const dsp::Spectrogram& s,
                  const LossWeights& w, const dsp::StftConfig& cfg);

}  // namespace avsm::loss
