// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsm/autodiff.hpp"
#include "avsm/dsp.hpp"

// Differentiable STFT/iSTFT. Forward paths call the dsp module so the
// numbers are bit-identical to the plain pipeline; backward paths apply the
// exact adjoints of the (linear) analysis and synthesis maps.
namespace avsm::ad {

// x: [n] waveform -> [2,T,F] (plane 0 = real, plane 1 = imag).
Tensor stft_op(Tape* t, const Tensor& x, const dsp::StftConfig& cfg);

// s: [2,T,F] -> [out_len] waveform.
Tensor istft_op(Tape* t, const Tensor& s, const dsp::StftConfig& cfg,
                std::int64_t out_len);

// Conversions between dsp::Spectrogram and the [2,T,F] tensor layout.
Tensor tensor_from_spec(const dsp::Spectrogram& s);
dsp::Spectrogram spec_from_tensor(const Tensor& t);

}  // namespace avsm::ad
