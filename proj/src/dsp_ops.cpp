// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/dsp_ops.hpp"

#include <cmath>
#include <cstring>

namespace avsm::ad {

namespace {

using dsp::StftConfig;
using dsp::detail::DftPlan;

// Adjoint of stft: grad on (real, imag) planes -> grad on the waveform.
// Mirrors framing, windowing and reflect padding of dsp::stft.
void stft_adjoint(const StftConfig& cfg, std::int64_t len, int T,
                  const double* g_re, const double* g_im, double* gx) {
  const auto& plan = DftPlan::get(cfg.n_fft);
  const auto w = dsp::make_window(cfg.window, cfg.win_len);
  const int pad = cfg.center_pad ? cfg.win_len / 2 : 0;
  const int bins = plan.bins;
  std::vector<double> gframe(static_cast<std::size_t>(cfg.n_fft));
  for (int m = 0; m < T; ++m) {
    const double* gr = g_re + static_cast<std::int64_t>(m) * bins;
    const double* gi = g_im + static_cast<std::int64_t>(m) * bins;
    // transpose of the forward rDFT
    std::fill(gframe.begin(), gframe.end(), 0.0);
    for (int k = 0; k < bins; ++k) {
      const double* ct = plan.cos_t.data() + static_cast<std::size_t>(k) * plan.n;
      const double* st = plan.sin_t.data() + static_cast<std::size_t>(k) * plan.n;
      const double cr = gr[k];
      const double ci = gi[k];
      for (int i = 0; i < plan.n; ++i)
        gframe[static_cast<std::size_t>(i)] += cr * ct[i] - ci * st[i];
    }
    // transpose of windowing + padding
    const std::int64_t start = static_cast<std::int64_t>(m) * cfg.hop - pad;
    for (int i = 0; i < cfg.win_len; ++i) {
      const std::int64_t src = start + i;
      const double v = gframe[static_cast<std::size_t>(i)] *
                       w[static_cast<std::size_t>(i)];
      if (src >= 0 && src < len) {
        gx[src] += v;
      } else if (cfg.center_pad) {
        gx[dsp::detail::reflect_index(src, len)] += v;
      }
    }
  }
}

// Adjoint of istft: grad on the output waveform -> grad on (real, imag).
void istft_adjoint(const StftConfig& cfg, int T, std::int64_t out_len,
                   const double* gy, double* g_re, double* g_im) {
  const auto& plan = DftPlan::get(cfg.n_fft);
  const auto w = dsp::make_window(cfg.window, cfg.win_len);
  const auto wsum = dsp::detail::ola_weight(cfg, T);
  const int pad = cfg.center_pad ? cfg.win_len / 2 : 0;
  const int bins = plan.bins;
  const std::int64_t synth_len =
      static_cast<std::int64_t>(T - 1) * cfg.hop + cfg.win_len;
  double wmax = 0.0;
  for (double v : wsum) wmax = std::max(wmax, v);
  const double floor_w = 1e-8 * wmax;

  // grad on the normalized OLA accumulator
  std::vector<double> gacc(static_cast<std::size_t>(synth_len), 0.0);
  for (std::int64_t j = 0; j < out_len; ++j) {
    const std::int64_t src = j + pad;
    if (src >= synth_len) continue;
    const double d = wsum[static_cast<std::size_t>(src)];
    if (d > floor_w) gacc[static_cast<std::size_t>(src)] = gy[j] / d;
  }

  const bool even = (plan.n % 2) == 0;
  const double inv_n = 1.0 / plan.n;
  std::vector<double> gframe(static_cast<std::size_t>(cfg.n_fft));
  for (int m = 0; m < T; ++m) {
    const std::int64_t off = static_cast<std::int64_t>(m) * cfg.hop;
    std::fill(gframe.begin(), gframe.end(), 0.0);
    for (int i = 0; i < cfg.win_len; ++i)
      gframe[static_cast<std::size_t>(i)] =
          gacc[static_cast<std::size_t>(off + i)] * w[static_cast<std::size_t>(i)];
    double* gr = g_re + static_cast<std::int64_t>(m) * bins;
    double* gi = g_im + static_cast<std::int64_t>(m) * bins;
    for (int k = 0; k < bins; ++k) {
      const double wk = (k == 0 || (even && k == bins - 1)) ? 1.0 : 2.0;
      const double* ct = plan.cos_t.data() + static_cast<std::size_t>(k) * plan.n;
      const double* st = plan.sin_t.data() + static_cast<std::size_t>(k) * plan.n;
      double sr = 0.0, si = 0.0;
      for (int i = 0; i < plan.n; ++i) {
        sr += gframe[static_cast<std::size_t>(i)] * ct[i];
        si -= gframe[static_cast<std::size_t>(i)] * st[i];
      }
      gr[k] += wk * inv_n * sr;
      gi[k] += wk * inv_n * si;
    }
  }
}

}  // namespace

Tensor tensor_from_spec(const dsp::Spectrogram& s) {
  Tensor t = Tensor::zeros({2, s.frames, s.bins});
  std::memcpy(t.ptr(), s.real.data(), sizeof(double) * s.real.size());
  std::memcpy(t.ptr() + s.size(), s.imag.data(),
              sizeof(double) * s.imag.size());
  return t;
}

dsp::Spectrogram spec_from_tensor(const Tensor& t) {
  require(t.rank() == 3 && t.dim(0) == 2, ErrorKind::kShape,
          "spec_from_tensor: expected [2,T,F]");
  dsp::Spectrogram s;
  s.frames = t.dim(1);
  s.bins = t.dim(2);
  const std::int64_t n = s.size();
  s.real.assign(t.ptr(), t.ptr() + n);
  s.imag.assign(t.ptr() + n, t.ptr() + 2 * n);
  return s;
}

Tensor stft_op(Tape* t, const Tensor& x, const dsp::StftConfig& cfg) {
  require(x.rank() == 1, ErrorKind::kShape, "stft_op: x must be rank-1");
  dsp::AudioBuffer buf;
  buf.sample_rate = 16000;
  buf.samples.assign(x.ptr(), x.ptr() + x.numel());
  dsp::Spectrogram spec = dsp::stft(buf, cfg);
  Tensor out = tensor_from_spec(spec);
  if (t != nullptr && x.node >= 0) {
    const int nx = x.node;
    const std::int64_t len = x.numel();
    const int T = spec.frames;
    const std::int64_t plane = spec.size();
    std::vector<int> xsh = x.shape;
    out.node = t->push(out.shape,
                       [nx, len, T, plane, cfg, xsh](Tape& tp, const Tensor& g) {
                         double* gx = tp.grad_slot(nx, xsh).ptr();
                         stft_adjoint(cfg, len, T, g.ptr(), g.ptr() + plane, gx);
                       });
  }
  return out;
}

Tensor istft_op(Tape* t, const Tensor& s, const dsp::StftConfig& cfg,
                std::int64_t out_len) {
  dsp::Spectrogram spec = spec_from_tensor(s);
  dsp::AudioBuffer wave = dsp::istft(spec, cfg, out_len);
  Tensor out = Tensor::from({static_cast<int>(out_len)},
                            std::move(wave.samples));
  if (t != nullptr && s.node >= 0) {
    const int ns = s.node;
    const int T = spec.frames;
    const std::int64_t plane = spec.size();
    std::vector<int> ssh = s.shape;
    out.node = t->push(
        out.shape, [ns, T, plane, cfg, ssh, out_len](Tape& tp, const Tensor& g) {
          double* gs = tp.grad_slot(ns, ssh).ptr();
          istft_adjoint(cfg, T, out_len, g.ptr(), gs, gs + plane);
        });
  }
  return out;
}

}  // namespace avsm::ad
