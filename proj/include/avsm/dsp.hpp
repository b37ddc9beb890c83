// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avsm/common.hpp"

// Windowed STFT analysis/synthesis, magnitude-phase decomposition and
// power-law magnitude compression. All operations are pure functions over
// immutable inputs; safe to call concurrently.
namespace avsm::dsp {

enum class WindowKind { kHannSqrt, kHann };

struct StftConfig {
  int n_fft = 400;    // 25 ms at 16 kHz
  int hop = 100;      // 6.25 ms
  int win_len = 400;
  WindowKind window = WindowKind::kHannSqrt;
  bool center_pad = true;
  double compression_exponent = 0.3;
};

// Throws ConfigError on violated invariants (hop <= win_len <= n_fft,
// compression exponent in (0,1], positive sizes).
void validate(const StftConfig& cfg);

struct AudioBuffer {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;
};

// Complex T x F grid, row-major frames. Magnitude/phase are derived views.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> real;
  std::vector<double> imag;

  std::int64_t size() const {
    return static_cast<std::int64_t>(frames) * bins;
  }
  double re(int t, int f) const {
    return real[static_cast<std::size_t>(t) * bins + f];
  }
  double im(int t, int f) const {
    return imag[static_cast<std::size_t>(t) * bins + f];
  }
  std::vector<double> magnitude() const;
  std::vector<double> phase() const;  // radians in (-pi, pi]
};

// Number of analysis frames for a given input length.
int num_frames(std::int64_t len, const StftConfig& cfg);

std::vector<double> make_window(WindowKind kind, int win_len);

// True iff sum_m w_synth(n - m*hop) * w_anal(n - m*hop) is constant (within
// 1e-8 relative) across interior samples.
bool verify_cola(const StftConfig& cfg);
bool verify_cola_windows(const std::vector<double>& w_anal,
                         const std::vector<double>& w_synth, int hop);

Spectrogram stft(const AudioBuffer& audio, const StftConfig& cfg);

// Overlap-add synthesis with window normalization. Returns exactly out_len
// samples (truncated or zero-extended).
AudioBuffer istft(const Spectrogram& spec, const StftConfig& cfg,
                  std::int64_t out_len, int sample_rate = 16000);

// Elementwise mag^c and its inverse. mag must be >= 0, c in (0, 1].
std::vector<double> compress_magnitude(const std::vector<double>& mag,
                                       double c);
std::vector<double> decompress_magnitude(const std::vector<double>& mag,
                                         double c);

// ---- WAV I/O (RIFF PCM 16-bit little-endian, mono, 16 kHz) ----
// Other sample rates raise ResampleRequired; no implicit resampling.
AudioBuffer read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioBuffer& audio);

namespace detail {

// Precomputed real-DFT basis for one transform size. Cached per size.
struct DftPlan {
  int n = 0;
  int bins = 0;
  std::vector<double> cos_t;  // bins x n
  std::vector<double> sin_t;  // bins x n
  static const DftPlan& get(int n);
};

// re[k] = sum_n x[n] cos(2pi k n / N); im[k] = -sum_n x[n] sin(2pi k n / N)
void rdft_forward(const DftPlan& plan, const double* frame, double* re,
                  double* im);
// Inverse assuming Hermitian symmetry; writes N time samples.
void rdft_inverse(const DftPlan& plan, const double* re, const double* im,
                  double* frame);

// Bounce-reflected index into [0, len).
std::int64_t reflect_index(std::int64_t i, std::int64_t len);

// Per-sample OLA normalization weights sum_m w_s(j-mh) w_a(j-mh) over the
// frames that actually exist; length (frames-1)*hop + win_len.
std::vector<double> ola_weight(const StftConfig& cfg, int frames);

}  // namespace detail

}  // namespace avsm::dsp
