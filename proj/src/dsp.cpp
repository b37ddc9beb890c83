// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace avsm::dsp {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

void validate(const StftConfig& cfg) {
  require(cfg.n_fft >= 2, ErrorKind::kConfig, "stft config: n_fft must be >= 2");
  require(cfg.hop >= 1, ErrorKind::kConfig, "stft config: hop must be >= 1");
  require(cfg.hop <= cfg.win_len && cfg.win_len <= cfg.n_fft,
          ErrorKind::kConfig,
          "stft config: require hop <= win_len <= n_fft");
  require(cfg.compression_exponent > 0.0 && cfg.compression_exponent <= 1.0,
          ErrorKind::kConfig,
          "stft config: compression exponent must lie in (0, 1]");
}

std::vector<double> Spectrogram::magnitude() const {
  std::vector<double> m(real.size());
  for (std::size_t i = 0; i < real.size(); ++i)
    m[i] = std::hypot(real[i], imag[i]);
  return m;
}

std::vector<double> Spectrogram::phase() const {
  std::vector<double> p(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    double v = std::atan2(imag[i], real[i]);
    if (v <= -kPi) v += kTwoPi;
    p[i] = v;
  }
  return p;
}

std::vector<double> make_window(WindowKind kind, int win_len) {
  std::vector<double> w(static_cast<std::size_t>(win_len));
  for (int i = 0; i < win_len; ++i) {
    // periodic Hann
    double h = 0.5 * (1.0 - std::cos(kTwoPi * i / win_len));
    w[static_cast<std::size_t>(i)] =
        kind == WindowKind::kHannSqrt ? std::sqrt(h) : h;
  }
  return w;
}

int num_frames(std::int64_t len, const StftConfig& cfg) {
  const std::int64_t pad = cfg.center_pad ? 2LL * (cfg.win_len / 2) : 0;
  const std::int64_t t = 1 + (len + pad - cfg.win_len) / cfg.hop;
  return static_cast<int>(t);
}

bool verify_cola_windows(const std::vector<double>& w_anal,
                         const std::vector<double>& w_synth, int hop) {
  require(!w_anal.empty() && w_anal.size() == w_synth.size() && hop >= 1,
          ErrorKind::kConfig, "verify_cola: bad windows");
  const int win = static_cast<int>(w_anal.size());
  // Enough frames that interior samples see every overlapping window.
  const int frames = 2 * ((win + hop - 1) / hop) + 4;
  const int len = (frames - 1) * hop + win;
  std::vector<double> acc(static_cast<std::size_t>(len), 0.0);
  for (int m = 0; m < frames; ++m)
    for (int i = 0; i < win; ++i)
      acc[static_cast<std::size_t>(m * hop + i)] +=
          w_synth[static_cast<std::size_t>(i)] *
          w_anal[static_cast<std::size_t>(i)];
  double lo = acc[static_cast<std::size_t>(win)];
  double hi = lo;
  for (int j = win; j < win + hop; ++j) {
    lo = std::min(lo, acc[static_cast<std::size_t>(j)]);
    hi = std::max(hi, acc[static_cast<std::size_t>(j)]);
  }
  if (hi <= 0.0) return false;
  return (hi - lo) <= 1e-8 * hi;
}

bool verify_cola(const StftConfig& cfg) {
  validate(cfg);
  auto w = make_window(cfg.window, cfg.win_len);
  return verify_cola_windows(w, w, cfg.hop);
}

// ---------------------------------------------------------------------------
// DFT plan
// ---------------------------------------------------------------------------

namespace detail {

const DftPlan& DftPlan::get(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<DftPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;
  auto plan = std::make_unique<DftPlan>();
  plan->n = n;
  plan->bins = n / 2 + 1;
  plan->cos_t.resize(static_cast<std::size_t>(plan->bins) * n);
  plan->sin_t.resize(static_cast<std::size_t>(plan->bins) * n);
  for (int k = 0; k < plan->bins; ++k) {
    for (int i = 0; i < n; ++i) {
      // Reduce k*i mod n first so large products do not lose precision.
      const std::int64_t r = (static_cast<std::int64_t>(k) * i) % n;
      const double a = kTwoPi * static_cast<double>(r) / n;
      plan->cos_t[static_cast<std::size_t>(k) * n + i] = std::cos(a);
      plan->sin_t[static_cast<std::size_t>(k) * n + i] = std::sin(a);
    }
  }
  const DftPlan& ref = *plan;
  cache.emplace(n, std::move(plan));
  return ref;
}

void rdft_forward(const DftPlan& plan, const double* frame, double* re,
                  double* im) {
  const int n = plan.n;
  for (int k = 0; k < plan.bins; ++k) {
    const double* ct = plan.cos_t.data() + static_cast<std::size_t>(k) * n;
    const double* st = plan.sin_t.data() + static_cast<std::size_t>(k) * n;
    double sr = 0.0, si = 0.0;
    for (int i = 0; i < n; ++i) {
      sr += frame[i] * ct[i];
      si -= frame[i] * st[i];
    }
    re[k] = sr;
    im[k] = si;
  }
}

void rdft_inverse(const DftPlan& plan, const double* re, const double* im,
                  double* frame) {
  const int n = plan.n;
  const int bins = plan.bins;
  const bool even = (n % 2) == 0;
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) frame[i] = re[0] * inv_n;
  for (int k = 1; k < bins; ++k) {
    const double w = (even && k == bins - 1) ? 1.0 : 2.0;  // Nyquist once
    const double* ct = plan.cos_t.data() + static_cast<std::size_t>(k) * n;
    const double* st = plan.sin_t.data() + static_cast<std::size_t>(k) * n;
    const double cr = w * inv_n * re[k];
    const double ci = w * inv_n * im[k];
    for (int i = 0; i < n; ++i) frame[i] += cr * ct[i] - ci * st[i];
  }
}

std::int64_t reflect_index(std::int64_t i, std::int64_t len) {
  if (len == 1) return 0;
  const std::int64_t period = 2 * (len - 1);
  std::int64_t j = i % period;
  if (j < 0) j += period;
  return j < len ? j : period - j;
}

std::vector<double> ola_weight(const StftConfig& cfg, int frames) {
  auto w = make_window(cfg.window, cfg.win_len);
  const std::int64_t len =
      static_cast<std::int64_t>(frames - 1) * cfg.hop + cfg.win_len;
  std::vector<double> acc(static_cast<std::size_t>(len), 0.0);
  for (int m = 0; m < frames; ++m) {
    const std::int64_t off = static_cast<std::int64_t>(m) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i)
      acc[static_cast<std::size_t>(off + i)] +=
          w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
  }
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// STFT / iSTFT
// ---------------------------------------------------------------------------

Spectrogram stft(const AudioBuffer& audio, const StftConfig& cfg) {
  validate(cfg);
  require(!audio.samples.empty(), ErrorKind::kEmptyInput, "stft: empty audio");
  require(audio.sample_rate > 0, ErrorKind::kConfig,
          "stft: sample_rate must be positive");
  for (double v : audio.samples)
    require(std::isfinite(v), ErrorKind::kDomain, "stft: non-finite sample");

  const std::int64_t len = static_cast<std::int64_t>(audio.samples.size());
  const int pad = cfg.center_pad ? cfg.win_len / 2 : 0;
  const std::int64_t padded = len + 2LL * pad;
  require(padded >= cfg.win_len, ErrorKind::kConfig,
          "stft: audio shorter than analysis window");
  const int T = num_frames(len, cfg);
  const auto& plan = detail::DftPlan::get(cfg.n_fft);
  const auto w = make_window(cfg.window, cfg.win_len);

  Spectrogram out;
  out.frames = T;
  out.bins = plan.bins;
  out.real.resize(static_cast<std::size_t>(T) * plan.bins);
  out.imag.resize(static_cast<std::size_t>(T) * plan.bins);

  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft), 0.0);
  const double* x = audio.samples.data();
  for (int m = 0; m < T; ++m) {
    const std::int64_t start = static_cast<std::int64_t>(m) * cfg.hop - pad;
    for (int i = 0; i < cfg.win_len; ++i) {
      const std::int64_t src = start + i;
      const double v = (src >= 0 && src < len)
                           ? x[src]
                           : (cfg.center_pad
                                  ? x[detail::reflect_index(src, len)]
                                  : 0.0);
      frame[static_cast<std::size_t>(i)] = v * w[static_cast<std::size_t>(i)];
    }
    detail::rdft_forward(plan, frame.data(),
                         out.real.data() + static_cast<std::size_t>(m) * plan.bins,
                         out.imag.data() + static_cast<std::size_t>(m) * plan.bins);
  }
  return out;
}

AudioBuffer istft(const Spectrogram& spec, const StftConfig& cfg,
                  std::int64_t out_len, int sample_rate) {
  validate(cfg);
  require(spec.frames >= 1, ErrorKind::kConfig, "istft: empty spectrogram");
  require(spec.bins == cfg.n_fft / 2 + 1, ErrorKind::kConfig,
          "istft: bin count does not match n_fft");
  require(static_cast<std::int64_t>(spec.real.size()) == spec.size() &&
              static_cast<std::int64_t>(spec.imag.size()) == spec.size(),
          ErrorKind::kShape, "istft: spectrogram buffer size mismatch");
  require(out_len >= 0, ErrorKind::kConfig, "istft: negative output length");

  const auto& plan = detail::DftPlan::get(cfg.n_fft);
  const auto w = make_window(cfg.window, cfg.win_len);
  const int T = spec.frames;
  const std::int64_t synth_len =
      static_cast<std::int64_t>(T - 1) * cfg.hop + cfg.win_len;
  std::vector<double> acc(static_cast<std::size_t>(synth_len), 0.0);
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft), 0.0);
  for (int m = 0; m < T; ++m) {
    detail::rdft_inverse(plan,
                         spec.real.data() + static_cast<std::size_t>(m) * spec.bins,
                         spec.imag.data() + static_cast<std::size_t>(m) * spec.bins,
                         frame.data());
    const std::int64_t off = static_cast<std::int64_t>(m) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i)
      acc[static_cast<std::size_t>(off + i)] +=
          frame[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
  }
  const auto wsum = detail::ola_weight(cfg, T);
  double wmax = 0.0;
  for (double v : wsum) wmax = std::max(wmax, v);
  const double floor_w = 1e-8 * wmax;
  for (std::int64_t j = 0; j < synth_len; ++j) {
    const double d = wsum[static_cast<std::size_t>(j)];
    acc[static_cast<std::size_t>(j)] =
        d > floor_w ? acc[static_cast<std::size_t>(j)] / d : 0.0;
  }

  const int pad = cfg.center_pad ? cfg.win_len / 2 : 0;
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(static_cast<std::size_t>(out_len), 0.0);
  for (std::int64_t j = 0; j < out_len; ++j) {
    const std::int64_t src = j + pad;
    if (src < synth_len) out.samples[static_cast<std::size_t>(j)] =
        acc[static_cast<std::size_t>(src)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Magnitude compression
// ---------------------------------------------------------------------------

std::vector<double> compress_magnitude(const std::vector<double>& mag,
                                       double c) {
  require(c > 0.0 && c <= 1.0, ErrorKind::kConfig,
          "compress_magnitude: exponent must lie in (0, 1]");
  std::vector<double> out(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    require(mag[i] >= 0.0, ErrorKind::kDomain,
            "compress_magnitude: negative magnitude");
    out[i] = std::pow(mag[i], c);
  }
  return out;
}

std::vector<double> decompress_magnitude(const std::vector<double>& mag,
                                         double c) {
  require(c > 0.0 && c <= 1.0, ErrorKind::kConfig,
          "decompress_magnitude: exponent must lie in (0, 1]");
  std::vector<double> out(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    require(mag[i] >= 0.0, ErrorKind::kDomain,
            "decompress_magnitude: negative magnitude");
    out[i] = std::pow(mag[i], 1.0 / c);
  }
  return out;
}

}  // namespace avsm::dsp
