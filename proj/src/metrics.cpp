// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace avsm::metrics {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr int kStoiFs = 10000;
constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kMinBandHz = 150.0;
constexpr int kSegFrames = 30;  // 384 ms
constexpr double kBetaDb = -15.0;
constexpr double kDynRangeDb = 40.0;
constexpr double kEps = 2.220446049250313e-16;

}  // namespace

namespace detail {

namespace {

// Modified Bessel I0 (power series).
double bessel_i0(double x) {
  const double q = x * x / 4.0;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

// Kaiser-windowed lowpass (scaled to unit DC gain), as used by the
// polyphase resampler: numtaps odd, cutoff in Nyquist units.
std::vector<double> kaiser_lowpass(int numtaps, double cutoff, double beta) {
  const int m = numtaps - 1;
  std::vector<double> h(static_cast<std::size_t>(numtaps));
  const double i0b = bessel_i0(beta);
  for (int i = 0; i < numtaps; ++i) {
    const double t = static_cast<double>(i) - m / 2.0;
    const double snc =
        t == 0.0 ? 1.0 : std::sin(kPi * cutoff * t) / (kPi * cutoff * t);
    const double r = 2.0 * i / m - 1.0;
    const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<std::size_t>(i)] = cutoff * snc * win;
  }
  double s = 0.0;
  for (double v : h) s += v;
  for (double& v : h) v /= s;
  return h;
}

}  // namespace

std::vector<double> resample_16k_to_10k(const std::vector<double>& x) {
  // up=5, down=8; half_len = 10*max(up,down) = 80; 161 taps; kaiser beta 5.
  constexpr int up = 5, down = 8, half_len = 80;
  static const std::vector<double> h = [] {
    auto f = kaiser_lowpass(2 * half_len + 1, 1.0 / 8.0, 5.0);
    for (double& v : f) v *= up;
    return f;
  }();
  const std::int64_t n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  // zero-pad the filter so output samples sit at the center
  const int n_pre_pad = (down - half_len % down);
  const int n_pre_remove = (half_len + n_pre_pad) / down;
  const std::int64_t len_h =
      static_cast<std::int64_t>(h.size()) + n_pre_pad;
  std::int64_t n_post_pad = 0;
  auto upfirdn_len = [&](std::int64_t lh) {
    return ((n_in - 1) * up + lh) / down + 1;
  };
  while (upfirdn_len(len_h + n_post_pad) < n_out + n_pre_remove) ++n_post_pad;

  std::vector<double> hp(static_cast<std::size_t>(len_h + n_post_pad), 0.0);
  for (std::size_t i = 0; i < h.size(); ++i)
    hp[static_cast<std::size_t>(n_pre_pad) + i] = h[i];

  const std::int64_t total = upfirdn_len(static_cast<std::int64_t>(hp.size()));
  std::vector<double> y(static_cast<std::size_t>(total), 0.0);
  // y[m] = sum_k hp[k] * xup[m*down - k], xup[i] = x[i/up] when i % up == 0
  const std::int64_t lh = static_cast<std::int64_t>(hp.size());
  for (std::int64_t m = 0; m < total; ++m) {
    const std::int64_t pos = m * down;
    double acc = 0.0;
    // i = pos - k must satisfy i % up == 0, 0 <= i/up < n_in, 0 <= k < lh
    std::int64_t i_lo = std::max<std::int64_t>(0, pos - (lh - 1));
    std::int64_t i0 = ((i_lo + up - 1) / up) * up;
    const std::int64_t i_hi = std::min<std::int64_t>(pos, (n_in - 1) * up);
    for (std::int64_t i = i0; i <= i_hi; i += up)
      acc += hp[static_cast<std::size_t>(pos - i)] *
             x[static_cast<std::size_t>(i / up)];
    y[static_cast<std::size_t>(m)] = acc;
  }
  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i)
    out[static_cast<std::size_t>(i)] =
        y[static_cast<std::size_t>(i + n_pre_remove)];
  return out;
}

std::vector<std::vector<int>> third_octave_bands() {
  // Center frequencies 150*2^(k/3); edges snapped to the nearest bin of the
  // 512-point grid at 10 kHz.
  const int bins = kFft / 2 + 1;
  std::vector<double> f(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k)
    f[static_cast<std::size_t>(k)] =
        static_cast<double>(k) * kStoiFs / kFft;
  std::vector<std::vector<int>> bands(kBands);
  for (int j = 0; j < kBands; ++j) {
    const double cf = std::pow(2.0, j / 3.0) * kMinBandHz;
    const double fl = std::sqrt(cf * std::pow(2.0, (j - 1) / 3.0) * kMinBandHz);
    const double fr = std::sqrt(cf * std::pow(2.0, (j + 1) / 3.0) * kMinBandHz);
    int il = 0, ir = 0;
    double dl = 1e300, dr = 1e300;
    for (int k = 0; k < bins; ++k) {
      const double ddl = (f[static_cast<std::size_t>(k)] - fl) *
                         (f[static_cast<std::size_t>(k)] - fl);
      if (ddl < dl) {
        dl = ddl;
        il = k;
      }
      const double ddr = (f[static_cast<std::size_t>(k)] - fr) *
                         (f[static_cast<std::size_t>(k)] - fr);
      if (ddr < dr) {
        dr = ddr;
        ir = k;
      }
    }
    for (int k = il; k < ir; ++k) bands[static_cast<std::size_t>(j)].push_back(k);
  }
  return bands;
}

namespace {

// MATLAB-style symmetric Hann with nonzero endpoints dropped:
// w[i] = 0.5(1 - cos(2 pi (i+1) / (N+1))), i = 0..N-1.
std::vector<double> stoi_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * kPi * (i + 1) / (n + 1)));
  return w;
}

}  // namespace

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y,
                          double dyn_range_db, int frame_len, int hop) {
  const auto w = stoi_window(frame_len);
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + frame_len <= n; s += hop) starts.push_back(s);
  std::vector<char> keep(starts.size(), 0);
  double emax = -1e300;
  std::vector<double> edb(starts.size());
  for (std::size_t m = 0; m < starts.size(); ++m) {
    double e = 0.0;
    for (int i = 0; i < frame_len; ++i) {
      const double v = x[static_cast<std::size_t>(starts[m] + i)] *
                       w[static_cast<std::size_t>(i)];
      e += v * v;
    }
    edb[m] = 20.0 * std::log10(std::sqrt(e / frame_len) + kEps);
    emax = std::max(emax, edb[m]);
  }
  std::size_t count = 0;
  for (std::size_t m = 0; m < starts.size(); ++m)
    if (edb[m] > emax - dyn_range_db) keep[m] = 1, ++count;
  if (count == 0) {
    x.clear();
    y.clear();
    return;
  }
  const std::int64_t out_len =
      static_cast<std::int64_t>(count - 1) * hop + frame_len;
  std::vector<double> xs(static_cast<std::size_t>(out_len), 0.0);
  std::vector<double> ys(static_cast<std::size_t>(out_len), 0.0);
  std::int64_t o = 0;
  for (std::size_t m = 0; m < starts.size(); ++m) {
    if (!keep[m]) continue;
    for (int i = 0; i < frame_len; ++i) {
      xs[static_cast<std::size_t>(o + i)] +=
          x[static_cast<std::size_t>(starts[m] + i)] *
          w[static_cast<std::size_t>(i)];
      ys[static_cast<std::size_t>(o + i)] +=
          y[static_cast<std::size_t>(starts[m] + i)] *
          w[static_cast<std::size_t>(i)];
    }
    o += hop;
  }
  x = std::move(xs);
  y = std::move(ys);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// STOI
// ---------------------------------------------------------------------------

namespace {

// Band envelopes: [bands x frames] of sqrt(sum |X|^2 over band bins).
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  const auto w = [] {
    std::vector<double> win(kFrame);
    for (int i = 0; i < kFrame; ++i)
      win[static_cast<std::size_t>(i)] =
          0.5 * (1.0 - std::cos(2.0 * kPi * (i + 1) / (kFrame + 1)));
    return win;
  }();
  static const auto bands = detail::third_octave_bands();
  const auto& plan = dsp::detail::DftPlan::get(kFft);
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + kFrame <= n; s += kHop) starts.push_back(s);
  std::vector<std::vector<double>> env(
      kBands, std::vector<double>(starts.size(), 0.0));
  std::vector<double> frame(kFft, 0.0);
  std::vector<double> re(static_cast<std::size_t>(plan.bins));
  std::vector<double> im(static_cast<std::size_t>(plan.bins));
  for (std::size_t m = 0; m < starts.size(); ++m) {
    for (int i = 0; i < kFrame; ++i)
      frame[static_cast<std::size_t>(i)] =
          x[static_cast<std::size_t>(starts[m] + i)] *
          w[static_cast<std::size_t>(i)];
    dsp::detail::rdft_forward(plan, frame.data(), re.data(), im.data());
    for (int j = 0; j < kBands; ++j) {
      double s = 0.0;
      for (int k : bands[static_cast<std::size_t>(j)])
        s += re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
             im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)];
      env[static_cast<std::size_t>(j)][m] = std::sqrt(s);
    }
  }
  return env;
}

}  // namespace

double stoi(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& processed) {
  require(clean.samples.size() == processed.samples.size(),
          ErrorKind::kLengthMismatch, "stoi: length mismatch");
  require(clean.sample_rate == 16000 && processed.sample_rate == 16000,
          ErrorKind::kResampleRequired, "stoi: inputs must be 16 kHz");
  require(!clean.samples.empty(), ErrorKind::kEmptyInput, "stoi: empty input");

  std::vector<double> x = detail::resample_16k_to_10k(clean.samples);
  std::vector<double> y = detail::resample_16k_to_10k(processed.samples);
  detail::remove_silent_frames(x, y, kDynRangeDb, kFrame, kHop);
  require(static_cast<int>(x.size()) >= kFrame, ErrorKind::kTooShort,
          "stoi: no active frames after silence removal");

  const auto ex = band_envelopes(x);
  const auto ey = band_envelopes(y);
  const int frames = static_cast<int>(ex[0].size());
  require(frames >= kSegFrames, ErrorKind::kTooShort,
          "stoi: fewer than one 384 ms segment after silence removal");

  const double clip = std::pow(10.0, -kBetaDb / 20.0);  // 1 + 10^(-beta/20)
  double sum = 0.0;
  int count = 0;
  std::vector<double> xs(kSegFrames), ys(kSegFrames);
  for (int m = kSegFrames; m <= frames; ++m) {
    for (int j = 0; j < kBands; ++j) {
      double nx = 0.0, ny = 0.0;
      for (int i = 0; i < kSegFrames; ++i) {
        xs[static_cast<std::size_t>(i)] =
            ex[static_cast<std::size_t>(j)][static_cast<std::size_t>(m - kSegFrames + i)];
        ys[static_cast<std::size_t>(i)] =
            ey[static_cast<std::size_t>(j)][static_cast<std::size_t>(m - kSegFrames + i)];
        nx += xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
        ny += ys[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
      }
      const double alpha = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < kSegFrames; ++i) {
        double v = ys[static_cast<std::size_t>(i)] * alpha;
        const double cap = (1.0 + clip) * xs[static_cast<std::size_t>(i)];
        if (v > cap) v = cap;
        ys[static_cast<std::size_t>(i)] = v;
        mx += xs[static_cast<std::size_t>(i)];
        my += v;
      }
      mx /= kSegFrames;
      my /= kSegFrames;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (int i = 0; i < kSegFrames; ++i) {
        const double a = xs[static_cast<std::size_t>(i)] - mx;
        const double b = ys[static_cast<std::size_t>(i)] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
      }
      sum += num / (std::sqrt(dx) * std::sqrt(dy) + kEps);
      ++count;
    }
  }
  return sum / count;
}

// ---------------------------------------------------------------------------
// SI-SDR
// ---------------------------------------------------------------------------

double si_sdr(const dsp::AudioBuffer& reference,
              const dsp::AudioBuffer& estimate) {
  require(reference.samples.size() == estimate.samples.size(),
          ErrorKind::kLengthMismatch, "si_sdr: length mismatch");
  require(!reference.samples.empty(), ErrorKind::kEmptyInput,
          "si_sdr: empty input");
  const std::int64_t n = static_cast<std::int64_t>(reference.samples.size());
  double ms = 0.0, me = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    ms += reference.samples[static_cast<std::size_t>(i)];
    me += estimate.samples[static_cast<std::size_t>(i)];
  }
  ms /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double dot = 0.0, ss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double s = reference.samples[static_cast<std::size_t>(i)] - ms;
    const double e = estimate.samples[static_cast<std::size_t>(i)] - me;
    dot += e * s;
    ss += s * s;
  }
  require(ss > 0.0, ErrorKind::kZeroReference, "si_sdr: zero reference");
  const double alpha = dot / ss;
  double pt = 0.0, pe = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double s = reference.samples[static_cast<std::size_t>(i)] - ms;
    const double e = estimate.samples[static_cast<std::size_t>(i)] - me;
    const double st = alpha * s;
    pt += st * st;
    pe += (e - st) * (e - st);
  }
  if (pt <= 0.0) return -kSiSdrCapDb;
  if (pe <= 0.0) return kSiSdrCapDb;
  const double v = 10.0 * std::log10(pt / pe);
  return std::max(-kSiSdrCapDb, std::min(kSiSdrCapDb, v));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

MetricsReport evaluate_manifest(const data::SceneManifest& manifest,
                                const model::Model* model,
                                const std::string& out_path) {
  data::validate_manifest(manifest);
  MetricsReport report;
  report.mode = model ? "checkpoint" : "passthrough";
  double s_stoi = 0.0, s_sdr = 0.0, s_imp = 0.0;
  for (const auto& spec : manifest.scenes) {
    const std::string dir = data::scene_dir(manifest, spec);
    dsp::AudioBuffer noisy = dsp::read_wav(dir + "/noisy.wav");
    dsp::AudioBuffer clean = dsp::read_wav(dir + "/clean.wav");
    dsp::AudioBuffer enhanced;
    if (model) {
      model::VisualEmbeddingSequence vemb;
      const model::VisualEmbeddingSequence* vptr = nullptr;
      if (model->config().use_visual) {
        vemb = model::read_vemb(dir + "/" + spec.scene_id + ".vemb");
        vptr = &vemb;
      }
      enhanced = model->forward(noisy, vptr).enhanced;
    } else {
      enhanced = noisy;
    }
    SceneMetrics row;
    row.scene_id = spec.scene_id;
    row.stoi_score = stoi(clean, enhanced);
    row.si_sdr_db = si_sdr(clean, enhanced);
    row.si_sdr_improvement_db = row.si_sdr_db - si_sdr(clean, noisy);
    s_stoi += row.stoi_score;
    s_sdr += row.si_sdr_db;
    s_imp += row.si_sdr_improvement_db;
    report.rows.push_back(std::move(row));
  }
  const double n = std::max<std::size_t>(1, report.rows.size());
  report.mean.scene_id = "mean";
  report.mean.stoi_score = s_stoi / n;
  report.mean.si_sdr_db = s_sdr / n;
  report.mean.si_sdr_improvement_db = s_imp / n;
  if (!out_path.empty()) {
    std::ofstream js(out_path, std::ios::trunc);
    require(js.good(), ErrorKind::kFile, "cannot write " + out_path);
    js << report_json(report) << "\n";
    std::ofstream ts(out_path + ".txt", std::ios::trunc);
    require(ts.good(), ErrorKind::kFile, "cannot write " + out_path + ".txt");
    ts << report_table(report);
  }
  return report;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::json j;
  j["version"] = report.version;
  j["mode"] = report.mode;
  if (!report.checkpoint.empty()) j["checkpoint"] = report.checkpoint;
  j["scan_chunk"] = ssm::kScanChunk;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json rj;
    rj["scene_id"] = r.scene_id;
    rj["stoi"] = r.stoi_score;
    rj["si_sdr_db"] = r.si_sdr_db;
    rj["si_sdr_improvement_db"] = r.si_sdr_improvement_db;
    j["rows"].push_back(std::move(rj));
  }
  j["mean"]["stoi"] = report.mean.stoi_score;
  j["mean"]["si_sdr_db"] = report.mean.si_sdr_db;
  j["mean"]["si_sdr_improvement_db"] = report.mean.si_sdr_improvement_db;
  return j.dump(2);
}

std::string report_table(const MetricsReport& report) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %8s %12s %14s\n", "Scene", "STOI",
                "SI-SDR(dB)", "dSI-SDR(dB)");
  os << line;
  auto put = [&](const SceneMetrics& r) {
    std::snprintf(line, sizeof(line), "%-16s %8.4f %12.2f %14.2f\n",
                  r.scene_id.c_str(), r.stoi_score, r.si_sdr_db,
                  r.si_sdr_improvement_db);
    os << line;
  };
  for (const auto& r : report.rows) put(r);
  put(report.mean);
  return os.str();
}

}  // namespace avsm::metrics
