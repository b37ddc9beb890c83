// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "avsm/model.hpp"
#include "json.hpp"

namespace avsm::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kPeakLimit = 0.99;
constexpr int kTrimFrame = 400;  // 25 ms at 16 kHz
constexpr int kTrimHop = 100;
constexpr double kTrimRangeDb = 40.0;

std::string join(const std::string& base, const std::string& rel) {
  if (rel.empty()) return base;
  if (fs::path(rel).is_absolute()) return rel;
  return (fs::path(base) / rel).string();
}

}  // namespace

double power_silence_trimmed(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < kTrimFrame) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(n);
  }
  const int frames = 1 + static_cast<int>((n - kTrimFrame) / kTrimHop);
  std::vector<double> energy(static_cast<std::size_t>(frames));
  double emax = 0.0;
  for (int m = 0; m < frames; ++m) {
    double s = 0.0;
    const double* p = x.data() + static_cast<std::int64_t>(m) * kTrimHop;
    for (int i = 0; i < kTrimFrame; ++i) s += p[i] * p[i];
    energy[static_cast<std::size_t>(m)] = s;
    emax = std::max(emax, s);
  }
  if (emax <= 0.0) return 0.0;
  const double thresh = emax * std::pow(10.0, -kTrimRangeDb / 10.0);
  std::vector<char> keep(x.size(), 0);
  for (int m = 0; m < frames; ++m) {
    if (energy[static_cast<std::size_t>(m)] >= thresh) {
      const std::int64_t off = static_cast<std::int64_t>(m) * kTrimHop;
      for (int i = 0; i < kTrimFrame; ++i)
        keep[static_cast<std::size_t>(off + i)] = 1;
    }
  }
  double s = 0.0;
  std::int64_t cnt = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep[i]) {
      s += x[i] * x[i];
      ++cnt;
    }
  }
  return cnt > 0 ? s / static_cast<double>(cnt) : 0.0;
}

namespace {

// Aligns a source to the target length per the offset policy. Returns the
// aligned samples and the active-region length (pad fill may leave a zero
// tail that is excluded from power measurement).
std::pair<std::vector<double>, std::int64_t> align_source(
    const std::vector<double>& src, std::int64_t target_len,
    const OffsetPolicy& pol) {
  require(!src.empty(), ErrorKind::kZeroPowerSource, "empty source audio");
  std::vector<double> out(static_cast<std::size_t>(target_len), 0.0);
  const std::int64_t n = static_cast<std::int64_t>(src.size());
  std::int64_t active = target_len;
  if (pol.fill == OffsetPolicy::Fill::kLoop) {
    for (std::int64_t i = 0; i < target_len; ++i) {
      std::int64_t j = (pol.start + i) % n;
      if (j < 0) j += n;
      out[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(j)];
    }
  } else {
    active = std::max<std::int64_t>(
        0, std::min(target_len, n - pol.start));
    for (std::int64_t i = 0; i < active; ++i)
      out[static_cast<std::size_t>(i)] =
          src[static_cast<std::size_t>(pol.start + i)];
  }
  require(active > 0, ErrorKind::kZeroPowerSource,
          "source has no overlap with the target span");
  return {std::move(out), active};
}

double mean_square(const std::vector<double>& x, std::int64_t upto) {
  double s = 0.0;
  for (std::int64_t i = 0; i < upto; ++i) s += x[static_cast<std::size_t>(i)] *
                                               x[static_cast<std::size_t>(i)];
  return upto > 0 ? s / static_cast<double>(upto) : 0.0;
}

}  // namespace

MixResult mix_scene(const SceneSpec& spec, const std::string& base_dir) {
  require(spec.interferer_path.has_value() || spec.noise_path.has_value(),
          ErrorKind::kValidation,
          "scene '" + spec.scene_id + "': needs interferer and/or noise");
  require(std::isfinite(spec.snr_interferer_db) &&
              std::isfinite(spec.snr_noise_db),
          ErrorKind::kValidation,
          "scene '" + spec.scene_id + "': non-finite SNR");
  dsp::AudioBuffer target = dsp::read_wav(join(base_dir, spec.target_path));
  require(!target.samples.empty(), ErrorKind::kEmptyInput,
          "scene '" + spec.scene_id + "': empty target");
  const std::int64_t len = static_cast<std::int64_t>(target.samples.size());
  const double p_target = power_silence_trimmed(target.samples);
  require(p_target > 0.0, ErrorKind::kZeroPowerSource,
          "scene '" + spec.scene_id + "': target has zero power");

  MixResult r;
  r.noisy.sample_rate = target.sample_rate;
  r.noisy.samples = target.samples;
  r.clean = target;

  std::int64_t active_int = 0, active_nse = 0;
  auto add_source = [&](const std::string& path, const OffsetPolicy& pol,
                        double snr_db, dsp::AudioBuffer& stem) {
    dsp::AudioBuffer src = dsp::read_wav(join(base_dir, path));
    auto [aligned, active] = align_source(src.samples, len, pol);
    const double p_src = mean_square(aligned, active);
    require(p_src > 0.0, ErrorKind::kZeroPowerSource,
            "scene '" + spec.scene_id + "': source '" + path +
                "' has zero power");
    const double gain =
        std::sqrt(p_target / (p_src * std::pow(10.0, snr_db / 10.0)));
    stem.sample_rate = target.sample_rate;
    stem.samples.resize(static_cast<std::size_t>(len));
    for (std::int64_t i = 0; i < len; ++i) {
      const double v = gain * aligned[static_cast<std::size_t>(i)];
      stem.samples[static_cast<std::size_t>(i)] = v;
      r.noisy.samples[static_cast<std::size_t>(i)] += v;
    }
    return active;
  };

  if (spec.interferer_path)
    active_int = add_source(*spec.interferer_path, spec.interferer_offset,
                            spec.snr_interferer_db, r.interferer_scaled);
  if (spec.noise_path)
    active_nse = add_source(*spec.noise_path, spec.noise_offset,
                            spec.snr_noise_db, r.noise_scaled);

  double peak = 0.0;
  for (double v : r.noisy.samples) peak = std::max(peak, std::abs(v));
  if (peak > kPeakLimit) {
    const double s = kPeakLimit / peak;
    r.peak_rescale = s;
    for (auto* buf : {&r.noisy, &r.clean, &r.interferer_scaled,
                      &r.noise_scaled})
      for (double& v : buf->samples) v *= s;
  }

  // Post-mix audit with the same power conventions used for scaling.
  const double p_clean = power_silence_trimmed(r.clean.samples);
  auto measured = [&](const dsp::AudioBuffer& stem, std::int64_t active) {
    if (stem.samples.empty() || active <= 0) return 0.0;
    const double p = mean_square(stem.samples, active);
    return 10.0 * std::log10(p_clean / p);
  };
  r.measured_snr_interferer_db = measured(r.interferer_scaled, active_int);
  r.measured_snr_noise_db = measured(r.noise_scaled, active_nse);
  return r;
}

// ---------------------------------------------------------------------------
// Toy corpus synthesis
// ---------------------------------------------------------------------------

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;
  double step(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

Biquad resonator(double freq_hz, double r, int sr) {
  // two-pole resonator, unity peak-ish gain
  const double w = 2.0 * kPi * freq_hz / sr;
  Biquad b{};
  b.b0 = (1.0 - r * r) / 2.0;
  b.b1 = 0.0;
  b.b2 = -b.b0;
  b.a1 = -2.0 * r * std::cos(w);
  b.a2 = r * r;
  return b;
}

void normalize_rms(std::vector<double>& x, double target_rms) {
  double s = 0.0;
  for (double v : x) s += v * v;
  const double rms = std::sqrt(s / static_cast<double>(x.size()));
  if (rms <= 0.0) return;
  double g = target_rms / rms;
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak * g > 0.7) g = 0.7 / peak;
  for (double& v : x) v *= g;
}

// Amplitude-modulated filtered noise with pauses: a crude utterance.
std::vector<double> synth_speech_like(std::int64_t n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n));
  Biquad f1 = resonator(rng.uniform(300.0, 900.0), rng.uniform(0.94, 0.985), sr);
  Biquad f2 =
      resonator(rng.uniform(1200.0, 2800.0), rng.uniform(0.93, 0.98), sr);
  const double tilt = rng.uniform(0.2, 0.45);
  double lp = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = rng.normal();
    lp = tilt * lp + (1.0 - tilt) * w;
    x[static_cast<std::size_t>(i)] =
        0.7 * f1.step(lp) + 0.5 * f2.step(lp) + 0.05 * lp;
  }
  // syllabic modulation
  const double f_syl = rng.uniform(2.0, 5.0);
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);
  for (std::int64_t i = 0; i < n; ++i) {
    const double tsec = static_cast<double>(i) / sr;
    const double e = 0.55 + 0.45 * std::sin(2.0 * kPi * f_syl * tsec + phase0);
    x[static_cast<std::size_t>(i)] *= e * e;
  }
  // pauses: ~25% silent segments with 20 ms raised-cosine edges
  const std::int64_t ramp = sr / 50;
  std::int64_t pos = 0;
  while (pos < n) {
    const std::int64_t seg =
        static_cast<std::int64_t>(rng.uniform(0.15, 0.45) * sr);
    const bool silent = rng.uniform() < 0.25;
    if (silent) {
      const std::int64_t end = std::min(n, pos + seg);
      for (std::int64_t i = pos; i < end; ++i) {
        double g = 0.0;
        if (i - pos < ramp)
          g = 0.5 * (1.0 + std::cos(kPi * static_cast<double>(i - pos) / ramp));
        else if (end - 1 - i < ramp)
          g = 0.5 *
              (1.0 + std::cos(kPi * static_cast<double>(end - 1 - i) / ramp));
        x[static_cast<std::size_t>(i)] *= g;
      }
    }
    pos += seg;
  }
  normalize_rms(x, 0.1);
  return x;
}

// Harmonic tone stack with vibrato and slow AM.
std::vector<double> synth_tonal(std::int64_t n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  const double f0 = rng.uniform(100.0, 400.0);
  const double vib_rate = rng.uniform(4.0, 7.0);
  const double vib_depth = rng.uniform(0.0, 0.02);
  const double am_rate = rng.uniform(1.0, 3.0);
  const int harmonics = 4;
  std::vector<double> phases(harmonics);
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> phase_acc(harmonics, 0.0);
  for (int k = 0; k < harmonics; ++k) phase_acc[static_cast<std::size_t>(k)] = phases[static_cast<std::size_t>(k)];
  for (std::int64_t i = 0; i < n; ++i) {
    const double tsec = static_cast<double>(i) / sr;
    const double f = f0 * (1.0 + vib_depth * std::sin(2.0 * kPi * vib_rate * tsec));
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      phase_acc[static_cast<std::size_t>(k)] +=
          2.0 * kPi * f * (k + 1) / sr;
      v += std::sin(phase_acc[static_cast<std::size_t>(k)]) / (k + 1);
    }
    const double am = 0.7 + 0.3 * std::sin(2.0 * kPi * am_rate * tsec);
    x[static_cast<std::size_t>(i)] = v * am;
  }
  normalize_rms(x, 0.1);
  return x;
}

// One-pole colored noise.
std::vector<double> synth_colored_noise(std::int64_t n, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n));
  const double a = rng.uniform(0.8, 0.995);
  double y = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    y = a * y + (1.0 - a) * rng.normal();
    x[static_cast<std::size_t>(i)] = y;
  }
  normalize_rms(x, 0.1);
  return x;
}

// Informative stub embeddings: a seeded projection of the target's
// short-time envelope at the video frame rate.
model::VisualEmbeddingSequence envelope_embeddings(
    const std::vector<double>& clean, int sr, int fps, int dim, Rng& wrng) {
  const std::int64_t n = static_cast<std::int64_t>(clean.size());
  const int v_frames =
      std::max<int>(1, static_cast<int>((n * fps + sr - 1) / sr));
  const std::int64_t win = sr / fps;
  std::vector<double> env(static_cast<std::size_t>(v_frames), 0.0);
  for (int v = 0; v < v_frames; ++v) {
    const std::int64_t lo = static_cast<std::int64_t>(v) * win;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + win);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i)
      s += clean[static_cast<std::size_t>(i)] *
           clean[static_cast<std::size_t>(i)];
    env[static_cast<std::size_t>(v)] =
        hi > lo ? std::sqrt(s / static_cast<double>(hi - lo)) : 0.0;
  }
  constexpr int kFeat = 4;
  std::vector<double> proj(static_cast<std::size_t>(kFeat) * dim);
  for (auto& w : proj) w = wrng.normal(0.0, 0.5);
  model::VisualEmbeddingSequence emb;
  emb.frames = v_frames;
  emb.dim = dim;
  emb.source = model::VisualEmbeddingSequence::Source::kStubEncoder;
  emb.data.assign(static_cast<std::size_t>(v_frames) * dim, 0.0);
  for (int v = 0; v < v_frames; ++v) {
    const double e = env[static_cast<std::size_t>(v)];
    const double prev = v > 0 ? env[static_cast<std::size_t>(v - 1)] : e;
    const double feat[kFeat] = {e, e - prev, std::log(e + 1e-6), 1.0};
    for (int d = 0; d < dim; ++d) {
      double acc = 0.0;
      for (int k = 0; k < kFeat; ++k)
        acc += feat[k] * proj[static_cast<std::size_t>(k) * dim + d];
      emb.data[static_cast<std::size_t>(v) * dim + d] = 0.1 * acc;
    }
  }
  return emb;
}

}  // namespace

SceneManifest generate_toy_corpus(int n_scenes, std::uint64_t seed,
                                  const std::string& out_dir,
                                  const ToyCorpusOptions& opts) {
  require(n_scenes >= 0, ErrorKind::kConfig,
          "generate_toy_corpus: negative scene count");
  require(opts.duration_s > 0.05, ErrorKind::kConfig,
          "generate_toy_corpus: duration too short");
  const int sr = 16000;
  const std::int64_t n = static_cast<std::int64_t>(opts.duration_s * sr);
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "sources", ec);
  require(!ec, ErrorKind::kFile, "cannot create " + out_dir);
  fs::create_directories(fs::path(out_dir) / "scenes", ec);
  require(!ec, ErrorKind::kFile, "cannot create " + out_dir);

  SceneManifest manifest;
  manifest.base_dir = fs::absolute(out_dir).string();
  Rng corpus_rng(seed);
  Rng emb_rng = corpus_rng.fork(0xE3B5);  // shared embedding projection

  for (int i = 0; i < n_scenes; ++i) {
    Rng rng = Rng(seed).fork(0x5C3E + static_cast<std::uint64_t>(i));
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "scene_%04d", i);
    const std::string id = idbuf;

    const auto target = synth_speech_like(n, sr, rng);
    const auto interferer = synth_tonal(n, sr, rng);
    const auto noise = synth_colored_noise(n, rng);

    const std::string tgt_rel = "sources/" + id + "_target.wav";
    const std::string int_rel = "sources/" + id + "_interferer.wav";
    const std::string nse_rel = "sources/" + id + "_noise.wav";
    dsp::write_wav(join(out_dir, tgt_rel), {target, sr});
    dsp::write_wav(join(out_dir, int_rel), {interferer, sr});
    dsp::write_wav(join(out_dir, nse_rel), {noise, sr});

    SceneSpec spec;
    spec.scene_id = id;
    spec.target_path = tgt_rel;
    spec.interferer_path = int_rel;
    spec.noise_path = nse_rel;
    spec.snr_interferer_db = rng.uniform(opts.snr_lo_db, opts.snr_hi_db);
    spec.snr_noise_db = rng.uniform(opts.snr_lo_db, opts.snr_hi_db);
    spec.seed = rng.next_u64();

    const std::string sdir = (fs::path(out_dir) / "scenes" / id).string();
    fs::create_directories(sdir, ec);
    require(!ec, ErrorKind::kFile, "cannot create " + sdir);
    MixResult mixed = mix_scene(spec, out_dir);
    dsp::write_wav(sdir + "/noisy.wav", mixed.noisy);
    dsp::write_wav(sdir + "/clean.wav", mixed.clean);
    dsp::write_wav(sdir + "/interferer_scaled.wav", mixed.interferer_scaled);
    dsp::write_wav(sdir + "/noise_scaled.wav", mixed.noise_scaled);

    // embeddings from the final (possibly peak-rescaled) clean target
    Rng wrng = emb_rng;  // same projection for every scene
    auto emb = envelope_embeddings(mixed.clean.samples, sr, 25,
                                   opts.visual_dim, wrng);
    model::write_vemb(sdir + "/" + id + ".vemb", emb);

    manifest.scenes.push_back(std::move(spec));
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

namespace {

json offset_to_json(const OffsetPolicy& p) {
  json j;
  j["start"] = p.start;
  j["fill"] = p.fill == OffsetPolicy::Fill::kLoop ? "loop" : "pad";
  return j;
}

OffsetPolicy offset_from_json(const json& j, const std::string& where) {
  OffsetPolicy p;
  for (auto it = j.begin(); it != j.end(); ++it)
    require(it.key() == "start" || it.key() == "fill", ErrorKind::kValidation,
            "unknown field '" + where + "." + it.key() + "'");
  if (j.contains("start")) p.start = j["start"].get<std::int64_t>();
  if (j.contains("fill")) {
    const std::string f = j["fill"].get<std::string>();
    require(f == "loop" || f == "pad", ErrorKind::kValidation,
            where + ".fill: expected 'loop' or 'pad'");
    p.fill = f == "loop" ? OffsetPolicy::Fill::kLoop : OffsetPolicy::Fill::kPad;
  }
  return p;
}

}  // namespace

void save_manifest(const SceneManifest& manifest, const std::string& path) {
  json j;
  j["version"] = manifest.version;
  j["sample_rate"] = manifest.sample_rate;
  j["scenes"] = json::array();
  for (const auto& s : manifest.scenes) {
    json sj;
    sj["scene_id"] = s.scene_id;
    sj["target"] = s.target_path;
    if (s.interferer_path) sj["interferer"] = *s.interferer_path;
    if (s.noise_path) sj["noise"] = *s.noise_path;
    sj["snr_interferer_db"] = s.snr_interferer_db;
    sj["snr_noise_db"] = s.snr_noise_db;
    sj["seed"] = s.seed;
    sj["interferer_offset"] = offset_to_json(s.interferer_offset);
    sj["noise_offset"] = offset_to_json(s.noise_offset);
    j["scenes"].push_back(std::move(sj));
  }
  std::ofstream os(path, std::ios::trunc);
  require(os.good(), ErrorKind::kFile, "cannot write " + path);
  os << j.dump(2) << "\n";
  require(os.good(), ErrorKind::kFile, "write failed: " + path);
}

SceneManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kFile, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation,
         "manifest " + path + ": " + std::string(e.what()));
  }
  SceneManifest m;
  m.base_dir = fs::absolute(fs::path(path)).parent_path().string();
  try {
    for (auto it = j.begin(); it != j.end(); ++it)
      require(it.key() == "version" || it.key() == "sample_rate" ||
                  it.key() == "scenes",
              ErrorKind::kValidation, "unknown field '" + it.key() + "'");
    require(j.contains("version") && j.contains("sample_rate") &&
                j.contains("scenes"),
            ErrorKind::kValidation,
            "manifest: version, sample_rate and scenes are required");
    m.version = j["version"].get<int>();
    require(m.version == 1, ErrorKind::kVersionMismatch,
            "unsupported manifest version " + std::to_string(m.version));
    m.sample_rate = j["sample_rate"].get<int>();
    for (const auto& sj : j["scenes"]) {
      SceneSpec s;
      for (auto it = sj.begin(); it != sj.end(); ++it) {
        static const std::set<std::string> known = {
            "scene_id", "target", "interferer", "noise", "snr_interferer_db",
            "snr_noise_db", "seed", "interferer_offset", "noise_offset"};
        require(known.count(it.key()) > 0, ErrorKind::kValidation,
                "unknown scene field '" + it.key() + "'");
      }
      s.scene_id = sj.at("scene_id").get<std::string>();
      s.target_path = sj.at("target").get<std::string>();
      if (sj.contains("interferer"))
        s.interferer_path = sj["interferer"].get<std::string>();
      if (sj.contains("noise")) s.noise_path = sj["noise"].get<std::string>();
      if (sj.contains("snr_interferer_db"))
        s.snr_interferer_db = sj["snr_interferer_db"].get<double>();
      if (sj.contains("snr_noise_db"))
        s.snr_noise_db = sj["snr_noise_db"].get<double>();
      if (sj.contains("seed")) s.seed = sj["seed"].get<std::uint64_t>();
      if (sj.contains("interferer_offset"))
        s.interferer_offset = offset_from_json(
            sj["interferer_offset"], "scene '" + s.scene_id + "'");
      if (sj.contains("noise_offset"))
        s.noise_offset =
            offset_from_json(sj["noise_offset"], "scene '" + s.scene_id + "'");
      m.scenes.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation,
         "manifest " + path + ": " + std::string(e.what()));
  }
  validate_manifest(m);
  return m;
}

void validate_manifest(const SceneManifest& m) {
  require(m.sample_rate == 16000, ErrorKind::kValidation,
          "manifest: sample_rate must be 16000");
  std::set<std::string> ids;
  for (const auto& s : m.scenes) {
    require(!s.scene_id.empty(), ErrorKind::kValidation,
            "manifest: empty scene_id");
    require(ids.insert(s.scene_id).second, ErrorKind::kValidation,
            "manifest: duplicate scene_id '" + s.scene_id + "'");
    require(s.interferer_path.has_value() || s.noise_path.has_value(),
            ErrorKind::kValidation,
            "scene '" + s.scene_id + "': needs interferer and/or noise");
    require(std::isfinite(s.snr_interferer_db) &&
                std::isfinite(s.snr_noise_db),
            ErrorKind::kValidation,
            "scene '" + s.scene_id + "': non-finite SNR");
    for (const auto* p :
         {&s.target_path, s.interferer_path ? &*s.interferer_path : nullptr,
          s.noise_path ? &*s.noise_path : nullptr}) {
      if (!p) continue;
      const std::string full = join(m.base_dir, *p);
      require(fs::exists(full), ErrorKind::kValidation,
              "scene '" + s.scene_id + "': missing file " + full);
    }
  }
}

std::string scene_dir(const SceneManifest& manifest, const SceneSpec& spec) {
  return (fs::path(manifest.base_dir) / "scenes" / spec.scene_id).string();
}

}  // namespace avsm::data
