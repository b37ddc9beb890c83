// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/model.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace avsm::model {

using nlohmann::json;

namespace {
constexpr int kSampleRate = 16000;  // project-wide audio rate
}

void validate(const ModelConfig& cfg) {
  dsp::validate(cfg.stft);
  require(cfg.d_model >= 1 && cfg.n_tf_blocks >= 0 && cfg.d_state >= 1 &&
              cfg.d_conv >= 1 && cfg.expand >= 1,
          ErrorKind::kConfig, "model config: bad network sizes");
  require(cfg.visual_dim >= 1 && cfg.visual_proj_channels >= 1 &&
              cfg.visual_fps >= 1,
          ErrorKind::kConfig, "model config: bad visual sizes");
  require(cfg.mask_activation == "bounded_sigmoid_2x", ErrorKind::kConfig,
          "model config: unknown mask_activation '" + cfg.mask_activation +
              "'");
  // frame_rate / visual_fps must reduce to p/q with small q
  const long long num = kSampleRate;
  const long long den =
      static_cast<long long>(cfg.stft.hop) * cfg.visual_fps;
  const long long g = std::gcd(num, den);
  require(den / g <= 16, ErrorKind::kConfig,
          "model config: audio/visual frame rates are not rationally "
          "aligned (reduced denominator " +
              std::to_string(den / g) + " > 16)");
}

// ---------------------------------------------------------------------------
// Visual embeddings
// ---------------------------------------------------------------------------

namespace {

void wr_u32v(std::string& s, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  s.append(b, 4);
}

std::uint32_t rd_u32v(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint32_t kVembVersion = 1;

}  // namespace

VisualEmbeddingSequence read_vemb(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kFile, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 16, ErrorKind::kCorruptFile,
          "truncated vemb: " + path);
  require(std::memcmp(bytes.data(), "VEMB", 4) == 0, ErrorKind::kCorruptFile,
          "bad magic in " + path);
  const std::uint32_t version = rd_u32v(bytes.data() + 4);
  require(version == kVembVersion, ErrorKind::kVersionMismatch,
          "unsupported vemb version " + std::to_string(version));
  const std::uint32_t v = rd_u32v(bytes.data() + 8);
  const std::uint32_t dim = rd_u32v(bytes.data() + 12);
  require(v >= 1 && dim >= 1, ErrorKind::kCorruptFile,
          "empty vemb: " + path);
  require(bytes.size() == 16 + 4ull * v * dim, ErrorKind::kCorruptFile,
          "vemb size mismatch: " + path);
  VisualEmbeddingSequence out;
  out.frames = static_cast<int>(v);
  out.dim = static_cast<int>(dim);
  out.source = VisualEmbeddingSequence::Source::kPrecomputedFile;
  out.data.resize(static_cast<std::size_t>(v) * dim);
  const unsigned char* p = bytes.data() + 16;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    float f;
    std::memcpy(&f, p + 4 * i, 4);
    require(std::isfinite(f), ErrorKind::kCorruptFile,
            "non-finite embedding in " + path);
    out.data[i] = static_cast<double>(f);
  }
  return out;
}

void write_vemb(const std::string& path, const VisualEmbeddingSequence& v) {
  require(v.frames >= 1 && v.dim >= 1, ErrorKind::kShape,
          "write_vemb: empty sequence");
  std::string buf;
  buf.append("VEMB", 4);
  wr_u32v(buf, kVembVersion);
  wr_u32v(buf, static_cast<std::uint32_t>(v.frames));
  wr_u32v(buf, static_cast<std::uint32_t>(v.dim));
  for (double d : v.data) {
    const float f = static_cast<float>(d);
    char b[4];
    std::memcpy(b, &f, 4);
    buf.append(b, 4);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), ErrorKind::kFile, "cannot write " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(os.good(), ErrorKind::kFile, "write failed: " + path);
}

VisualEmbeddingSequence stub_visual_encoder(const std::vector<double>& video,
                                            int v_frames, int height,
                                            int width, int channels,
                                            int visual_dim,
                                            std::uint64_t seed) {
  VisualEmbeddingSequence out;
  out.dim = visual_dim;
  out.source = VisualEmbeddingSequence::Source::kStubEncoder;
  if (v_frames == 0) {
    out.frames = 1;  // audio-only placeholder
    out.data.assign(static_cast<std::size_t>(visual_dim), 0.0);
    return out;
  }
  const std::int64_t px =
      static_cast<std::int64_t>(height) * width * channels;
  require(px >= 1 && static_cast<std::int64_t>(video.size()) ==
                         static_cast<std::int64_t>(v_frames) * px,
          ErrorKind::kShape, "stub_visual_encoder: bad video shape");
  // Fixed random projection (no bias), same for every frame.
  Rng rng(seed);
  std::vector<double> proj(static_cast<std::size_t>(px) * visual_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(px));
  for (auto& w : proj) w = rng.normal(0.0, scale);
  std::vector<double> per_frame(static_cast<std::size_t>(v_frames) *
                                visual_dim);
  for (int v = 0; v < v_frames; ++v) {
    const double* fr = video.data() + static_cast<std::int64_t>(v) * px;
    for (int d = 0; d < visual_dim; ++d) {
      double acc = 0.0;
      const double* col = proj.data() + static_cast<std::int64_t>(d) * px;
      for (std::int64_t i = 0; i < px; ++i) acc += col[i] * fr[i];
      per_frame[static_cast<std::size_t>(v) * visual_dim + d] = acc;
    }
  }
  // temporal average pool over [v-1, v+1]
  out.frames = v_frames;
  out.data.assign(static_cast<std::size_t>(v_frames) * visual_dim, 0.0);
  for (int v = 0; v < v_frames; ++v) {
    const int lo = std::max(0, v - 1);
    const int hi = std::min(v_frames - 1, v + 1);
    for (int d = 0; d < visual_dim; ++d) {
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j)
        acc += per_frame[static_cast<std::size_t>(j) * visual_dim + d];
      out.data[static_cast<std::size_t>(v) * visual_dim + d] =
          acc / (hi - lo + 1);
    }
  }
  return out;
}

ad::Tensor align_visual(ad::Tape* t, const VisualEmbeddingSequence& v,
                        int target_frames, const ModelConfig& cfg,
                        const ad::Tensor& conv_w, const ad::Tensor& conv_b) {
  require(v.frames >= 1 && v.dim >= 1, ErrorKind::kShape,
          "align_visual: empty embedding sequence");
  require(target_frames >= 1, ErrorKind::kShape,
          "align_visual: target_frames must be >= 1");
  require(v.dim == cfg.visual_dim, ErrorKind::kShape,
          "align_visual: embedding dim " + std::to_string(v.dim) +
              " != configured visual_dim " + std::to_string(cfg.visual_dim));
  const int dv = v.dim;
  ad::Tensor interp = ad::Tensor::zeros({target_frames, dv});
  double* pi = interp.ptr();
  // STFT frame t is centered at t*hop samples; video frame rate is
  // visual_fps. Positions computed in exact integer arithmetic.
  const long long den = kSampleRate;
  for (int ti = 0; ti < target_frames; ++ti) {
    const long long num = static_cast<long long>(ti) * cfg.stft.hop *
                          cfg.visual_fps;
    long long i0 = num / den;
    double frac = static_cast<double>(num - i0 * den) / den;
    if (i0 >= v.frames - 1) {  // hold the last frame
      i0 = v.frames - 1;
      frac = 0.0;
    }
    const long long i1 = std::min<long long>(i0 + 1, v.frames - 1);
    const double* e0 = v.data.data() + i0 * dv;
    const double* e1 = v.data.data() + i1 * dv;
    for (int d = 0; d < dv; ++d)
      pi[static_cast<std::int64_t>(ti) * dv + d] =
          (1.0 - frac) * e0[d] + frac * e1[d];
  }
  return ad::conv1d_same(t, interp, conv_w, conv_b);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

ad::Tensor uniform_param(std::vector<int> shape, double k, Rng& rng) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  double* p = t.ptr();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(-k, k);
  t.requires_grad = true;
  return t;
}

ad::Tensor zeros_param(std::vector<int> shape) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  t.requires_grad = true;
  return t;
}

ad::Tensor ones_param(std::vector<int> shape) {
  ad::Tensor t = ad::Tensor::full(std::move(shape), 1.0);
  t.requires_grad = true;
  return t;
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int bins = cfg.stft.n_fft / 2 + 1;
  const int C = cfg.d_model;
  const int in_ch = 3 + (cfg.use_visual ? cfg.visual_proj_channels : 0);

  if (cfg.use_visual) {
    const int dv = cfg.visual_dim;
    // identity-initialized alignment conv (center tap = I)
    params_.vis_align_w = zeros_param({dv, dv, 3});
    {
      double* w = params_.vis_align_w.ptr();
      for (int o = 0; o < dv; ++o)
        w[(static_cast<std::int64_t>(o) * dv + o) * 3 + 1] = 1.0;
    }
    params_.vis_align_b = zeros_param({dv});
    params_.vis_proj_w = uniform_param({dv, cfg.visual_proj_channels},
                                       1e-3 / std::sqrt(static_cast<double>(dv)),
                                       rng);
    params_.vis_freq_scale = ones_param({bins});
  }

  params_.enc1_w = uniform_param({C, in_ch, 3, 3},
                                 1.0 / std::sqrt(9.0 * in_ch), rng);
  params_.enc1_b = zeros_param({C});
  params_.enc_ln1_g = ones_param({C});
  params_.enc_ln1_b = zeros_param({C});
  params_.enc2_w = uniform_param({C, C, 3, 3}, 1.0 / std::sqrt(9.0 * C), rng);
  params_.enc2_b = zeros_param({C});
  params_.enc_ln2_g = ones_param({C});
  params_.enc_ln2_b = zeros_param({C});

  params_.blocks.reserve(static_cast<std::size_t>(cfg.n_tf_blocks));
  for (int i = 0; i < cfg.n_tf_blocks; ++i) {
    auto b = ssm::make_tf_block_params(C, cfg.d_state, cfg.d_conv, cfg.expand,
                                       rng);
    b.time.causal = cfg.causal;
    b.freq.causal = false;  // frequency axis is non-causal by nature
    params_.blocks.push_back(std::move(b));
  }

  const int dec_ch = std::max(4, C / 2);
  params_.mask_w1 =
      uniform_param({dec_ch, C, 3, 3}, 1.0 / std::sqrt(9.0 * C), rng);
  params_.mask_b1 = zeros_param({dec_ch});
  params_.mask_w2 = zeros_param({1, dec_ch, 3, 3});
  params_.mask_b2 = zeros_param({1});
  params_.phase_w1 =
      uniform_param({dec_ch, C, 3, 3}, 1.0 / std::sqrt(9.0 * C), rng);
  params_.phase_b1 = zeros_param({dec_ch});
  params_.phase_w2 = zeros_param({2, dec_ch, 3, 3});
  params_.phase_b2 = zeros_param({2});
}

std::vector<std::pair<std::string, ad::Tensor*>> Model::named_params() {
  std::vector<std::pair<std::string, ad::Tensor*>> out;
  auto put = [&](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  };
  if (cfg_.use_visual) {
    put("vis.align.w", params_.vis_align_w);
    put("vis.align.b", params_.vis_align_b);
    put("vis.proj.w", params_.vis_proj_w);
    put("vis.freq_scale", params_.vis_freq_scale);
  }
  put("enc.conv1.w", params_.enc1_w);
  put("enc.conv1.b", params_.enc1_b);
  put("enc.ln1.g", params_.enc_ln1_g);
  put("enc.ln1.b", params_.enc_ln1_b);
  put("enc.conv2.w", params_.enc2_w);
  put("enc.conv2.b", params_.enc2_b);
  put("enc.ln2.g", params_.enc_ln2_g);
  put("enc.ln2.b", params_.enc_ln2_b);
  for (std::size_t i = 0; i < params_.blocks.size(); ++i) {
    auto& blk = params_.blocks[i];
    const std::string base = "blocks." + std::to_string(i) + ".";
    auto put_mamba = [&](const std::string& prefix, ssm::MambaBlockParams& m) {
      put(prefix + "in_proj", m.in_proj);
      put(prefix + "conv_w", m.conv_w);
      put(prefix + "x_proj", m.x_proj);
      put(prefix + "dt_w", m.dt_w);
      put(prefix + "dt_b", m.dt_b);
      put(prefix + "a_log", m.a_log);
      put(prefix + "d_skip", m.d_skip);
      put(prefix + "out_proj", m.out_proj);
    };
    put(base + "time.ln.g", blk.time_ln_g);
    put(base + "time.ln.b", blk.time_ln_b);
    put_mamba(base + "time.fwd.", blk.time.fwd);
    put_mamba(base + "time.bwd.", blk.time.bwd);
    put(base + "time.merge.w", blk.time.merge_w);
    put(base + "time.merge.b", blk.time.merge_b);
    put(base + "freq.ln.g", blk.freq_ln_g);
    put(base + "freq.ln.b", blk.freq_ln_b);
    put_mamba(base + "freq.fwd.", blk.freq.fwd);
    put_mamba(base + "freq.bwd.", blk.freq.bwd);
    put(base + "freq.merge.w", blk.freq.merge_w);
    put(base + "freq.merge.b", blk.freq.merge_b);
  }
  put("dec.mask.conv1.w", params_.mask_w1);
  put("dec.mask.conv1.b", params_.mask_b1);
  put("dec.mask.conv2.w", params_.mask_w2);
  put("dec.mask.conv2.b", params_.mask_b2);
  put("dec.phase.conv1.w", params_.phase_w1);
  put("dec.phase.conv1.b", params_.phase_b1);
  put("dec.phase.conv2.w", params_.phase_w2);
  put("dec.phase.conv2.b", params_.phase_b2);
  return out;
}

GraphOutputs Model::forward_graph(ad::Tape* tape,
                                  const dsp::AudioBuffer& noisy,
                                  const VisualEmbeddingSequence* visual) const {
  require(!noisy.samples.empty(), ErrorKind::kEmptyInput,
          "model forward: empty audio");
  const auto& st = cfg_.stft;
  const double c = st.compression_exponent;

  // Analysis (input constants: no gradient flows into the noisy audio).
  dsp::Spectrogram sin_spec = dsp::stft(noisy, st);
  const int T = sin_spec.frames, F = sin_spec.bins;
  const auto mag = sin_spec.magnitude();
  const auto ph = sin_spec.phase();
  ad::Tensor mag_c_in =
      ad::Tensor::from({T, F}, dsp::compress_magnitude(mag, c));
  ad::Tensor cos_in = ad::Tensor::zeros({T, F});
  ad::Tensor sin_in = ad::Tensor::zeros({T, F});
  for (std::int64_t i = 0; i < mag_c_in.numel(); ++i) {
    cos_in.ptr()[i] = std::cos(ph[static_cast<std::size_t>(i)]);
    sin_in.ptr()[i] = std::sin(ph[static_cast<std::size_t>(i)]);
  }

  // Input feature grid [T,F,in_ch]
  const std::int64_t G = static_cast<std::int64_t>(T) * F;
  ad::Tensor base = ad::Tensor::zeros({T, F, 3});
  {
    double* pb = base.ptr();
    const double* pm = mag_c_in.ptr();
    const double* pc = cos_in.ptr();
    const double* ps = sin_in.ptr();
    for (std::int64_t i = 0; i < G; ++i) {
      pb[i * 3 + 0] = pm[i];
      pb[i * 3 + 1] = pc[i];
      pb[i * 3 + 2] = ps[i];
    }
  }
  ad::Tensor x;
  if (cfg_.use_visual) {
    require(visual != nullptr, ErrorKind::kConfig,
            "model forward: use_visual=true but no embeddings given");
    ad::Tensor aligned = align_visual(tape, *visual, T, cfg_,
                                      params_.vis_align_w, params_.vis_align_b);
    ad::Tensor proj = ad::matmul(tape, aligned, params_.vis_proj_w);  // [T,dvp]
    ad::Tensor tiled = ad::tile_mid(tape, proj, F);  // [T,F,dvp]
    ad::Tensor scaled = ad::scale_freq(tape, tiled, params_.vis_freq_scale);
    ad::Tensor cat = ad::concat_cols(
        tape, ad::reshape(tape, base, {static_cast<int>(G), 3}),
        ad::reshape(tape, scaled,
                    {static_cast<int>(G), cfg_.visual_proj_channels}));
    x = ad::reshape(tape, cat, {T, F, 3 + cfg_.visual_proj_channels});
  } else {
    x = base;
  }

  // Feature encoder: two 2-D convolutions, the second dilated along
  // frequency, with channel expansion to d_model.
  ad::Tensor h = ad::conv2d(tape, x, params_.enc1_w, params_.enc1_b, 1);
  h = ad::layer_norm(tape, h, params_.enc_ln1_g, params_.enc_ln1_b);
  h = ad::silu(tape, h);
  h = ad::conv2d(tape, h, params_.enc2_w, params_.enc2_b, 2);
  h = ad::layer_norm(tape, h, params_.enc_ln2_g, params_.enc_ln2_b);
  h = ad::silu(tape, h);

  for (const auto& blk : params_.blocks) h = ssm::tf_block_forward(tape, h, blk);

  // Magnitude decoder: bounded multiplicative mask on compressed magnitude.
  ad::Tensor mask;
  if (force_identity_mask) {
    mask = ad::Tensor::full({T, F}, 1.0);
  } else {
    ad::Tensor m1 = ad::conv2d(tape, h, params_.mask_w1, params_.mask_b1, 1);
    m1 = ad::silu(tape, m1);
    ad::Tensor m2 = ad::conv2d(tape, m1, params_.mask_w2, params_.mask_b2, 1);
    mask = ad::mul_scalar(
        tape, ad::sigmoid(tape, ad::reshape(tape, m2, {T, F})), 2.0);
  }
  ad::Tensor mag_c_hat = ad::mul(tape, mask, mag_c_in);

  // Phase decoder: (r, i) pair with a residual start at the input phase.
  ad::Tensor r_hat, i_hat;
  if (force_phase_passthrough) {
    r_hat = cos_in;
    i_hat = sin_in;
  } else {
    ad::Tensor p1 = ad::conv2d(tape, h, params_.phase_w1, params_.phase_b1, 1);
    p1 = ad::silu(tape, p1);
    ad::Tensor p2 = ad::conv2d(tape, p1, params_.phase_w2, params_.phase_b2, 1);
    ad::Tensor flat = ad::reshape(tape, p2, {static_cast<int>(G), 2});
    r_hat = ad::add(
        tape,
        ad::reshape(tape, ad::slice_cols(tape, flat, 0, 1), {T, F}), cos_in);
    i_hat = ad::add(
        tape,
        ad::reshape(tape, ad::slice_cols(tape, flat, 1, 2), {T, F}), sin_in);
  }
  ad::Tensor phase_hat = ad::atan2(tape, i_hat, r_hat);

  // Recombine and reconstruct.
  ad::Tensor mag_hat = ad::pow_scalar(tape, mag_c_hat, 1.0 / c);
  ad::Tensor re = ad::mul(tape, mag_hat, ad::cos(tape, phase_hat));
  ad::Tensor im = ad::mul(tape, mag_hat, ad::sin(tape, phase_hat));
  ad::Tensor spec = ad::stack2(tape, re, im);
  ad::Tensor wave = ad::istft_op(
      tape, spec, st, static_cast<std::int64_t>(noisy.samples.size()));

  GraphOutputs out;
  out.wave = wave;
  out.spec = spec;
  out.mask = mask;
  out.mag_c = mag_c_hat;
  out.phase = phase_hat;
  return out;
}

Model::ForwardResult Model::forward(const dsp::AudioBuffer& noisy,
                                    const VisualEmbeddingSequence* visual) const {
  GraphOutputs g = forward_graph(nullptr, noisy, visual);
  ForwardResult r;
  r.enhanced.sample_rate = noisy.sample_rate;
  r.enhanced.samples.assign(g.wave.ptr(), g.wave.ptr() + g.wave.numel());
  r.predicted = ad::spec_from_tensor(g.spec);
  return r;
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["stft"]["n_fft"] = cfg.stft.n_fft;
  j["stft"]["hop"] = cfg.stft.hop;
  j["stft"]["win_len"] = cfg.stft.win_len;
  j["stft"]["window"] =
      cfg.stft.window == dsp::WindowKind::kHannSqrt ? "hann_sqrt" : "hann";
  j["stft"]["center_pad"] = cfg.stft.center_pad;
  j["stft"]["compression_exponent"] = cfg.stft.compression_exponent;
  j["d_model"] = cfg.d_model;
  j["n_tf_blocks"] = cfg.n_tf_blocks;
  j["d_state"] = cfg.d_state;
  j["d_conv"] = cfg.d_conv;
  j["expand"] = cfg.expand;
  j["visual_dim"] = cfg.visual_dim;
  j["visual_proj_channels"] = cfg.visual_proj_channels;
  j["visual_fps"] = cfg.visual_fps;
  j["use_visual"] = cfg.use_visual;
  j["causal"] = cfg.causal;
  j["mask_activation"] = cfg.mask_activation;
  j["seed"] = cfg.seed;
  return j.dump();
}

namespace {

void check_known_keys(const json& j, const std::vector<std::string>& known,
                      const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known)
      if (it.key() == k) ok = true;
    require(ok, ErrorKind::kValidation,
            "unknown field '" + where + it.key() + "'");
  }
}

}  // namespace

ModelConfig model_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("config JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    check_known_keys(j, {"stft", "d_model", "n_tf_blocks", "d_state", "d_conv",
                         "expand", "visual_dim", "visual_proj_channels",
                         "visual_fps", "use_visual", "causal",
                         "mask_activation", "seed"},
                     "model.");
    if (j.contains("stft")) {
      const auto& s = j["stft"];
      check_known_keys(s, {"n_fft", "hop", "win_len", "window", "center_pad",
                           "compression_exponent"},
                       "model.stft.");
      if (s.contains("n_fft")) cfg.stft.n_fft = s["n_fft"].get<int>();
      if (s.contains("hop")) cfg.stft.hop = s["hop"].get<int>();
      if (s.contains("win_len")) cfg.stft.win_len = s["win_len"].get<int>();
      if (s.contains("window")) {
        const std::string w = s["window"].get<std::string>();
        require(w == "hann_sqrt" || w == "hann", ErrorKind::kValidation,
                "model.stft.window: expected 'hann_sqrt' or 'hann'");
        cfg.stft.window = w == "hann_sqrt" ? dsp::WindowKind::kHannSqrt
                                           : dsp::WindowKind::kHann;
      }
      if (s.contains("center_pad"))
        cfg.stft.center_pad = s["center_pad"].get<bool>();
      if (s.contains("compression_exponent"))
        cfg.stft.compression_exponent =
            s["compression_exponent"].get<double>();
    }
    if (j.contains("d_model")) cfg.d_model = j["d_model"].get<int>();
    if (j.contains("n_tf_blocks")) cfg.n_tf_blocks = j["n_tf_blocks"].get<int>();
    if (j.contains("d_state")) cfg.d_state = j["d_state"].get<int>();
    if (j.contains("d_conv")) cfg.d_conv = j["d_conv"].get<int>();
    if (j.contains("expand")) cfg.expand = j["expand"].get<int>();
    if (j.contains("visual_dim")) cfg.visual_dim = j["visual_dim"].get<int>();
    if (j.contains("visual_proj_channels"))
      cfg.visual_proj_channels = j["visual_proj_channels"].get<int>();
    if (j.contains("visual_fps")) cfg.visual_fps = j["visual_fps"].get<int>();
    if (j.contains("use_visual")) cfg.use_visual = j["use_visual"].get<bool>();
    if (j.contains("causal")) cfg.causal = j["causal"].get<bool>();
    if (j.contains("mask_activation"))
      cfg.mask_activation = j["mask_activation"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("model config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void wr_u64v(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t rd_u64v(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m,
                     std::int64_t step) {
  std::string buf;
  buf.append("AVSM", 4);
  wr_u32v(buf, kCheckpointVersion);
  wr_u64v(buf, static_cast<std::uint64_t>(step));
  const std::string cfg_json = model_config_to_json(m.config());
  wr_u32v(buf, static_cast<std::uint32_t>(cfg_json.size()));
  buf.append(cfg_json);
  auto named = const_cast<Model&>(m).named_params();
  wr_u32v(buf, static_cast<std::uint32_t>(named.size()));
  for (auto& [name, t] : named) {
    wr_u32v(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    buf.push_back(0);  // dtype f64
    buf.push_back(static_cast<char>(t->rank()));
    for (int d : t->shape) wr_u32v(buf, static_cast<std::uint32_t>(d));
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(t->numel());
    const std::size_t off = buf.size();
    buf.resize(off + bytes);
    std::memcpy(buf.data() + off, t->ptr(), bytes);
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  wr_u32v(buf, crc);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), ErrorKind::kFile, "cannot write " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(os.good(), ErrorKind::kFile, "write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kFile, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 24, ErrorKind::kCorruptFile,
          "truncated checkpoint: " + path);
  require(std::memcmp(bytes.data(), "AVSM", 4) == 0, ErrorKind::kCorruptFile,
          "bad magic in " + path);
  const std::uint32_t version = rd_u32v(bytes.data() + 4);
  require(version == kCheckpointVersion, ErrorKind::kVersionMismatch,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t stored_crc = rd_u32v(bytes.data() + bytes.size() - 4);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size() - 4)));
  require(crc == stored_crc, ErrorKind::kCorruptFile,
          "checksum mismatch in " + path);

  std::size_t pos = 8;
  const std::int64_t step = static_cast<std::int64_t>(rd_u64v(bytes.data() + pos));
  pos += 8;
  auto need = [&](std::size_t n) {
    require(pos + n <= bytes.size() - 4, ErrorKind::kCorruptFile,
            "truncated checkpoint: " + path);
  };
  need(4);
  const std::uint32_t cfg_len = rd_u32v(bytes.data() + pos);
  pos += 4;
  need(cfg_len);
  const std::string cfg_json(reinterpret_cast<const char*>(bytes.data() + pos),
                             cfg_len);
  pos += cfg_len;
  ModelConfig cfg = model_config_from_json(cfg_json);

  LoadedCheckpoint out{Model(cfg), step};
  auto named = out.model.named_params();
  need(4);
  const std::uint32_t count = rd_u32v(bytes.data() + pos);
  pos += 4;
  require(count == named.size(), ErrorKind::kCorruptFile,
          "checkpoint tensor count mismatch in " + path);
  for (std::uint32_t i = 0; i < count; ++i) {
    need(4);
    const std::uint32_t name_len = rd_u32v(bytes.data() + pos);
    pos += 4;
    need(name_len + 2);
    const std::string name(reinterpret_cast<const char*>(bytes.data() + pos),
                           name_len);
    pos += name_len;
    const unsigned char dtype = bytes[pos++];
    const unsigned char rank = bytes[pos++];
    require(dtype == 0, ErrorKind::kCorruptFile,
            "unsupported dtype in " + path);
    std::vector<int> dims(rank);
    need(4ull * rank);
    for (int d = 0; d < rank; ++d) {
      dims[static_cast<std::size_t>(d)] =
          static_cast<int>(rd_u32v(bytes.data() + pos));
      pos += 4;
    }
    require(named[i].first == name, ErrorKind::kCorruptFile,
            "unexpected tensor '" + name + "' in " + path);
    ad::Tensor* t = named[i].second;
    require(t->shape == dims, ErrorKind::kCorruptFile,
            "shape mismatch for '" + name + "' in " + path);
    const std::size_t payload =
        sizeof(double) * static_cast<std::size_t>(t->numel());
    need(payload);
    std::memcpy(t->ptr(), bytes.data() + pos, payload);
    pos += payload;
  }
  require(pos == bytes.size() - 4, ErrorKind::kCorruptFile,
          "trailing bytes in " + path);
  return out;
}

}  // namespace avsm::model
