// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "test_helpers.hpp"

using namespace avsm;
using namespace avsm::model;
using avsm_test::Rng;
using ad::Tensor;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.stft.n_fft = 64;
  cfg.stft.win_len = 64;
  cfg.stft.hop = 16;
  cfg.d_model = 8;
  cfg.n_tf_blocks = 1;
  cfg.d_state = 4;
  cfg.visual_dim = 6;
  cfg.visual_proj_channels = 2;
  cfg.seed = 99;
  return cfg;
}

dsp::AudioBuffer random_audio(std::int64_t n, Rng& rng, double scale = 0.2) {
  dsp::AudioBuffer b;
  b.sample_rate = 16000;
  b.samples.resize(static_cast<std::size_t>(n));
  for (auto& v : b.samples) v = scale * rng.normal();
  return b;
}

VisualEmbeddingSequence random_vemb(int v, int dim, Rng& rng) {
  VisualEmbeddingSequence e;
  e.frames = v;
  e.dim = dim;
  e.data.resize(static_cast<std::size_t>(v) * dim);
  for (auto& x : e.data) x = rng.normal();
  return e;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.stft.hop = 97;  // 16000/(97*25) does not reduce to a small rational
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = ModelConfig{};
  cfg.mask_activation = "tanh";
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("align_visual preserves constants under the identity conv") {
  ModelConfig cfg = tiny_config();
  Model m(cfg);  // identity-initialized alignment conv
  VisualEmbeddingSequence v;
  v.frames = 8;
  v.dim = cfg.visual_dim;
  v.data.assign(static_cast<std::size_t>(v.frames) * v.dim, 0.0);
  for (int i = 0; i < v.frames; ++i)
    for (int d = 0; d < v.dim; ++d)
      v.data[static_cast<std::size_t>(i) * v.dim + d] = 0.25 * (d + 1);
  Tensor out = align_visual(nullptr, v, 20, cfg, m.params().vis_align_w,
                            m.params().vis_align_b);
  REQUIRE(out.shape == std::vector<int>{20, cfg.visual_dim});
  for (int t = 0; t < 20; ++t)
    for (int d = 0; d < v.dim; ++d)
      CHECK(out.ptr()[t * v.dim + d] ==
            doctest::Approx(0.25 * (d + 1)).epsilon(1e-12));
}

TEST_CASE("align_visual row count matches the stft framing arithmetic") {
  ModelConfig cfg;  // default: hop 100 at 16 kHz, 25 fps video
  cfg.visual_dim = 4;
  Rng rng(3);
  VisualEmbeddingSequence v = random_vemb(160, 4, rng);  // 6.4 s of video
  dsp::AudioBuffer audio = random_audio(102400, rng);
  dsp::Spectrogram s = dsp::stft(audio, cfg.stft);
  CHECK(s.frames == 1025);
  Tensor w = Tensor::zeros({4, 4, 3});
  for (int o = 0; o < 4; ++o) w.ptr()[(o * 4 + o) * 3 + 1] = 1.0;
  Tensor b = Tensor::zeros({4});
  Tensor out = align_visual(nullptr, v, s.frames, cfg, w, b);
  CHECK(out.dim(0) == 1025);
}

TEST_CASE("align_visual holds the last/only frame") {
  ModelConfig cfg = tiny_config();
  Model m(cfg);
  Rng rng(4);
  VisualEmbeddingSequence v = random_vemb(1, cfg.visual_dim, rng);
  Tensor out = align_visual(nullptr, v, 12, cfg, m.params().vis_align_w,
                            m.params().vis_align_b);
  for (int t = 0; t < 12; ++t)
    for (int d = 0; d < cfg.visual_dim; ++d)
      CHECK(out.ptr()[t * cfg.visual_dim + d] ==
            doctest::Approx(v.data[static_cast<std::size_t>(d)])
                .epsilon(1e-12));
}

TEST_CASE("align_visual rejects dim mismatch") {
  ModelConfig cfg = tiny_config();
  Model m(cfg);
  Rng rng(5);
  VisualEmbeddingSequence v = random_vemb(4, cfg.visual_dim + 1, rng);
  CHECK_THROWS_AS(align_visual(nullptr, v, 10, cfg, m.params().vis_align_w,
                               m.params().vis_align_b),
                  Error);
}

TEST_CASE("stub visual encoder") {
  Rng rng(6);
  const int V = 4, H = 4, W = 4, C = 1, dim = 6;
  std::vector<double> video(static_cast<std::size_t>(V) * H * W * C);
  for (auto& v : video) v = rng.normal();
  SUBCASE("deterministic for identical inputs and seed") {
    auto a = stub_visual_encoder(video, V, H, W, C, dim, 42);
    auto b = stub_visual_encoder(video, V, H, W, C, dim, 42);
    CHECK(a.data == b.data);  // bitwise
    auto c = stub_visual_encoder(video, V, H, W, C, dim, 43);
    CHECK(a.data != c.data);
  }
  SUBCASE("zero video maps to zero embeddings (no bias)") {
    std::vector<double> zeros(video.size(), 0.0);
    auto e = stub_visual_encoder(zeros, V, H, W, C, dim, 42);
    for (double v : e.data) CHECK(v == 0.0);
  }
  SUBCASE("per-item purity: two videos do not interact") {
    std::vector<double> video2(video.size());
    for (auto& v : video2) v = rng.normal();
    auto a = stub_visual_encoder(video, V, H, W, C, dim, 7);
    auto b = stub_visual_encoder(video2, V, H, W, C, dim, 7);
    // swap order of evaluation: results are per-input only
    auto b2 = stub_visual_encoder(video2, V, H, W, C, dim, 7);
    auto a2 = stub_visual_encoder(video, V, H, W, C, dim, 7);
    CHECK(a.data == a2.data);
    CHECK(b.data == b2.data);
  }
  SUBCASE("absent video yields a single zero frame") {
    auto e = stub_visual_encoder({}, 0, 0, 0, 0, dim, 1);
    CHECK(e.frames == 1);
    for (double v : e.data) CHECK(v == 0.0);
  }
}

TEST_CASE("vemb file round trip and corruption checks") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "avsm_vemb_test";
  fs::create_directories(dir);
  Rng rng(7);
  VisualEmbeddingSequence v = random_vemb(5, 8, rng);
  const std::string p = (dir / "a.vemb").string();
  write_vemb(p, v);
  VisualEmbeddingSequence r = read_vemb(p);
  CHECK(r.frames == v.frames);
  CHECK(r.dim == v.dim);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(std::abs(r.data[i] - v.data[i]) < 1e-6);  // float32 payload
  // flip magic
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("XXXX", 4);
  f.close();
  bool corrupt = false;
  try {
    read_vemb(p);
  } catch (const Error& e) {
    corrupt = e.kind() == ErrorKind::kCorruptFile;
  }
  CHECK(corrupt);
}

TEST_CASE("identity configuration reproduces the stft round trip") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = false;
  Model m(cfg);
  m.force_identity_mask = true;
  m.force_phase_passthrough = true;
  Rng rng(8);
  dsp::AudioBuffer x = random_audio(1600, rng);
  auto out = m.forward(x, nullptr);
  dsp::AudioBuffer rt =
      dsp::istft(dsp::stft(x, cfg.stft), cfg.stft,
                 static_cast<std::int64_t>(x.samples.size()));
  REQUIRE(out.enhanced.samples.size() == x.samples.size());
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    CHECK(std::abs(out.enhanced.samples[i] - rt.samples[i]) < 1e-9);
}

TEST_CASE("zero-initialized decoders start at the identity configuration") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = false;
  Model m(cfg);  // fresh init: mask = 1, phase = passthrough by construction
  Rng rng(9);
  dsp::AudioBuffer x = random_audio(1600, rng);
  auto fresh = m.forward(x, nullptr);
  m.force_identity_mask = true;
  m.force_phase_passthrough = true;
  auto forced = m.forward(x, nullptr);
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    CHECK(std::abs(fresh.enhanced.samples[i] - forced.enhanced.samples[i]) <
          1e-9);
}

TEST_CASE("output length equals input length exactly") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = false;
  Model m(cfg);
  Rng rng(10);
  for (std::int64_t n : {1600LL, 16000LL, 102399LL}) {
    dsp::AudioBuffer x = random_audio(n, rng);
    auto out = m.forward(x, nullptr);
    CHECK(static_cast<std::int64_t>(out.enhanced.samples.size()) == n);
  }
}

TEST_CASE("mask stays in (0,2) and phase in (-pi, pi] on random inputs") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = false;
  cfg.seed = 1234;
  Model m(cfg);
  // push the decoders off their zero init so the mask is not trivially 1
  Rng prng(11);
  for (auto& [name, t] : m.named_params())
    for (std::int64_t i = 0; i < t->numel(); ++i)
      t->ptr()[i] += 0.05 * prng.normal();
  Rng rng(12);
  dsp::AudioBuffer x = random_audio(3200, rng);
  ad::Tape tape;  // exercise the tracked path too
  auto g = m.forward_graph(nullptr, x, nullptr);
  for (std::int64_t i = 0; i < g.mask.numel(); ++i) {
    CHECK(g.mask.ptr()[i] > 0.0);
    CHECK(g.mask.ptr()[i] < 2.0);
  }
  for (std::int64_t i = 0; i < g.phase.numel(); ++i) {
    CHECK(g.phase.ptr()[i] > -kPi);
    CHECK(g.phase.ptr()[i] <= kPi);
  }
  for (std::int64_t i = 0; i < g.mag_c.numel(); ++i)
    CHECK(g.mag_c.ptr()[i] >= 0.0);
}

TEST_CASE("zeroed visual projection reproduces the audio-only model") {
  ModelConfig audio_cfg = tiny_config();
  audio_cfg.use_visual = false;
  Model a(audio_cfg);
  ModelConfig av_cfg = tiny_config();
  av_cfg.use_visual = true;
  Model b(av_cfg);
  // copy the shared parameters from a to b by name
  auto a_named = a.named_params();
  auto b_named = b.named_params();
  std::map<std::string, Tensor*> bmap;
  for (auto& [n, t] : b_named) bmap[n] = t;
  for (auto& [n, t] : a_named) {
    if (n == "enc.conv1.w") continue;
    auto it = bmap.find(n);
    REQUIRE(it != bmap.end());
    REQUIRE(it->second->shape == t->shape);
    *it->second->data = *t->data;
  }
  // first three input channels of enc.conv1 match; visual channels arbitrary
  {
    Tensor& wa = a.params().enc1_w;  // [C,3,3,3]
    Tensor& wb = b.params().enc1_w;  // [C,3+dvp,3,3]
    const int C = audio_cfg.d_model;
    const int in_b = 3 + av_cfg.visual_proj_channels;
    for (int o = 0; o < C; ++o)
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 9; ++k)
          wb.ptr()[(o * in_b + c) * 9 + k] = wa.ptr()[(o * 3 + c) * 9 + k];
  }
  std::fill(b.params().vis_proj_w.data->begin(),
            b.params().vis_proj_w.data->end(), 0.0);
  Rng rng(13);
  dsp::AudioBuffer x = random_audio(1600, rng);
  VisualEmbeddingSequence v = random_vemb(5, av_cfg.visual_dim, rng);
  auto ya = a.forward(x, nullptr);
  auto yb = b.forward(x, &v);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    max_diff = std::max(max_diff, std::abs(ya.enhanced.samples[i] -
                                           yb.enhanced.samples[i]));
  CHECK(max_diff < 1e-9);
}

TEST_CASE("use_visual without embeddings raises ConfigError") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = true;
  Model m(cfg);
  Rng rng(14);
  dsp::AudioBuffer x = random_audio(1600, rng);
  CHECK_THROWS_AS(m.forward(x, nullptr), Error);
}

TEST_CASE("frozen visual embeddings receive no gradient") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = true;
  Model m(cfg);
  Rng rng(15);
  dsp::AudioBuffer x = random_audio(800, rng);
  VisualEmbeddingSequence v = random_vemb(3, cfg.visual_dim, rng);
  ad::Tape tape;
  for (auto& [n, t] : m.named_params()) tape.watch(*t);
  auto g = m.forward_graph(&tape, x, &v);
  tape.backward(ad::sum_all(&tape, g.wave));
  // embeddings are constants: they never even enter the tape
  for (auto& [n, t] : m.named_params())
    if (n == "vis.align.w") CHECK(tape.has_grad(t->node));
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "avsm_ckpt_test";
  fs::create_directories(dir);
  ModelConfig cfg = tiny_config();
  cfg.use_visual = true;
  Model m(cfg);
  Rng rng(16);
  for (auto& [n, t] : m.named_params())
    for (std::int64_t i = 0; i < t->numel(); ++i)
      t->ptr()[i] += 0.01 * rng.normal();

  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  save_checkpoint(p1, m, 1234);

  SUBCASE("save -> load -> save produces identical bytes") {
    LoadedCheckpoint lc = load_checkpoint(p1);
    CHECK(lc.step == 1234);
    save_checkpoint(p2, lc.model, lc.step);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
  }
  SUBCASE("forward is bitwise identical before save and after load") {
    dsp::AudioBuffer x = random_audio(1600, rng);
    VisualEmbeddingSequence v = random_vemb(4, cfg.visual_dim, rng);
    auto before = m.forward(x, &v);
    LoadedCheckpoint lc = load_checkpoint(p1);
    auto after = lc.model.forward(x, &v);
    for (std::size_t i = 0; i < x.samples.size(); ++i)
      CHECK(before.enhanced.samples[i] == after.enhanced.samples[i]);
  }
  SUBCASE("flipped magic raises CorruptFile") {
    std::ifstream f1(p1, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f1)),
                      std::istreambuf_iterator<char>());
    bytes[0] = 'X';
    const std::string p3 = (dir / "bad.ckpt").string();
    std::ofstream f3(p3, std::ios::binary);
    f3.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f3.close();
    bool corrupt = false;
    try {
      load_checkpoint(p3);
    } catch (const Error& e) {
      corrupt = e.kind() == ErrorKind::kCorruptFile;
    }
    CHECK(corrupt);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::ifstream f1(p1, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f1)),
                      std::istreambuf_iterator<char>());
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    const std::string p3 = (dir / "bad2.ckpt").string();
    std::ofstream f3(p3, std::ios::binary);
    f3.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f3.close();
    bool corrupt = false;
    try {
      load_checkpoint(p3);
    } catch (const Error& e) {
      corrupt = e.kind() == ErrorKind::kCorruptFile;
    }
    CHECK(corrupt);
  }
}

TEST_CASE("end-to-end determinism of the forward pass") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = false;
  Model m(cfg);
  Rng rng(17);
  dsp::AudioBuffer x = random_audio(3200, rng);
  auto y1 = m.forward(x, nullptr);
  auto y2 = m.forward(x, nullptr);
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    CHECK(y1.enhanced.samples[i] == y2.enhanced.samples[i]);
}

TEST_CASE("model gradcheck on a sampled parameter subset (tiny config)") {
  ModelConfig cfg = tiny_config();
  cfg.use_visual = true;
  cfg.seed = 5;
  Model m(cfg);
  Rng rng(18);
  // move decoders off the exact zero init to avoid kinks at mask=1
  for (auto& [n, t] : m.named_params())
    for (std::int64_t i = 0; i < t->numel(); ++i)
      t->ptr()[i] += 0.02 * rng.normal();
  dsp::AudioBuffer x = random_audio(320, rng);  // T = 21 frames
  VisualEmbeddingSequence v = random_vemb(2, cfg.visual_dim, rng);

  ad::Tape tape;
  auto named = m.named_params();
  for (auto& [n, t] : named) tape.watch(*t);
  auto g = m.forward_graph(&tape, x, &v);
  ad::Tensor loss = ad::mean_all(&tape, ad::mul(&tape, g.wave, g.wave));
  tape.backward(loss);

  auto value_of = [&]() {
    auto gg = m.forward_graph(nullptr, x, &v);
    double acc = 0.0;
    for (std::int64_t i = 0; i < gg.wave.numel(); ++i)
      acc += gg.wave.ptr()[i] * gg.wave.ptr()[i];
    return acc / static_cast<double>(gg.wave.numel());
  };

  Rng pick(19);
  int checked = 0;
  double max_rel = 0.0;
  for (auto& [n, t] : named) {
    if (t->numel() == 0) continue;
    const std::int64_t idx =
        static_cast<std::int64_t>(pick.uniform_int(
            static_cast<std::uint64_t>(t->numel())));
    const double orig = t->ptr()[idx];
    const double h = 1e-5;
    t->ptr()[idx] = orig + h;
    const double fp = value_of();
    t->ptr()[idx] = orig - h;
    const double fm = value_of();
    t->ptr()[idx] = orig;
    const double num = (fp - fm) / (2.0 * h);
    const double ana = tape.grad(*t).ptr()[idx];
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
    max_rel = std::max(max_rel, std::abs(num - ana) / denom);
    ++checked;
  }
  CHECK(checked > 20);
  CHECK(max_rel < 1e-3);
}
