// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "avsm/dsp.hpp"
#include "avsm/dsp_ops.hpp"
#include "avsm/ssm.hpp"

// The enhancement network: magnitude/phase/visual features -> convolutional
// feature encoder -> stacked bidirectional time-frequency Mamba blocks ->
// separate magnitude-mask and phase decoders -> iSTFT reconstruction.
namespace avsm::model {

struct ModelConfig {
  dsp::StftConfig stft;
  int d_model = 32;
  int n_tf_blocks = 2;
  int d_state = 16;
  int d_conv = 4;
  int expand = 2;
  int visual_dim = 64;          // embedding size per video frame
  int visual_proj_channels = 4; // channels the visual vector is projected to
  int visual_fps = 25;
  bool use_visual = true;
  bool causal = false;
  std::string mask_activation = "bounded_sigmoid_2x";
  std::uint64_t seed = 0x5eedULL;
};

// Throws ConfigError; checks the audio/visual frame-rate alignment is a
// small rational (frame_rate / visual_fps = p/q with q <= 16).
void validate(const ModelConfig& cfg);

struct VisualEmbeddingSequence {
  enum class Source { kPrecomputedFile, kStubEncoder };
  int frames = 0;  // V at visual_fps
  int dim = 0;
  std::vector<double> data;  // V x dim
  Source source = Source::kPrecomputedFile;
};

// "VEMB" file: magic, version u32, V u32, dim u32 (little-endian), then
// V*dim float32 little-endian.
VisualEmbeddingSequence read_vemb(const std::string& path);
void write_vemb(const std::string& path, const VisualEmbeddingSequence& v);

// Deterministic stand-in for a pretrained spatiotemporal encoder: seeded
// random projection of temporally average-pooled frames. Frozen (its
// projection never receives gradients). Empty video (V == 0) yields a
// single zero embedding for audio-only use.
VisualEmbeddingSequence stub_visual_encoder(const std::vector<double>& video,
                                            int v_frames, int height,
                                            int width, int channels,
                                            int visual_dim,
                                            std::uint64_t seed);

// Linear-interpolation upsampling from visual_fps to the STFT frame rate
// followed by a learnable Conv1D (kernel 3, same padding). Short sequences
// hold the last frame. Output has exactly target_frames rows.
ad::Tensor align_visual(ad::Tape* t, const VisualEmbeddingSequence& v,
                        int target_frames, const ModelConfig& cfg,
                        const ad::Tensor& conv_w, const ad::Tensor& conv_b);

struct ModelParams {
  // visual path
  ad::Tensor vis_align_w, vis_align_b;  // conv1d visual_dim->visual_dim, k=3
  ad::Tensor vis_proj_w;                // [visual_dim, visual_proj_channels]
  ad::Tensor vis_freq_scale;            // [F]
  // feature encoder
  ad::Tensor enc1_w, enc1_b, enc_ln1_g, enc_ln1_b;
  ad::Tensor enc2_w, enc2_b, enc_ln2_g, enc_ln2_b;  // dilated along frequency
  std::vector<ssm::TfBlockParams> blocks;
  // decoders (final convolutions zero-initialized: identity start)
  ad::Tensor mask_w1, mask_b1, mask_w2, mask_b2;
  ad::Tensor phase_w1, phase_b1, phase_w2, phase_b2;
};

struct GraphOutputs {
  ad::Tensor wave;     // [n] enhanced waveform
  ad::Tensor spec;     // [2,T,F] predicted complex spectrogram
  ad::Tensor mask;     // [T,F] in (0,2)
  ad::Tensor mag_c;    // [T,F] enhanced compressed magnitude
  ad::Tensor phase;    // [T,F] in (-pi, pi]
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Stable name -> tensor mapping (checkpoint order).
  std::vector<std::pair<std::string, ad::Tensor*>> named_params();

  // Inference; deterministic for fixed parameters.
  struct ForwardResult {
    dsp::AudioBuffer enhanced;
    dsp::Spectrogram predicted;
  };
  ForwardResult forward(const dsp::AudioBuffer& noisy,
                        const VisualEmbeddingSequence* visual) const;

  // Differentiable pipeline used by training and gradient checks.
  GraphOutputs forward_graph(ad::Tape* tape, const dsp::AudioBuffer& noisy,
                             const VisualEmbeddingSequence* visual) const;

  // Test hooks: identity configuration (mask forced to 1, phase passthrough).
  bool force_identity_mask = false;
  bool force_phase_passthrough = false;

 private:
  ModelConfig cfg_;
  ModelParams params_;
};

// ---- checkpoint file ----
// magic "AVSM" | version u32 | step u64 | config-json len u32 | json bytes |
// tensor count u32 | per tensor: name len u32, name, dtype u8 (0=f64),
// rank u8, dims u32..., payload little-endian | crc32 u32 of all prior bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Model& m,
                     std::int64_t step);

struct LoadedCheckpoint {
  Model model;
  std::int64_t step = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Config <-> JSON (canonical form used inside checkpoints and run configs).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace avsm::model
