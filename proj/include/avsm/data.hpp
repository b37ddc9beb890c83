// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avsm/dsp.hpp"

// Synthetic scene construction and manifest I/O. A scene mixes a target
// utterance with an interfering source and/or noise at requested SNRs.
// Directory layout: scenes/<id>/{noisy,clean,interferer_scaled,
// noise_scaled}.wav + scenes/<id>/<id>.vemb; manifest paths are relative to
// the manifest file.
namespace avsm::data {

struct OffsetPolicy {
  std::int64_t start = 0;  // read offset into the source
  enum class Fill { kLoop, kPad } fill = Fill::kLoop;
};

struct SceneSpec {
  std::string scene_id;
  std::string target_path;
  std::optional<std::string> interferer_path;
  std::optional<std::string> noise_path;
  double snr_interferer_db = 0.0;
  double snr_noise_db = 0.0;
  std::uint64_t seed = 0;
  OffsetPolicy interferer_offset;
  OffsetPolicy noise_offset;
};

struct SceneManifest {
  int version = 1;
  int sample_rate = 16000;
  std::vector<SceneSpec> scenes;
  std::string base_dir;  // directory of the manifest file (set on load/save)
};

struct MixResult {
  dsp::AudioBuffer noisy, clean;
  dsp::AudioBuffer interferer_scaled, noise_scaled;  // empty when absent
  double measured_snr_interferer_db = 0.0;
  double measured_snr_noise_db = 0.0;
  double peak_rescale = 1.0;  // 1.0 when no rescale was applied
};

// Mean-square power over silence-trimmed frames (frames within 40 dB of the
// loudest 25 ms frame). Returns 0 for all-zero input.
double power_silence_trimmed(const std::vector<double>& x);

// Mixes one scene. Interferer/noise are scaled so the measured SNR against
// the silence-trimmed target power equals the request; if the mixture peak
// exceeds 0.99 everything is rescaled jointly.
MixResult mix_scene(const SceneSpec& spec, const std::string& base_dir);

struct ToyCorpusOptions {
  double duration_s = 2.0;
  double snr_lo_db = -10.0;
  double snr_hi_db = 10.0;
  int visual_dim = 64;
};

// Synthesizes deterministic source material (amplitude-modulated filtered
// noise targets, tonal interferers, colored noise), writes per-scene WAVs,
// stub visual embeddings and the manifest. Returns the saved manifest.
SceneManifest generate_toy_corpus(int n_scenes, std::uint64_t seed,
                                  const std::string& out_dir,
                                  const ToyCorpusOptions& opts = {});

SceneManifest load_manifest(const std::string& path);
void save_manifest(const SceneManifest& manifest, const std::string& path);

// Schema/uniqueness/existence checks; throws ValidationError naming the
// offending entry.
void validate_manifest(const SceneManifest& manifest);

// Absolute directory holding a scene's mixed outputs.
std::string scene_dir(const SceneManifest& manifest, const SceneSpec& spec);

}  // namespace avsm::data
