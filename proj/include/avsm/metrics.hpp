// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "avsm/data.hpp"
#include "avsm/dsp.hpp"
#include "avsm/model.hpp"

// Intrusive evaluation: STOI and SI-SDR, plus per-manifest reports.
namespace avsm::metrics {

inline constexpr double kSiSdrCapDb = 60.0;

// Short-time objective intelligibility. Canonical constants: resample to
// 10 kHz, remove frames 40 dB below the loudest (256/128), STFT 512/256/128
// Hann, 15 one-third-octave bands from 150 Hz, 384 ms segments (N = 30),
// per-segment normalization, clipping at -15 dB SDR, averaged correlations.
double stoi(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& processed);

// Scale-invariant SDR in dB, clamped to [-60, 60] (the cap keeps perfect
// reconstructions finite in reports).
double si_sdr(const dsp::AudioBuffer& reference,
              const dsp::AudioBuffer& estimate);

struct SceneMetrics {
  std::string scene_id;
  double stoi_score = 0.0;
  double si_sdr_db = 0.0;
  double si_sdr_improvement_db = 0.0;
};

struct MetricsReport {
  int version = 1;
  std::string mode;  // "passthrough" or "checkpoint"
  std::string checkpoint;
  std::vector<SceneMetrics> rows;
  SceneMetrics mean;  // arithmetic means (scene_id = "mean")
};

// Runs enhancement (model == nullptr: passthrough) over every scene and
// writes <out_path> (JSON) plus <out_path>.txt (aligned table) when
// out_path is nonempty.
MetricsReport evaluate_manifest(const data::SceneManifest& manifest,
                                const model::Model* model,
                                const std::string& out_path);

std::string report_table(const MetricsReport& report);
std::string report_json(const MetricsReport& report);

namespace detail {
// Polyphase 16 kHz -> 10 kHz resampler (Kaiser beta=5 lowpass, 161 taps,
// up=5/down=8), matching the common scientific-python implementation.
std::vector<double> resample_16k_to_10k(const std::vector<double>& x);
// One-third-octave band matrix [15 x 257] on the 512-point 10 kHz grid.
std::vector<std::vector<int>> third_octave_bands();
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y,
                          double dyn_range_db, int frame_len, int hop);
}  // namespace detail

}  // namespace avsm::metrics
