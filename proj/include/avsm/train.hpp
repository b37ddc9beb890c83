// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <optional>
#include <string>

#include "avsm/autodiff.hpp"
#include "avsm/loss.hpp"
#include "avsm/model.hpp"

// Toy training loop: iterate scenes, forward, composite loss, backward,
// AdamW with gradient accumulation, periodic evaluation + checkpointing.
namespace avsm::train {

struct RunConfig {
  model::ModelConfig model;
  loss::LossWeights loss;
  ad::AdamWConfig optimizer;
  int grad_accum = 2;
  std::int64_t max_steps = 2000;
  std::int64_t eval_every = 25;
  std::uint64_t seed = 7;
  // optional early stop once the held scene's SI-SDR improvement reaches
  // this many dB
  std::optional<double> target_si_sdr_improvement_db;
  std::string manifest_path;
  std::string checkpoint_dir;
  std::string report_dir;
};

RunConfig default_run_config();
void validate(const RunConfig& cfg);

std::string run_config_to_json(const RunConfig& cfg, bool pretty = false);
// Strict parse: unknown fields and type mismatches raise ValidationError
// naming the offending field.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

struct TrainResult {
  std::int64_t steps_run = 0;
  double final_loss = 0.0;
  double si_sdr_improvement_db = 0.0;  // held scene, at the last evaluation
  std::string checkpoint_path;
};

// resume_path nonempty: restore parameters and step counter from a
// checkpoint before training.
TrainResult run_training(const RunConfig& cfg,
                         const std::string& resume_path = "");

}  // namespace avsm::train
