// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "avsm/data.hpp"
#include "avsm/metrics.hpp"
#include "avsm/model.hpp"
#include "avsm/train.hpp"

namespace {

namespace fs = std::filesystem;

// exit code 2: usage/config errors; 1: runtime processing errors
int exit_code_for(const avsm::Error& e) {
  switch (e.kind()) {
    case avsm::ErrorKind::kConfig:
    case avsm::ErrorKind::kValidation:
    case avsm::ErrorKind::kVersionMismatch:
      return 2;
    default:
      return 1;
  }
}

int cmd_mix(int spec_count, std::uint64_t seed, const std::string& out,
            double duration_s) {
  std::error_code ec;
  fs::create_directories(out, ec);
  avsm::require(!ec && fs::is_directory(out) &&
                    ::access(out.c_str(), W_OK) == 0,
                avsm::ErrorKind::kConfig,
                "--out: cannot write to '" + out + "'");
  avsm::data::ToyCorpusOptions opts;
  opts.duration_s = duration_s;
  auto manifest = avsm::data::generate_toy_corpus(spec_count, seed, out, opts);
  std::cout << "wrote " << manifest.scenes.size() << " scene(s) under " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  auto cfg = avsm::train::load_run_config(config_path);
  auto result = avsm::train::run_training(cfg, resume);
  std::cout << "steps=" << result.steps_run << " loss=" << result.final_loss
            << " si_sdr_improvement_db=" << result.si_sdr_improvement_db
            << " checkpoint=" << result.checkpoint_path << "\n";
  return 0;
}

int cmd_enhance(const std::string& ckpt, const std::string& in_wav,
                const std::string& vemb, const std::string& out_wav) {
  auto loaded = avsm::model::load_checkpoint(ckpt);
  avsm::dsp::AudioBuffer noisy = avsm::dsp::read_wav(in_wav);
  avsm::model::VisualEmbeddingSequence emb;
  const avsm::model::VisualEmbeddingSequence* vptr = nullptr;
  if (loaded.model.config().use_visual) {
    avsm::require(!vemb.empty(), avsm::ErrorKind::kConfig,
                  "model uses visual input: --vemb is required");
    emb = avsm::model::read_vemb(vemb);
    vptr = &emb;
  }
  auto result = loaded.model.forward(noisy, vptr);
  avsm::dsp::write_wav(out_wav, result.enhanced);
  std::cout << "wrote " << out_wav << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, bool passthrough,
             const std::string& manifest_path, const std::string& report) {
  auto manifest = avsm::data::load_manifest(manifest_path);
  avsm::metrics::MetricsReport rep;
  if (passthrough) {
    rep = avsm::metrics::evaluate_manifest(manifest, nullptr, report);
  } else {
    auto loaded = avsm::model::load_checkpoint(ckpt);
    rep = avsm::metrics::evaluate_manifest(manifest, &loaded.model, report);
  }
  std::cout << avsm::metrics::report_table(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual speech enhancement toolkit"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config,
               "print the default run config JSON and exit");

  auto* mix = app.add_subcommand("mix", "generate a synthetic toy corpus");
  int spec_count = 10;
  std::uint64_t mix_seed = 0;
  std::string mix_out;
  double duration_s = 2.0;
  mix->add_option("--spec-count", spec_count, "number of scenes")
      ->check(CLI::NonNegativeNumber);
  mix->add_option("--seed", mix_seed, "corpus seed");
  mix->add_option("--out", mix_out, "output directory")->required();
  mix->add_option("--duration", duration_s, "scene duration in seconds");

  auto* train = app.add_subcommand("train", "run the toy training loop");
  std::string config_path, resume_path;
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* enhance = app.add_subcommand("enhance", "enhance one utterance");
  std::string enh_ckpt, enh_in, enh_vemb, enh_out;
  enhance->add_option("--checkpoint", enh_ckpt, "model checkpoint")->required();
  enhance->add_option("--in", enh_in, "input WAV (mono 16 kHz)")->required();
  enhance->add_option("--vemb", enh_vemb, "visual embedding file");
  enhance->add_option("--out", enh_out, "output WAV")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a manifest");
  std::string eval_ckpt, eval_manifest, eval_report;
  bool passthrough = false;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  eval->add_flag("--passthrough", passthrough,
                 "score the unprocessed noisy audio");
  eval->add_option("--manifest", eval_manifest, "scene manifest")->required();
  eval->add_option("--report", eval_report, "report output path (JSON)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (print_config) {
      std::cout << avsm::train::run_config_to_json(
                       avsm::train::default_run_config(), true)
                << "\n";
      return 0;
    }
    if (mix->parsed()) return cmd_mix(spec_count, mix_seed, mix_out, duration_s);
    if (train->parsed()) return cmd_train(config_path, resume_path);
    if (enhance->parsed())
      return cmd_enhance(enh_ckpt, enh_in, enh_vemb, enh_out);
    if (eval->parsed()) {
      avsm::require(passthrough || !eval_ckpt.empty(),
                    avsm::ErrorKind::kConfig,
                    "eval: pass --checkpoint or --passthrough");
      return cmd_eval(eval_ckpt, passthrough, eval_manifest, eval_report);
    }
    std::cout << app.help();
    return 0;
  } catch (const avsm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
