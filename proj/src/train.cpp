// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "avsm/data.hpp"
#include "avsm/metrics.hpp"
#include "json.hpp"

namespace avsm::train {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.model.use_visual = false;  // audio-only unless embeddings are wired up
  return cfg;
}

void validate(const RunConfig& cfg) {
  model::validate(cfg.model);
  loss::validate(cfg.loss);
  require(cfg.grad_accum >= 1, ErrorKind::kValidation,
          "optimizer.grad_accum must be >= 1");
  require(cfg.max_steps >= 1, ErrorKind::kValidation,
          "training.max_steps must be >= 1");
  require(cfg.eval_every >= 1, ErrorKind::kValidation,
          "training.eval_every must be >= 1");
  require(cfg.optimizer.lr > 0, ErrorKind::kValidation,
          "optimizer.lr must be positive");
  require(!cfg.manifest_path.empty(), ErrorKind::kValidation,
          "paths.manifest is required");
  require(!cfg.checkpoint_dir.empty(), ErrorKind::kValidation,
          "paths.checkpoint_dir is required");
}

std::string run_config_to_json(const RunConfig& cfg, bool pretty) {
  json j;
  j["version"] = 1;
  j["model"] = json::parse(model::model_config_to_json(cfg.model));
  j["loss"]["w_time"] = cfg.loss.w_time;
  j["loss"]["w_mag"] = cfg.loss.w_mag;
  j["loss"]["w_complex"] = cfg.loss.w_complex;
  j["loss"]["w_phase"] = cfg.loss.w_phase;
  j["loss"]["w_consistency"] = cfg.loss.w_consistency;
  j["loss"]["cosine_phase"] = cfg.loss.cosine_phase;
  j["optimizer"]["lr"] = cfg.optimizer.lr;
  j["optimizer"]["betas"] = {cfg.optimizer.beta1, cfg.optimizer.beta2};
  j["optimizer"]["eps"] = cfg.optimizer.eps;
  j["optimizer"]["weight_decay"] = cfg.optimizer.weight_decay;
  j["optimizer"]["grad_accum"] = cfg.grad_accum;
  j["training"]["max_steps"] = cfg.max_steps;
  j["training"]["eval_every"] = cfg.eval_every;
  j["training"]["seed"] = cfg.seed;
  if (cfg.target_si_sdr_improvement_db)
    j["training"]["target_si_sdr_improvement_db"] =
        *cfg.target_si_sdr_improvement_db;
  j["paths"]["manifest"] = cfg.manifest_path;
  j["paths"]["checkpoint_dir"] = cfg.checkpoint_dir;
  j["paths"]["report_dir"] = cfg.report_dir;
  return pretty ? j.dump(2) : j.dump();
}

namespace {

void check_keys(const json& j, const std::vector<std::string>& known,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known)
      if (it.key() == k) ok = true;
    require(ok, ErrorKind::kValidation,
            "unknown field '" + where + it.key() + "'");
  }
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& where,
            T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kValidation, "invalid value for '" + where + key + "'");
  }
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("run config JSON: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  check_keys(j, {"version", "model", "loss", "optimizer", "training", "paths"},
             "");
  if (j.contains("model")) cfg.model = model::model_config_from_json(j["model"].dump());
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    check_keys(l, {"w_time", "w_mag", "w_complex", "w_phase", "w_consistency",
                   "cosine_phase"},
               "loss.");
    cfg.loss.w_time = get_field(l, "w_time", "loss.", cfg.loss.w_time);
    cfg.loss.w_mag = get_field(l, "w_mag", "loss.", cfg.loss.w_mag);
    cfg.loss.w_complex = get_field(l, "w_complex", "loss.", cfg.loss.w_complex);
    cfg.loss.w_phase = get_field(l, "w_phase", "loss.", cfg.loss.w_phase);
    cfg.loss.w_consistency =
        get_field(l, "w_consistency", "loss.", cfg.loss.w_consistency);
    cfg.loss.cosine_phase =
        get_field(l, "cosine_phase", "loss.", cfg.loss.cosine_phase);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, {"lr", "betas", "eps", "weight_decay", "grad_accum"},
               "optimizer.");
    cfg.optimizer.lr = get_field(o, "lr", "optimizer.", cfg.optimizer.lr);
    if (o.contains("betas")) {
      try {
        const auto betas = o["betas"].get<std::vector<double>>();
        require(betas.size() == 2, ErrorKind::kValidation,
                "optimizer.betas must have two entries");
        cfg.optimizer.beta1 = betas[0];
        cfg.optimizer.beta2 = betas[1];
      } catch (const json::exception&) {
        fail(ErrorKind::kValidation, "invalid value for 'optimizer.betas'");
      }
    }
    cfg.optimizer.eps = get_field(o, "eps", "optimizer.", cfg.optimizer.eps);
    cfg.optimizer.weight_decay =
        get_field(o, "weight_decay", "optimizer.", cfg.optimizer.weight_decay);
    cfg.grad_accum = get_field(o, "grad_accum", "optimizer.", cfg.grad_accum);
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, {"max_steps", "eval_every", "seed",
                   "target_si_sdr_improvement_db"},
               "training.");
    cfg.max_steps = get_field<std::int64_t>(t, "max_steps", "training.",
                                            cfg.max_steps);
    cfg.eval_every = get_field<std::int64_t>(t, "eval_every", "training.",
                                             cfg.eval_every);
    cfg.seed = get_field<std::uint64_t>(t, "seed", "training.", cfg.seed);
    if (t.contains("target_si_sdr_improvement_db") &&
        !t["target_si_sdr_improvement_db"].is_null())
      cfg.target_si_sdr_improvement_db = get_field<double>(
          t, "target_si_sdr_improvement_db", "training.", 0.0);
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, {"manifest", "checkpoint_dir", "report_dir"}, "paths.");
    cfg.manifest_path = get_field<std::string>(p, "manifest", "paths.", "");
    cfg.checkpoint_dir =
        get_field<std::string>(p, "checkpoint_dir", "paths.", "");
    cfg.report_dir = get_field<std::string>(p, "report_dir", "paths.", "");
  }
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kValidation, "cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return run_config_from_json(text);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct SceneCache {
  dsp::AudioBuffer noisy, clean;
  model::VisualEmbeddingSequence vemb;
  bool has_vemb = false;
  loss::SpecTensors clean_spec;
};

SceneCache load_scene(const data::SceneManifest& manifest,
                      const data::SceneSpec& spec, const RunConfig& cfg) {
  SceneCache s;
  const std::string dir = data::scene_dir(manifest, spec);
  s.noisy = dsp::read_wav(dir + "/noisy.wav");
  s.clean = dsp::read_wav(dir + "/clean.wav");
  require(s.noisy.samples.size() == s.clean.samples.size(),
          ErrorKind::kLengthMismatch,
          "scene '" + spec.scene_id + "': noisy/clean length mismatch");
  if (cfg.model.use_visual) {
    s.vemb = model::read_vemb(dir + "/" + spec.scene_id + ".vemb");
    s.has_vemb = true;
  }
  s.clean_spec = loss::spec_tensors(dsp::stft(s.clean, cfg.model.stft));
  return s;
}

double eval_improvement(const model::Model& m, const SceneCache& s) {
  dsp::AudioBuffer enhanced =
      m.forward(s.noisy, s.has_vemb ? &s.vemb : nullptr).enhanced;
  return metrics::si_sdr(s.clean, enhanced) - metrics::si_sdr(s.clean, s.noisy);
}

}  // namespace

TrainResult run_training(const RunConfig& cfg, const std::string& resume_path) {
  validate(cfg);
  data::SceneManifest manifest = data::load_manifest(cfg.manifest_path);
  require(!manifest.scenes.empty(), ErrorKind::kValidation,
          "training: manifest has no scenes");
  std::error_code ec;
  fs::create_directories(cfg.checkpoint_dir, ec);
  require(!ec, ErrorKind::kValidation,
          "cannot create checkpoint dir " + cfg.checkpoint_dir);
  if (!cfg.report_dir.empty()) {
    fs::create_directories(cfg.report_dir, ec);
    require(!ec, ErrorKind::kValidation,
            "cannot create report dir " + cfg.report_dir);
  }

  std::vector<SceneCache> scenes;
  scenes.reserve(manifest.scenes.size());
  for (const auto& spec : manifest.scenes)
    scenes.push_back(load_scene(manifest, spec, cfg));
  // Held-out scene for evaluation: the last one when several exist.
  const std::size_t held = scenes.size() - 1;
  const std::size_t n_train =
      scenes.size() > 1 ? scenes.size() - 1 : scenes.size();

  model::Model net(cfg.model);
  std::int64_t start_step = 0;
  if (!resume_path.empty()) {
    auto loaded = model::load_checkpoint(resume_path);
    require(model::model_config_to_json(loaded.model.config()) ==
                model::model_config_to_json(cfg.model),
            ErrorKind::kConfig,
            "resume: checkpoint config does not match run config");
    net = std::move(loaded.model);
    start_step = loaded.step;
  }

  auto named = net.named_params();
  std::vector<ad::Tensor*> params;
  for (auto& [name, t] : named) params.push_back(t);
  ad::AdamWState opt_state;
  std::vector<ad::Tensor> grad_accum;
  grad_accum.reserve(params.size());
  for (auto* p : params) grad_accum.push_back(ad::Tensor::zeros(p->shape));

  const std::string log_path =
      (fs::path(cfg.checkpoint_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);
  require(log.good(), ErrorKind::kFile, "cannot write " + log_path);
  const std::string ckpt_path =
      (fs::path(cfg.checkpoint_dir) / "latest.ckpt").string();

  TrainResult result;
  std::size_t scene_cursor = 0;
  double last_improvement = 0.0;
  bool have_improvement = false;
  for (std::int64_t step = start_step + 1; step <= cfg.max_steps; ++step) {
    for (auto& g : grad_accum)
      std::fill(g.data->begin(), g.data->end(), 0.0);
    json terms_json;
    double total_value = 0.0;
    for (int acc = 0; acc < cfg.grad_accum; ++acc) {
      const SceneCache& sc = scenes[scene_cursor % n_train];
      ++scene_cursor;
      ad::Tape tape;
      for (auto* p : params) tape.watch(*p);
      model::GraphOutputs out =
          net.forward_graph(&tape, sc.noisy, sc.has_vemb ? &sc.vemb : nullptr);
      ad::Tensor ref_wave = ad::Tensor::from(
          {static_cast<int>(sc.clean.samples.size())}, sc.clean.samples);
      loss::TotalLossTerms terms = loss::total_loss(
          &tape, out.wave, ref_wave, out.spec, sc.clean_spec, cfg.loss,
          cfg.model.stft,
          static_cast<std::int64_t>(sc.clean.samples.size()));
      tape.backward(terms.total);
      const double inv = 1.0 / cfg.grad_accum;
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!tape.has_grad(params[i]->node)) continue;
        const ad::Tensor g = tape.grad(*params[i]);
        double* dst = grad_accum[i].ptr();
        const double* src = g.ptr();
        for (std::int64_t k = 0; k < g.numel(); ++k) dst[k] += inv * src[k];
      }
      total_value += terms.total.value() / cfg.grad_accum;
      if (acc == 0) {
        terms_json["time"] = terms.time.value();
        terms_json["magnitude"] = terms.magnitude.value();
        terms_json["complex"] = terms.complex_spec.value();
        terms_json["phase"] = terms.phase.value();
        terms_json["consistency"] = terms.consistency.value();
      }
    }
    ad::adamw_step(params, grad_accum, opt_state, cfg.optimizer);
    result.steps_run = step;
    result.final_loss = total_value;

    json line;
    line["step"] = step;
    line["loss"] = total_value;
    line["terms"] = terms_json;
    line["scan_chunk"] = ssm::kScanChunk;
    const bool eval_now =
        (step % cfg.eval_every == 0) || step == cfg.max_steps;
    if (eval_now) {
      last_improvement = eval_improvement(net, scenes[held]);
      have_improvement = true;
      line["si_sdr_improvement_db"] = last_improvement;
      model::save_checkpoint(ckpt_path, net, step);
    }
    log << line.dump() << "\n";
    log.flush();
    if (eval_now && cfg.target_si_sdr_improvement_db &&
        last_improvement >= *cfg.target_si_sdr_improvement_db)
      break;
  }
  if (!have_improvement) last_improvement = eval_improvement(net, scenes[held]);
  model::save_checkpoint(ckpt_path, net, result.steps_run);
  result.si_sdr_improvement_db = last_improvement;
  result.checkpoint_path = ckpt_path;
  return result;
}

}  // namespace avsm::train
