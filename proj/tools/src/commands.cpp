#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <protofuse/checkpoint.hpp>
#include <protofuse/errors.hpp>

namespace fs = std::filesystem;

namespace protofuse::cli {
namespace {

RunConfig resolve(const Overrides& ov) {
  RunConfig cfg = ov.config.empty() ? RunConfig{} : load_run_config(ov.config);
  apply_seed_env(cfg);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.threads) cfg.threads = *ov.threads;
  if (!ov.embeddings.empty()) cfg.paths.embeddings = ov.embeddings;
  if (!ov.knowledge.empty()) cfg.paths.knowledge = ov.knowledge;
  if (!ov.checkpoints.empty()) cfg.paths.checkpoints = ov.checkpoints;
  if (!ov.output.empty()) cfg.paths.output = ov.output;
  if (!ov.centers.empty()) cfg.paths.centers = ov.centers;
  if (ov.n_way) cfg.episode.n_way = *ov.n_way;
  if (ov.k_shot) cfg.episode.k_shot = *ov.k_shot;
  if (ov.m_query) cfg.episode.m_query = *ov.m_query;
  if (ov.episodes) cfg.episode.n_episodes = *ov.episodes;
  if (!ov.split.empty()) cfg.episode.split = parse_split(ov.split);
  if (!ov.fusion.empty()) cfg.fusion.method = parse_fusion_method(ov.fusion);
  if (!ov.setting.empty()) cfg.fusion.setting = parse_fusion_setting(ov.setting);
  if (ov.n_iter) cfg.fusion.n_iter = *ov.n_iter;
  cfg.validate();
  return cfg;
}

struct Inputs {
  EmbeddingStore store;
  KnowledgeBase kb;
};

Inputs load_inputs(const RunConfig& cfg) {
  if (cfg.paths.embeddings.empty()) throw DataError("no embeddings file given (--embeddings or paths.embeddings)");
  if (cfg.paths.knowledge.empty()) throw DataError("no knowledge file given (--knowledge or paths.knowledge)");
  Inputs in{load_embeddings(cfg.paths.embeddings), load_knowledge(cfg.paths.knowledge)};
  in.store.validate_against(in.kb);
  return in;
}

fs::path ckpt_path(const RunConfig& cfg, const char* stage) {
  return cfg.paths.checkpoints / (std::string(stage) + ".ckpt");
}

Checkpoint require_checkpoint(const RunConfig& cfg, const char* stage, const char* needed_by) {
  const auto path = ckpt_path(cfg, stage);
  if (!fs::exists(path)) {
    throw DataError(std::string("missing prerequisite: ") + needed_by + " needs the " + stage +
                    " checkpoint '" + path.string() + "' (run 'protofuse train " + stage + "' first)");
  }
  return load_checkpoint(path);
}

AttrPriors load_priors(const RunConfig& cfg, const Inputs& in, const char* needed_by) {
  const PatNet pat = patnet_from_checkpoint(require_checkpoint(cfg, "patnet", needed_by));
  if (pat.semantic_dim() != in.kb.embedding_dim() || pat.feature_dim() != in.store.dim()) {
    throw DataError("patnet checkpoint dims do not match the data");
  }
  return build_priors(in.store, in.kb, pat);
}

ProtoComStage load_completion(const RunConfig& cfg, const Inputs& in, const char* stage, const char* needed_by) {
  ProtoComStage s;
  s.net = protocomnet_from_checkpoint(require_checkpoint(cfg, stage, needed_by), &s.scale);
  if (s.net.feature_dim() != in.store.dim() || s.net.semantic_dim() != in.kb.embedding_dim()) {
    throw DataError(std::string(stage) + " checkpoint dims do not match the data");
  }
  return s;
}

void finish_stage(const RunConfig& cfg, const char* stage, const Checkpoint& ckpt, const TrainingReport& report) {
  const auto path = ckpt_path(cfg, stage);
  fs::create_directories(cfg.paths.checkpoints);
  save_checkpoint(ckpt, path);
  const auto report_path = cfg.paths.output / (std::string(stage) + "_report.json");
  write_text_file(report_path, report_to_json(report));
  if (report.empty()) {
    std::printf("%s: 0 steps, checkpoint %s\n", stage, path.string().c_str());
  } else {
    std::printf("%s: %zu steps, loss %.6g -> %.6g, checkpoint %s\n", stage, report.losses.size(),
                report.initial_loss, report.final_loss, path.string().c_str());
  }
}

EvalReport run_eval(const RunConfig& cfg, const Inputs& in, const std::map<std::string, Vec>* centers,
                    const char* needed_by) {
  const auto priors = load_priors(cfg, in, needed_by);
  const bool tuned = fs::exists(ckpt_path(cfg, "finetune"));
  const auto model = load_completion(cfg, in, tuned ? "finetune" : "protocom", needed_by);
  const Pipeline pipeline{&model.net, &in.kb, &priors, cfg.fusion, model.scale.gamma};
  return evaluate(pipeline, in.store, cfg.episode, Rng(cfg.seed).split(rng_tag::eval), centers, cfg.threads);
}

}  // namespace

int gen_synthetic(const GenOptions& opts) {
  opts.spec.validate();
  Rng rng = Rng(opts.seed).split(rng_tag::synthetic);
  const auto data = generate_synthetic(opts.spec, rng);
  const fs::path dir(opts.out_dir);
  fs::create_directories(dir);
  const auto emb = dir / (opts.csv ? "embeddings.csv" : "embeddings.bin");
  save_embeddings(data.store, emb);
  save_knowledge(data.kb, dir / "knowledge.json");
  write_text_file(dir / "centers.json", centers_to_json(data.true_centers));
  std::printf("wrote %zu records (dim %d), %zu classes, %zu attributes to %s\n", data.store.size(),
              data.store.dim(), data.kb.num_classes(), data.kb.num_attributes(), dir.string().c_str());
  return 0;
}

int train(const std::string& stage, const Overrides& ov) {
  RunConfig cfg = resolve(ov);
  if (ov.epochs) {
    if (*ov.epochs < 0) throw DataError("--epochs must be >= 0");
    if (stage == "patnet") cfg.patnet.epochs = *ov.epochs;
    if (stage == "protocom") cfg.protocom.episodes = *ov.epochs;
    if (stage == "finetune") cfg.finetune.episodes = *ov.epochs;
  }
  const auto in = load_inputs(cfg);
  if (stage == "patnet") {
    const auto s = run_patnet_stage(in.store, in.kb, cfg);
    finish_stage(cfg, "patnet", to_checkpoint(s.net), s.report);
  } else if (stage == "protocom") {
    const auto priors = load_priors(cfg, in, "train protocom");
    const auto s = run_protocom_stage(in.store, in.kb, priors, cfg);
    finish_stage(cfg, "protocom", to_checkpoint(s.net, s.scale), s.report);
  } else if (stage == "finetune") {
    const auto start = load_completion(cfg, in, "protocom", "train finetune");
    const auto priors = load_priors(cfg, in, "train finetune");
    const auto s = run_finetune_stage(in.store, in.kb, priors, start, cfg);
    finish_stage(cfg, "finetune", to_checkpoint(s.net, s.scale), s.report);
  } else {
    throw std::invalid_argument("unknown stage '" + stage + "'");
  }
  return 0;
}

int eval(const Overrides& ov) {
  const RunConfig cfg = resolve(ov);
  const auto in = load_inputs(cfg);
  std::optional<std::map<std::string, Vec>> centers;
  if (!cfg.paths.centers.empty()) centers = centers_from_json(read_text_file(cfg.paths.centers));
  const auto report = run_eval(cfg, in, centers ? &*centers : nullptr, "eval");
  write_text_file(cfg.paths.output / "eval_report.json", eval_report_to_json(report));
  std::fputs(format_eval_table(report).c_str(), stdout);
  return 0;
}

int fidelity(const Overrides& ov) {
  const RunConfig cfg = resolve(ov);
  const auto in = load_inputs(cfg);
  const auto centers = cfg.paths.centers.empty() ? class_means(in.store, cfg.episode.split)
                                                 : centers_from_json(read_text_file(cfg.paths.centers));
  const auto report = run_eval(cfg, in, &centers, "fidelity");
  write_text_file(cfg.paths.output / "fidelity_report.json", eval_report_to_json(report, false));
  const auto& f = *report.fidelity;
  std::printf("cosine to class centers over %d episodes (%s centers)\n", report.n_episodes(),
              cfg.paths.centers.empty() ? "empirical" : "given");
  std::printf("%-12s %10.6f\n%-12s %10.6f\n%-12s %10.6f\n", "mean-based", f.mean_based, "completed", f.completed,
              "fused", f.fused);
  return 0;
}

int noise_sweep(const Overrides& ov, const std::vector<double>& gammas) {
  const RunConfig cfg = resolve(ov);
  const auto in = load_inputs(cfg);
  const auto rows = protofuse::noise_sweep(in.store, in.kb, cfg, gammas);
  write_text_file(cfg.paths.output / "noise_sweep.json", noise_sweep_to_json(rows));
  std::fputs(format_noise_table(rows).c_str(), stdout);
  return 0;
}

}  // namespace protofuse::cli
