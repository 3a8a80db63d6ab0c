#include "protofuse/workflow.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw DataError("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw DataError("config: unknown key '" + where + "." + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
  std::string s;
  if (obj.contains(key)) {
    read(obj, key, s);
    out = s;
  }
}

void read_optimizer(const json& obj, OptimizerConfig& opt) {
  read(obj, "learning_rate", opt.learning_rate);
  read(obj, "momentum", opt.momentum);
  read(obj, "weight_decay", opt.weight_decay);
  read(obj, "milestones", opt.milestones);
  read(obj, "decay", opt.decay);
  if (obj.contains("optimizer")) {
    std::string kind;
    read(obj, "optimizer", kind);
    opt.kind = parse_optimizer_kind(kind);
  }
}

json optimizer_json(const OptimizerConfig& opt) {
  return {{"optimizer", to_string(opt.kind)}, {"learning_rate", opt.learning_rate},
          {"momentum", opt.momentum},         {"weight_decay", opt.weight_decay},
          {"milestones", opt.milestones},     {"decay", opt.decay}};
}

}  // namespace

void RunConfig::validate() const {
  if (episode.n_way < 1 || episode.k_shot < 1 || episode.m_query < 1 || episode.n_episodes < 1) {
    throw DataError("config: episode sizes must be >= 1");
  }
  if (completion_shots() < 1) throw DataError("config: protocom k_shot must be >= 1");
  if (patnet.epochs < 0 || protocom.episodes < 0 || finetune.episodes < 0) {
    throw DataError("config: epoch and episode counts must be >= 0");
  }
  if (protocom.batch < 1) throw DataError("config: protocom batch must be >= 1");
  if (threads < 0) throw DataError("config: threads must be >= 0");
  fusion.validate();
  patnet.optimizer.validate();
  protocom.optimizer.validate();
  finetune.optimizer.validate();
}

RunConfig run_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  check_keys(j, "config", {"seed", "threads", "paths", "episode", "fusion", "patnet", "protocom", "finetune"});
  RunConfig cfg;
  read(j, "seed", cfg.seed);
  read(j, "threads", cfg.threads);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, "paths", {"embeddings", "knowledge", "checkpoints", "output", "centers"});
    read_path(p, "embeddings", cfg.paths.embeddings);
    read_path(p, "knowledge", cfg.paths.knowledge);
    read_path(p, "checkpoints", cfg.paths.checkpoints);
    read_path(p, "output", cfg.paths.output);
    read_path(p, "centers", cfg.paths.centers);
  }
  if (j.contains("episode")) {
    const auto& e = j["episode"];
    check_keys(e, "episode", {"n_way", "k_shot", "m_query", "n_episodes", "split"});
    read(e, "n_way", cfg.episode.n_way);
    read(e, "k_shot", cfg.episode.k_shot);
    read(e, "m_query", cfg.episode.m_query);
    read(e, "n_episodes", cfg.episode.n_episodes);
    if (e.contains("split")) cfg.episode.split = parse_split(e["split"].get<std::string>());
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    check_keys(f, "fusion", {"method", "lambda", "n_iter", "em_sigma_init", "em_tol", "em_max_iter", "setting"});
    if (f.contains("method")) cfg.fusion.method = parse_fusion_method(f["method"].get<std::string>());
    if (f.contains("setting")) cfg.fusion.setting = parse_fusion_setting(f["setting"].get<std::string>());
    read(f, "lambda", cfg.fusion.lambda);
    read(f, "n_iter", cfg.fusion.n_iter);
    read(f, "em_sigma_init", cfg.fusion.em_sigma_init);
    read(f, "em_tol", cfg.fusion.em_tol);
    read(f, "em_max_iter", cfg.fusion.em_max_iter);
  }
  if (j.contains("patnet")) {
    const auto& p = j["patnet"];
    check_keys(p, "patnet", {"epochs", "optimizer", "learning_rate", "momentum", "weight_decay", "milestones", "decay"});
    read(p, "epochs", cfg.patnet.epochs);
    read_optimizer(p, cfg.patnet.optimizer);
  }
  if (j.contains("protocom")) {
    const auto& p = j["protocom"];
    check_keys(p, "protocom", {"episodes", "batch", "k_shot", "optimizer", "learning_rate", "momentum",
                               "weight_decay", "milestones", "decay"});
    read(p, "episodes", cfg.protocom.episodes);
    read(p, "batch", cfg.protocom.batch);
    if (p.contains("k_shot")) {
      int k = 0;
      read(p, "k_shot", k);
      cfg.protocom_k_shot = k;
    }
    read_optimizer(p, cfg.protocom.optimizer);
  }
  if (j.contains("finetune")) {
    const auto& f = j["finetune"];
    check_keys(f, "finetune", {"episodes", "n_way", "k_shot", "m_query", "gamma_learning_rate", "optimizer",
                               "learning_rate", "momentum", "weight_decay", "milestones", "decay"});
    read(f, "episodes", cfg.finetune.episodes);
    read(f, "n_way", cfg.finetune.n_way);
    read(f, "k_shot", cfg.finetune.k_shot);
    read(f, "m_query", cfg.finetune.m_query);
    read(f, "gamma_learning_rate", cfg.finetune.gamma_learning_rate);
    read_optimizer(f, cfg.finetune.optimizer);
  }
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"embeddings", cfg.paths.embeddings.string()}, {"knowledge", cfg.paths.knowledge.string()},
                {"checkpoints", cfg.paths.checkpoints.string()}, {"output", cfg.paths.output.string()},
                {"centers", cfg.paths.centers.string()}};
  j["episode"] = {{"n_way", cfg.episode.n_way},           {"k_shot", cfg.episode.k_shot},
                  {"m_query", cfg.episode.m_query},       {"n_episodes", cfg.episode.n_episodes},
                  {"split", std::string(to_string(cfg.episode.split))}};
  j["fusion"] = {{"method", to_string(cfg.fusion.method)}, {"lambda", cfg.fusion.lambda},
                 {"n_iter", cfg.fusion.n_iter},            {"em_sigma_init", cfg.fusion.em_sigma_init},
                 {"em_tol", cfg.fusion.em_tol},            {"em_max_iter", cfg.fusion.em_max_iter},
                 {"setting", to_string(cfg.fusion.setting)}};
  j["patnet"] = optimizer_json(cfg.patnet.optimizer);
  j["patnet"]["epochs"] = cfg.patnet.epochs;
  j["protocom"] = optimizer_json(cfg.protocom.optimizer);
  j["protocom"]["episodes"] = cfg.protocom.episodes;
  j["protocom"]["batch"] = cfg.protocom.batch;
  j["protocom"]["k_shot"] = cfg.completion_shots();
  j["finetune"] = optimizer_json(cfg.finetune.optimizer);
  j["finetune"]["episodes"] = cfg.finetune.episodes;
  j["finetune"]["n_way"] = cfg.finetune.n_way;
  j["finetune"]["k_shot"] = cfg.finetune.k_shot;
  j["finetune"]["m_query"] = cfg.finetune.m_query;
  j["finetune"]["gamma_learning_rate"] = cfg.finetune.gamma_learning_rate;
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_text_file(path));
}

void apply_seed_env(RunConfig& cfg) {
  const char* env = std::getenv("PROTOFUSE_SEED");
  if (!env || !*env) return;
  const std::string text(env);
  std::size_t used = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.front() == '-') {
    throw DataError("PROTOFUSE_SEED must be an unsigned integer, got '" + text + "'");
  }
  cfg.seed = value;
}

AttrPriors build_priors(const EmbeddingStore& store, const KnowledgeBase& kb, const PatNet& patnet) {
  AttrPriors priors{seen_attribute_distributions(store, kb), infer_distributions(patnet, kb)};
  priors.validate(kb, store.dim());
  return priors;
}

PatNetStage run_patnet_stage(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg) {
  Rng rng = Rng(cfg.seed).split(rng_tag::patnet_init);
  PatNetStage stage{PatNet(kb.embedding_dim(), store.dim(), rng), {}};
  stage.report = train_patnet(stage.net, kb, seen_attribute_distributions(store, kb), cfg.patnet);
  return stage;
}

ProtoComStage run_protocom_stage(const EmbeddingStore& store, const KnowledgeBase& kb,
                                 const AttrPriors& priors, const RunConfig& cfg) {
  Rng init = Rng(cfg.seed).split(rng_tag::protocom_init);
  ProtoComStage stage{ProtoComNet(store.dim(), kb.embedding_dim(), init), ScaleParam{}, {}};
  Rng rng = Rng(cfg.seed).split(rng_tag::protocom_train);
  stage.report = train_protocomnet(stage.net, store, kb, priors, cfg.completion_shots(), cfg.protocom, rng);
  return stage;
}

ProtoComStage run_finetune_stage(const EmbeddingStore& store, const KnowledgeBase& kb,
                                 const AttrPriors& priors, const ProtoComStage& start,
                                 const RunConfig& cfg) {
  ProtoComStage stage{start.net, start.scale, {}};
  Rng rng = Rng(cfg.seed).split(rng_tag::finetune);
  stage.report = meta_finetune(stage.net, stage.scale, store, kb, priors, cfg.fusion, cfg.finetune, rng);
  return stage;
}

TrainedModel train_all(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg) {
  auto pat = run_patnet_stage(store, kb, cfg);
  auto priors = build_priors(store, kb, pat.net);
  auto com = run_protocom_stage(store, kb, priors, cfg);
  if (cfg.finetune.episodes > 0) com = run_finetune_stage(store, kb, priors, com, cfg);
  return {std::move(pat.net), std::move(priors), std::move(com.net), com.scale};
}

EvalReport evaluate_model(const TrainedModel& model, const EmbeddingStore& store, const KnowledgeBase& kb,
                          const RunConfig& cfg, const std::map<std::string, Vec>* centers) {
  const Pipeline pipeline{&model.net, &kb, &model.priors, cfg.fusion, model.scale.gamma};
  return evaluate(pipeline, store, cfg.episode, Rng(cfg.seed).split(rng_tag::eval), centers, cfg.threads);
}

std::vector<NoiseRow> noise_sweep(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg,
                                  const std::vector<double>& gammas) {
  if (gammas.empty()) throw DataError("noise-sweep: empty gamma list");
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw DataError("noise-sweep: gamma must lie in [0, 1]");
  }
  const Rng noise_root = Rng(cfg.seed).split(rng_tag::noise);
  std::vector<NoiseRow> rows;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    Rng noise_rng = noise_root.split(i);
    const KnowledgeBase noisy = inject_noise(kb, gammas[i], noise_rng);
    const TrainedModel model = train_all(store, noisy, cfg);

    RunConfig mean_cfg = cfg;
    mean_cfg.fusion.method = FusionMethod::mean;
    RunConfig gauss_cfg = cfg;
    if (cfg.fusion.method == FusionMethod::mean || cfg.fusion.setting == FusionSetting::inductive) {
      gauss_cfg.fusion.method = FusionMethod::improved_em;
      gauss_cfg.fusion.setting = FusionSetting::transductive;
    }
    const auto mean_report = evaluate_model(model, store, noisy, mean_cfg);
    const auto gauss_report = evaluate_model(model, store, noisy, gauss_cfg);
    rows.push_back({gammas[i], mean_report.completed, mean_report.fused, gauss_report.fused});
  }
  return rows;
}

std::string noise_sweep_to_json(const std::vector<NoiseRow>& rows) {
  json arr = json::array();
  auto summary = [](const AccuracySummary& s) {
    return json{{"mean_accuracy", s.mean}, {"ci95_halfwidth", s.ci95}};
  };
  for (const auto& r : rows) {
    arr.push_back({{"gamma", r.gamma}, {"none", summary(r.none)}, {"mean", summary(r.mean)},
                   {"gauss", summary(r.gauss)}});
  }
  return json{{"rows", arr}}.dump(2) + "\n";
}

std::string format_noise_table(const std::vector<NoiseRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %18s %18s %18s\n", "gamma", "no fusion", "mean fusion", "gauss fusion");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-8.3f %8.2f%% +- %5.2f %8.2f%% +- %5.2f %8.2f%% +- %5.2f\n", r.gamma,
                  100 * r.none.mean, 100 * r.none.ci95, 100 * r.mean.mean, 100 * r.mean.ci95, 100 * r.gauss.mean,
                  100 * r.gauss.ci95);
    out += line;
  }
  return out;
}

std::map<std::string, Vec> centers_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("centers: ") + e.what());
  }
  if (!j.is_object()) throw DataError("centers: expected an object of class id -> vector");
  std::map<std::string, Vec> out;
  for (const auto& [id, values] : j.items()) {
    const auto v = values.get<std::vector<double>>();
    out[id] = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return out;
}

std::string centers_to_json(const std::map<std::string, Vec>& centers) {
  json j = json::object();
  for (const auto& [id, v] : centers) j[id] = std::vector<double>(v.data(), v.data() + v.size());
  return j.dump() + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace protofuse
