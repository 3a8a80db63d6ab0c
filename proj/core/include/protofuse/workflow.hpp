#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protofuse/evaluation.hpp"
#include "protofuse/finetune.hpp"
#include "protofuse/patnet.hpp"
#include "protofuse/protocomnet.hpp"

namespace protofuse {

struct RunPaths {
  std::filesystem::path embeddings;
  std::filesystem::path knowledge;
  std::filesystem::path checkpoints = "checkpoints";
  std::filesystem::path output = "out";
  /// Optional true class centers (JSON object id -> vector) for fidelity.
  std::filesystem::path centers;
};

struct RunConfig {
  RunPaths paths;
  EpisodeShape episode;
  FusionConfig fusion;
  PatNetHyper patnet;
  ProtoComHyper protocom;
  /// Shot count of the completion tasks; defaults to episode.k_shot.
  std::optional<int> protocom_k_shot;
  FinetuneHyper finetune;
  std::uint64_t seed = 0;
  int threads = 0;

  int completion_shots() const { return protocom_k_shot.value_or(episode.k_shot); }
  void validate() const;
};

/// Keys missing from `text` keep their defaults; unknown keys are an error.
RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Replaces cfg.seed with $PROTOFUSE_SEED when set. Throws DataError when the
/// variable is not an unsigned integer.
void apply_seed_env(RunConfig& cfg);

/// Stream tags: every stage draws from Rng(seed).split(tag).
namespace rng_tag {
inline constexpr std::uint64_t patnet_init = 1;
inline constexpr std::uint64_t protocom_init = 2;
inline constexpr std::uint64_t protocom_train = 3;
inline constexpr std::uint64_t finetune = 4;
inline constexpr std::uint64_t eval = 5;
inline constexpr std::uint64_t noise = 6;
inline constexpr std::uint64_t synthetic = 7;
}  // namespace rng_tag

AttrPriors build_priors(const EmbeddingStore& store, const KnowledgeBase& kb, const PatNet& patnet);

struct PatNetStage {
  PatNet net;
  TrainingReport report;
};
PatNetStage run_patnet_stage(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg);

struct ProtoComStage {
  ProtoComNet net;
  ScaleParam scale;
  TrainingReport report;
};
ProtoComStage run_protocom_stage(const EmbeddingStore& store, const KnowledgeBase& kb,
                                 const AttrPriors& priors, const RunConfig& cfg);

/// Fine-tunes a copy of `start`.
ProtoComStage run_finetune_stage(const EmbeddingStore& store, const KnowledgeBase& kb,
                                 const AttrPriors& priors, const ProtoComStage& start,
                                 const RunConfig& cfg);

/// All trained state of one pipeline run.
struct TrainedModel {
  PatNet patnet;
  AttrPriors priors;
  ProtoComNet net;
  ScaleParam scale;
};

/// Runs every training stage in memory with the same streams the staged
/// commands use. Fine-tuning is skipped when cfg.finetune.episodes is 0.
TrainedModel train_all(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg);

EvalReport evaluate_model(const TrainedModel& model, const EmbeddingStore& store, const KnowledgeBase& kb,
                          const RunConfig& cfg, const std::map<std::string, Vec>* centers = nullptr);

/// Accuracy after injecting association noise, for three prototype choices:
/// completed only (no fusion), mean fusion and Gaussian fusion.
struct NoiseRow {
  double gamma = 0.0;
  AccuracySummary none;
  AccuracySummary mean;
  AccuracySummary gauss;
};

/// Retrains the whole pipeline on each noisy knowledge base. Gaussian fusion
/// uses cfg.fusion when it is a transductive method, improved EM otherwise.
std::vector<NoiseRow> noise_sweep(const EmbeddingStore& store, const KnowledgeBase& kb, const RunConfig& cfg,
                                  const std::vector<double>& gammas);

std::string noise_sweep_to_json(const std::vector<NoiseRow>& rows);
std::string format_noise_table(const std::vector<NoiseRow>& rows);

std::map<std::string, Vec> centers_from_json(std::string_view text);
std::string centers_to_json(const std::map<std::string, Vec>& centers);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace protofuse
