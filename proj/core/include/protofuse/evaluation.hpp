#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protofuse/episode.hpp"
#include "protofuse/fusion.hpp"
#include "protofuse/protocomnet.hpp"

namespace protofuse {

/// Softmax over gamma-scaled cosines; sums to one.
Vec classify(const Vec& query, std::span<const Vec> prototypes, double gamma);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const Vec& v);

/// Everything needed to turn an episode into prototypes. Without a network the
/// completed prototype is the mean-based one.
struct Pipeline {
  const ProtoComNet* net = nullptr;
  const KnowledgeBase* kb = nullptr;
  const AttrPriors* priors = nullptr;
  FusionConfig fusion;
  double gamma = 10.0;
};

/// Mean-based, completed and fused prototypes of one episode (infer mode).
PrototypeSet episode_prototypes(const Pipeline& pipeline, const Episode& episode);

struct EpisodeShape {
  int n_way = 5;
  int k_shot = 1;
  int m_query = 15;
  int n_episodes = 600;
  Split split = Split::test;
};

struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_episode;
};

/// Mean cosine of each prototype kind to the true class centers.
struct Fidelity {
  double mean_based = 0.0;
  double completed = 0.0;
  double fused = 0.0;
};

struct EvalReport {
  EpisodeShape shape;
  FusionConfig fusion;
  AccuracySummary mean_based;
  AccuracySummary completed;
  AccuracySummary fused;
  std::optional<Fidelity> fidelity;
  /// Per-episode fidelity (averaged over the episode's classes).
  std::vector<Fidelity> episode_fidelity;

  int n_episodes() const { return shape.n_episodes; }
  /// Accuracy of the fused prototypes, the pipeline's final prediction.
  double mean_accuracy() const { return fused.mean; }
  double ci95_halfwidth() const { return fused.ci95; }
};

/// Mean and 1.96 * sample std / sqrt(n) (zero for n < 2).
AccuracySummary summarize(std::vector<double> per_episode);

/// Averaged cosines of p, p_hat and the fused prototype to `centers`, over
/// every class of every set. `class_ids[i]` names the ways of `sets[i]`.
Fidelity prototype_fidelity(std::span<const PrototypeSet> sets,
                            std::span<const std::vector<std::string>> class_ids,
                            const std::map<std::string, Vec>& centers);

/// Episode i draws from rng.split(i), so results do not depend on `threads`
/// (0 = hardware concurrency). Fidelity is reported when `centers` is given.
EvalReport evaluate(const Pipeline& pipeline, const EmbeddingStore& store, const EpisodeShape& shape,
                    const Rng& rng, const std::map<std::string, Vec>* centers = nullptr,
                    int threads = 0);

std::string eval_report_to_json(const EvalReport& report, bool per_episode = true);
/// Fixed-width summary table.
std::string format_eval_table(const EvalReport& report);

}  // namespace protofuse
