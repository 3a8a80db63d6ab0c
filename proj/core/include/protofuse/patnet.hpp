#pragma once

#include <optional>
#include <vector>

#include "protofuse/checkpoint.hpp"
#include "protofuse/knowledge.hpp"
#include "protofuse/mlp.hpp"
#include "protofuse/optimizer.hpp"
#include "protofuse/training_report.hpp"

namespace protofuse {

/// Part/attribute transfer network: semantic embedding -> feature distribution.
///
/// `embed` is one ReLU layer; `mean_head` and `logvar_head` are two-layer
/// MLPs on top of it. The std is exp(0.5 * logvar), floored at kStdFloor.
struct PatNet {
  Mlp embed;
  Mlp mean_head;
  Mlp logvar_head;

  PatNet() = default;
  PatNet(int semantic_dim, int feature_dim, Rng& rng, int hidden = 512);

  int semantic_dim() const { return embed.input_dim(); }
  int feature_dim() const { return mean_head.output_dim(); }

  DiagGaussian forward(const Vec& semantic) const;

  std::vector<std::span<double>> parameters();
};

struct PatNetGrads {
  MlpGrads embed;
  MlpGrads mean_head;
  MlpGrads logvar_head;

  std::vector<std::span<const double>> views() const;
};

struct PatNetHyper {
  int epochs = 2000;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-3, 0.9, 0.9, 0.999, 1e-8, 5e-4, {1000}, 0.1};
};

/// Mean KL(predicted || target) over the attributes that have a target.
/// Fills `grads` (overwriting) when given.
double patnet_loss(const PatNet& net, const KnowledgeBase& kb,
                   const std::vector<std::optional<DiagGaussian>>& targets, PatNetGrads* grads);

/// Full-batch training over the seen attributes. Throws DataError when no
/// attribute has a target.
TrainingReport train_patnet(PatNet& net, const KnowledgeBase& kb,
                            const std::vector<std::optional<DiagGaussian>>& seen_dists,
                            const PatNetHyper& hyper);

/// Predicted distribution of every attribute, seen or unseen.
std::vector<DiagGaussian> infer_distributions(const PatNet& net, const KnowledgeBase& kb);

Checkpoint to_checkpoint(const PatNet& net);
PatNet patnet_from_checkpoint(const Checkpoint& ckpt);

}  // namespace protofuse
