#pragma once

#include <optional>
#include <vector>

#include "protofuse/checkpoint.hpp"
#include "protofuse/embedding_store.hpp"
#include "protofuse/knowledge.hpp"
#include "protofuse/losses.hpp"
#include "protofuse/mlp.hpp"
#include "protofuse/optimizer.hpp"
#include "protofuse/training_report.hpp"

namespace protofuse {

/// Attribute feature priors: `seen` holds the base-statistics distribution of
/// each seen attribute (nullopt for unseen ones); `inferred` holds the
/// transfer-network prediction for every attribute.
struct AttrPriors {
  std::vector<std::optional<DiagGaussian>> seen;
  std::vector<DiagGaussian> inferred;

  bool is_seen(std::size_t attr) const { return seen[attr].has_value(); }
  void validate(const KnowledgeBase& kb, int feature_dim) const;
};

/// Encoder-aggregator-decoder completion network.
///
/// One shared encoder maps the incomplete prototype and every attribute
/// feature to latent codes. The aggregator scores (prototype, class semantics,
/// attribute semantics) and its sigmoid output weighs each attribute code.
/// The decoder maps the aggregate back to feature space.
struct ProtoComNet {
  Mlp encoder;
  Mlp aggregator;
  Mlp decoder;
  /// Probability of drawing a seen attribute from its base statistics during training.
  double rho = 0.5;

  ProtoComNet() = default;
  ProtoComNet(int feature_dim, int semantic_dim, Rng& rng, int encoder_width = 256,
              int aggregator_hidden = 300, int decoder_hidden = 512);

  int feature_dim() const { return encoder.input_dim(); }
  int semantic_dim() const { return (aggregator.input_dim() - feature_dim()) / 2; }

  std::vector<std::span<double>> parameters();
};

struct ProtoComGrads {
  MlpGrads encoder;
  MlpGrads aggregator;
  MlpGrads decoder;

  static ProtoComGrads zeros_like(const ProtoComNet& net);
  void set_zero();
  ProtoComGrads& operator*=(double s);
  std::vector<std::span<const double>> views() const;
};

enum class CompletionMode { train, infer };

/// Intermediate values of one completion, for backward_completion.
struct CompletionTrace {
  MlpTrace encoder;
  MlpTrace aggregator;
  MlpTrace decoder;
  Mat codes;  // column 0: prototype code; column j+1: code of attributes[j]
  Vec alpha;
  std::vector<std::size_t> attributes;
};

/// Completes the mean-based prototype `prototype` of class `cls`.
///
/// Train mode samples each associated attribute feature (from its seen
/// distribution with probability rho when seen, otherwise from the inferred
/// one) and needs `rng`. Infer mode uses the seen mean for seen attributes and
/// the inferred mean for unseen ones.
Vec complete_prototype(const ProtoComNet& net, const Vec& prototype, std::size_t cls,
                       const KnowledgeBase& kb, const AttrPriors& priors, CompletionMode mode,
                       Rng* rng, CompletionTrace* trace = nullptr);

/// Attention weight of every attribute for `cls` (exactly 0 where R = 0).
Vec attention_weights(const ProtoComNet& net, const Vec& prototype, std::size_t cls,
                      const KnowledgeBase& kb);

/// Accumulates parameter gradients of dot(output, grad_output).
void backward_completion(const ProtoComNet& net, const CompletionTrace& trace,
                         const Vec& grad_output, ProtoComGrads& grads);

struct ProtoComHyper {
  int episodes = 6000;
  /// Episodes averaged per optimizer step.
  int batch = 4;
  OptimizerConfig optimizer{OptimizerKind::sgd_momentum, 0.001, 0.9, 0.9, 0.999, 1e-8, 5e-4, {}, 0.1};
};

/// Mimics K-shot tasks on base classes: average K random samples of a random
/// base class, complete it, regress onto the class mean with MSE.
TrainingReport train_protocomnet(ProtoComNet& net, const EmbeddingStore& store,
                                 const KnowledgeBase& kb, const AttrPriors& priors, int k_shot,
                                 const ProtoComHyper& hyper, Rng& rng);

/// Mean cosine to the class mean of the mean-based and of the completed
/// prototype over random base K-shot tasks (infer mode).
struct CompletionQuality {
  double mean_based_cosine = 0.0;
  double completed_cosine = 0.0;
  double completed_mse = 0.0;
};
CompletionQuality completion_quality(const ProtoComNet& net, const EmbeddingStore& store,
                                     const KnowledgeBase& kb, const AttrPriors& priors, int k_shot,
                                     int tasks, Rng& rng);

Checkpoint to_checkpoint(const ProtoComNet& net, const ScaleParam& scale);
ProtoComNet protocomnet_from_checkpoint(const Checkpoint& ckpt, ScaleParam* scale = nullptr);

}  // namespace protofuse
