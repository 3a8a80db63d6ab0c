#pragma once

#include "protofuse/episode.hpp"
#include "protofuse/fusion.hpp"
#include "protofuse/protocomnet.hpp"

namespace protofuse {

struct FinetuneHyper {
  int episodes = 300;
  int n_way = 5;
  int k_shot = 1;
  int m_query = 15;
  OptimizerConfig optimizer{OptimizerKind::sgd_momentum, 0.001, 0.9, 0.9, 0.999, 1e-8, 5e-4, {}, 0.1};
  /// Learning rate of the classifier scale (no weight decay).
  double gamma_learning_rate = 0.01;
};

/// Loss, gradients and accuracy of one episode through completion and fusion
/// (see fuse_backward for how the fusion step is differentiated).
struct EpisodeLoss {
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_gamma = 0.0;
};
EpisodeLoss episodic_loss(const ProtoComNet& net, double gamma, const Episode& episode,
                          const KnowledgeBase& kb, const AttrPriors& priors,
                          const FusionConfig& fusion, CompletionMode mode, Rng* rng,
                          ProtoComGrads* grads);

/// Episodic fine-tuning of the completion network and the classifier scale
/// on base-class episodes.
TrainingReport meta_finetune(ProtoComNet& net, ScaleParam& scale, const EmbeddingStore& store,
                             const KnowledgeBase& kb, const AttrPriors& priors,
                             const FusionConfig& fusion, const FinetuneHyper& hyper, Rng& rng);

}  // namespace protofuse
