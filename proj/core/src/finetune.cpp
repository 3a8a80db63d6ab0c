#include "protofuse/finetune.hpp"

#include <cmath>

#include "protofuse/episode.hpp"
#include "protofuse/errors.hpp"

namespace protofuse {

EpisodeLoss episodic_loss(const ProtoComNet& net, double gamma, const Episode& episode,
                          const KnowledgeBase& kb, const AttrPriors& priors,
                          const FusionConfig& fusion, CompletionMode mode, Rng* rng,
                          ProtoComGrads* grads) {
  const auto n_way = static_cast<std::size_t>(episode.n_way);
  const auto p = support_prototypes(episode);
  std::vector<Vec> p_hat;
  std::vector<CompletionTrace> traces(grads ? n_way : 0);
  p_hat.reserve(n_way);
  for (std::size_t k = 0; k < n_way; ++k) {
    p_hat.push_back(complete_prototype(net, p[k], kb.class_index(episode.class_ids[k]), kb, priors,
                                       mode, rng, grads ? &traces[k] : nullptr));
  }
  const TransductiveTask task{episode.support, episode.support_labels, episode.query, episode.n_way};
  const auto set = fuse(task, p, p_hat, fusion);
  const auto ce = cosine_ce_loss(episode.query, episode.query_labels, set.fused, gamma);

  if (grads) {
    const auto grad_p_hat = fuse_backward(task, p, p_hat, fusion, set, ce.grad_prototypes);
    for (std::size_t k = 0; k < n_way; ++k) backward_completion(net, traces[k], grad_p_hat[k], *grads);
  }
  return {ce.loss, ce.accuracy, ce.grad_gamma};
}

TrainingReport meta_finetune(ProtoComNet& net, ScaleParam& scale, const EmbeddingStore& store,
                             const KnowledgeBase& kb, const AttrPriors& priors,
                             const FusionConfig& fusion, const FinetuneHyper& hyper, Rng& rng) {
  fusion.validate();
  hyper.optimizer.validate();
  priors.validate(kb, net.feature_dim());
  if (hyper.n_way < 2) throw DataError("finetune: n_way must be >= 2");
  if (hyper.k_shot < 1 || hyper.m_query < 1) throw DataError("finetune: k_shot and m_query must be >= 1");
  TrainingReport report;
  report.stage = "finetune";
  if (hyper.episodes <= 0) return report;

  Optimizer opt(hyper.optimizer);
  auto grads = ProtoComGrads::zeros_like(net);
  for (int e = 0; e < hyper.episodes; ++e) {
    const auto episode = sample_episode(store, hyper.n_way, hyper.k_shot, hyper.m_query, Split::base, rng);
    grads.set_zero();
    const auto step = episodic_loss(net, scale.gamma, episode, kb, priors, fusion, CompletionMode::train,
                                    &rng, &grads);
    if (!std::isfinite(step.loss)) {
      throw NumericalError("finetune: non-finite loss at episode " + std::to_string(e));
    }
    report.losses.push_back(step.loss);
    report.accuracies.push_back(step.accuracy);
    opt.set_learning_rate(scheduled_learning_rate(hyper.optimizer, e));
    const auto views = grads.views();
    opt.step(net.parameters(), views);
    scale.gamma -= hyper.gamma_learning_rate * step.grad_gamma;
    scale.clamp();
  }
  report.initial_loss = report.losses.front();
  report.final_loss = report.losses.back();
  return report;
}

}  // namespace protofuse
