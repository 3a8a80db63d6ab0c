#include "protofuse/patnet.hpp"

#include <cmath>

#include "protofuse/errors.hpp"
#include "protofuse/losses.hpp"

namespace protofuse {

PatNet::PatNet(int semantic_dim, int feature_dim, Rng& rng, int hidden)
    : embed({semantic_dim, hidden}, Activation::relu, Activation::relu, rng),
      mean_head({hidden, hidden, feature_dim}, Activation::relu, Activation::identity, rng),
      logvar_head({hidden, hidden, feature_dim}, Activation::relu, Activation::identity, rng) {}

DiagGaussian PatNet::forward(const Vec& semantic) const {
  require_same_dim(semantic.size(), semantic_dim(), "patnet_forward");
  const Vec h = embed.forward(semantic);
  return DiagGaussian(mean_head.forward(h), (0.5 * logvar_head.forward(h).array()).exp().matrix());
}

std::vector<std::span<double>> PatNet::parameters() {
  auto out = embed.parameters();
  for (auto s : mean_head.parameters()) out.push_back(s);
  for (auto s : logvar_head.parameters()) out.push_back(s);
  return out;
}

std::vector<std::span<const double>> PatNetGrads::views() const {
  auto out = embed.views();
  for (auto s : mean_head.views()) out.push_back(s);
  for (auto s : logvar_head.views()) out.push_back(s);
  return out;
}

double patnet_loss(const PatNet& net, const KnowledgeBase& kb,
                   const std::vector<std::optional<DiagGaussian>>& targets, PatNetGrads* grads) {
  std::vector<std::size_t> attrs;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    if (targets[a]) attrs.push_back(a);
  }
  if (attrs.empty()) throw DataError("patnet: no seen attribute to train on");
  const auto n = static_cast<Eigen::Index>(attrs.size());
  Mat semantic(net.semantic_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& h = kb.attributes()[attrs[static_cast<std::size_t>(j)]].embedding;
    require_same_dim(h.size(), net.semantic_dim(), "patnet_loss");
    semantic.col(j) = h;
  }

  MlpTrace embed_trace, mean_trace, logvar_trace;
  const Mat hidden = net.embed.forward(semantic, grads ? &embed_trace : nullptr);
  const Mat means = net.mean_head.forward(hidden, grads ? &mean_trace : nullptr);
  const Mat logvars = net.logvar_head.forward(hidden, grads ? &logvar_trace : nullptr);

  Mat up_mean(means.rows(), n), up_logvar(logvars.rows(), n);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto kl = kl_head_loss(means.col(j), logvars.col(j), *targets[attrs[static_cast<std::size_t>(j)]]);
    total += kl.loss;
    up_mean.col(j) = inv_n * kl.grad_mean;
    up_logvar.col(j) = inv_n * kl.grad_logvar;
  }
  if (grads) {
    grads->embed = net.embed.zero_grads();
    grads->mean_head = net.mean_head.zero_grads();
    grads->logvar_head = net.logvar_head.zero_grads();
    Mat up_hidden = net.mean_head.backward(mean_trace, up_mean, grads->mean_head);
    up_hidden += net.logvar_head.backward(logvar_trace, up_logvar, grads->logvar_head);
    net.embed.backward(embed_trace, up_hidden, grads->embed);
  }
  return total * inv_n;
}

TrainingReport train_patnet(PatNet& net, const KnowledgeBase& kb,
                            const std::vector<std::optional<DiagGaussian>>& seen_dists,
                            const PatNetHyper& hyper) {
  TrainingReport report;
  report.stage = "patnet";
  report.initial_loss = patnet_loss(net, kb, seen_dists, nullptr);
  report.final_loss = report.initial_loss;
  if (hyper.epochs <= 0) return report;

  Optimizer opt(hyper.optimizer);
  PatNetGrads grads;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    opt.set_learning_rate(scheduled_learning_rate(hyper.optimizer, epoch));
    const double loss = patnet_loss(net, kb, seen_dists, &grads);
    if (!std::isfinite(loss)) throw NumericalError("patnet: non-finite loss at epoch " + std::to_string(epoch));
    report.losses.push_back(loss);
    const auto views = grads.views();
    opt.step(net.parameters(), views);
  }
  report.final_loss = patnet_loss(net, kb, seen_dists, nullptr);
  return report;
}

std::vector<DiagGaussian> infer_distributions(const PatNet& net, const KnowledgeBase& kb) {
  std::vector<DiagGaussian> out;
  out.reserve(kb.num_attributes());
  for (const auto& a : kb.attributes()) out.push_back(net.forward(a.embedding));
  return out;
}

Checkpoint to_checkpoint(const PatNet& net) {
  return Checkpoint{"patnet",
                    {{"embed", net.embed}, {"mean_head", net.mean_head}, {"logvar_head", net.logvar_head}},
                    {}};
}

PatNet patnet_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.module != "patnet") throw DataError("checkpoint module is '" + ckpt.module + "', expected 'patnet'");
  PatNet net;
  net.embed = ckpt.network("embed");
  net.mean_head = ckpt.network("mean_head");
  net.logvar_head = ckpt.network("logvar_head");
  if (net.mean_head.input_dim() != net.embed.output_dim() ||
      net.logvar_head.input_dim() != net.embed.output_dim() ||
      net.mean_head.output_dim() != net.logvar_head.output_dim()) {
    throw DataError("patnet checkpoint: inconsistent network dims");
  }
  return net;
}

}  // namespace protofuse
