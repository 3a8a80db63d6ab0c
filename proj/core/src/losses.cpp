#include "protofuse/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace protofuse {

LossAndGrad mse_loss(const Vec& pred, const Vec& target) {
  require_same_dim(pred.size(), target.size(), "mse_loss");
  const Vec diff = pred - target;
  const double d = static_cast<double>(pred.size());
  return {diff.squaredNorm() / d, (2.0 / d) * diff};
}

KlHeadLoss kl_head_loss(const Vec& mean, const Vec& logvar, const DiagGaussian& target) {
  require_same_dim(mean.size(), target.dim(), "kl_head_loss");
  require_same_dim(logvar.size(), target.dim(), "kl_head_loss");
  const Eigen::ArrayXd raw_std = (0.5 * logvar.array()).exp();
  const Eigen::ArrayXd sq = raw_std.max(kStdFloor);
  const Eigen::ArrayXd tvar = target.variance().array();
  const Eigen::ArrayXd diff = mean.array() - target.mean().array();
  const Eigen::ArrayXd terms =
      target.std().array().log() - sq.log() + (sq.square() + diff.square()) / (2.0 * tvar) - 0.5;

  KlHeadLoss out;
  out.loss = terms.sum();
  out.grad_mean = (diff / tvar).matrix();
  // d/dlogvar of [-0.5 logvar + exp(logvar) / (2 tvar)].
  const Eigen::ArrayXd g = -0.5 + sq.square() / (2.0 * tvar);
  out.grad_logvar = (raw_std > kStdFloor).select(g, 0.0).matrix();
  return out;
}

Vec scaled_cosine_softmax(const Vec& query, std::span<const Vec> prototypes, double gamma) {
  if (prototypes.empty()) throw std::invalid_argument("scaled_cosine_softmax: no prototypes");
  Vec logits(static_cast<Eigen::Index>(prototypes.size()));
  for (std::size_t k = 0; k < prototypes.size(); ++k) {
    logits[static_cast<Eigen::Index>(k)] = gamma * cosine_similarity(query, prototypes[k]);
  }
  logits.array() -= logits.maxCoeff();
  Vec p = logits.array().exp().matrix();
  return p / p.sum();
}

CosineCeLoss cosine_ce_loss(std::span<const Vec> queries, std::span<const int> labels,
                            std::span<const Vec> prototypes, double gamma) {
  if (prototypes.size() < 2) throw std::invalid_argument("cosine_ce_loss: need >= 2 prototypes");
  if (queries.size() != labels.size()) throw std::invalid_argument("cosine_ce_loss: label count mismatch");
  if (queries.empty()) throw std::invalid_argument("cosine_ce_loss: no queries");
  const std::size_t n_way = prototypes.size();
  std::vector<double> proto_norm(n_way);
  for (std::size_t k = 0; k < n_way; ++k) {
    proto_norm[k] = prototypes[k].norm();
    if (proto_norm[k] == 0.0) throw std::invalid_argument("cosine_ce_loss: zero-norm prototype");
  }

  CosineCeLoss out;
  out.grad_prototypes.assign(n_way, Vec::Zero(prototypes.front().size()));
  const double inv_n = 1.0 / static_cast<double>(queries.size());
  std::size_t correct = 0;
  Vec cos(static_cast<Eigen::Index>(n_way));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& x = queries[q];
    const int y = labels[q];
    if (y < 0 || static_cast<std::size_t>(y) >= n_way) throw std::invalid_argument("cosine_ce_loss: bad label");
    const double xn = x.norm();
    if (xn == 0.0) throw std::invalid_argument("cosine_ce_loss: zero-norm query");
    for (std::size_t k = 0; k < n_way; ++k) {
      require_same_dim(x.size(), prototypes[k].size(), "cosine_ce_loss");
      cos[static_cast<Eigen::Index>(k)] = x.dot(prototypes[k]) / (xn * proto_norm[k]);
    }
    Eigen::Index best = 0;
    cos.maxCoeff(&best);
    if (best == y) ++correct;
    const Vec logits = gamma * cos;
    const double m = logits.maxCoeff();
    const Vec e = (logits.array() - m).exp().matrix();
    const double z = e.sum();
    out.loss += inv_n * (std::log(z) + m - logits[y]);
    for (std::size_t k = 0; k < n_way; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const double dcos = (e[ki] / z - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_n;
      out.grad_gamma += dcos * cos[ki];
      // d cos / d p = x / (|x||p|) - cos * p / |p|^2
      out.grad_prototypes[k] += (gamma * dcos) * (x / (xn * proto_norm[k]) -
                                                  cos[ki] * prototypes[k] / (proto_norm[k] * proto_norm[k]));
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(queries.size());
  return out;
}

}  // namespace protofuse
