#pragma once

#include <span>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
};

/// Mean over dimensions of the squared difference; grad = 2 (pred - target) / d.
LossAndGrad mse_loss(const Vec& pred, const Vec& target);

/// KL(N(mean, exp(logvar)) || target) with gradients for the mean and the
/// log-variance head. Predicted std is floored at kStdFloor; the floor blocks
/// the log-variance gradient where it binds.
struct KlHeadLoss {
  double loss = 0.0;
  Vec grad_mean;
  Vec grad_logvar;
};
KlHeadLoss kl_head_loss(const Vec& mean, const Vec& logvar, const DiagGaussian& target);

/// Scaled-cosine softmax cross-entropy averaged over queries.
struct CosineCeLoss {
  double loss = 0.0;
  std::vector<Vec> grad_prototypes;
  double grad_gamma = 0.0;
  /// Fraction of queries whose argmax matches the label.
  double accuracy = 0.0;
};
CosineCeLoss cosine_ce_loss(std::span<const Vec> queries, std::span<const int> labels,
                            std::span<const Vec> prototypes, double gamma);

/// Softmax over gamma-scaled cosines to each prototype.
Vec scaled_cosine_softmax(const Vec& query, std::span<const Vec> prototypes, double gamma);

}  // namespace protofuse

namespace protofuse {

/// Trainable temperature of the cosine classifier; kept strictly positive.
struct ScaleParam {
  static constexpr double kMin = 1e-3;
  double gamma = 10.0;

  void clamp() { gamma = gamma < kMin ? kMin : gamma; }
};

}  // namespace protofuse
