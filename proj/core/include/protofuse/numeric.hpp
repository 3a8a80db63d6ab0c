#pragma once

#include <Eigen/Core>

#include "protofuse/rng.hpp"

namespace protofuse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Every standard deviation is floored here on construction.
inline constexpr double kStdFloor = 1e-6;

/// Throws std::invalid_argument naming `what` when the dimensions differ.
void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what);

bool all_finite(const Vec& v);

/// Cosine of the angle between two nonzero vectors.
double cosine_similarity(const Vec& a, const Vec& b);

/// Gaussian with diagonal covariance, parameterized by per-dimension std.
class DiagGaussian {
 public:
  DiagGaussian(Vec mean, Vec std);

  static DiagGaussian from_variance(Vec mean, const Vec& variance);

  const Vec& mean() const { return mean_; }
  const Vec& std() const { return std_; }
  Vec variance() const { return std_.array().square().matrix(); }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Vec mean_;
  Vec std_;
};

/// Normalized pointwise product of two densities (the Bayesian posterior when
/// one is read as prior and the other as likelihood).
DiagGaussian gaussian_product(const DiagGaussian& a, const DiagGaussian& b);

/// KL(q || p), summed over dimensions.
double kl_divergence(const DiagGaussian& q, const DiagGaussian& p);

double gaussian_log_density(const Vec& x, const DiagGaussian& g);

Vec gaussian_sample(const DiagGaussian& g, Rng& rng);

}  // namespace protofuse
