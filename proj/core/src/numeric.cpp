#include "protofuse/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace protofuse {

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

bool all_finite(const Vec& v) { return v.allFinite(); }

double cosine_similarity(const Vec& a, const Vec& b) {
  require_same_dim(a.size(), b.size(), "cosine_similarity");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm input");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

DiagGaussian::DiagGaussian(Vec mean, Vec std) : mean_(std::move(mean)), std_(std::move(std)) {
  require_same_dim(mean_.size(), std_.size(), "DiagGaussian");
  if (mean_.size() == 0) throw std::invalid_argument("DiagGaussian: empty dimension");
  if (!mean_.allFinite() || !std_.allFinite()) {
    throw std::invalid_argument("DiagGaussian: non-finite parameter");
  }
  if ((std_.array() < 0.0).any()) throw std::invalid_argument("DiagGaussian: negative std");
  std_ = std_.cwiseMax(kStdFloor);
}

DiagGaussian DiagGaussian::from_variance(Vec mean, const Vec& variance) {
  return DiagGaussian(std::move(mean), variance.cwiseMax(0.0).cwiseSqrt());
}

DiagGaussian gaussian_product(const DiagGaussian& a, const DiagGaussian& b) {
  require_same_dim(a.dim(), b.dim(), "gaussian_product");
  const Eigen::ArrayXd va = a.variance().array();
  const Eigen::ArrayXd vb = b.variance().array();
  const Eigen::ArrayXd total = va + vb;
  Vec mean = ((vb * a.mean().array() + va * b.mean().array()) / total).matrix();
  Vec var = (va * vb / total).matrix();
  return DiagGaussian::from_variance(std::move(mean), var);
}

double kl_divergence(const DiagGaussian& q, const DiagGaussian& p) {
  require_same_dim(q.dim(), p.dim(), "kl_divergence");
  const Eigen::ArrayXd sq = q.std().array();
  const Eigen::ArrayXd sp = p.std().array();
  const Eigen::ArrayXd diff = q.mean().array() - p.mean().array();
  const Eigen::ArrayXd terms =
      (sp / sq).log() + (sq.square() + diff.square()) / (2.0 * sp.square()) - 0.5;
  return std::max(0.0, terms.sum());
}

double gaussian_log_density(const Vec& x, const DiagGaussian& g) {
  require_same_dim(x.size(), g.dim(), "gaussian_log_density");
  const Eigen::ArrayXd s = g.std().array();
  const Eigen::ArrayXd z = (x.array() - g.mean().array()) / s;
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - s.log().sum() - 0.5 * z.square().sum();
}

Vec gaussian_sample(const DiagGaussian& g, Rng& rng) {
  Vec out(g.dim());
  for (Eigen::Index i = 0; i < g.dim(); ++i) out[i] = g.mean()[i] + g.std()[i] * rng.normal();
  return out;
}

}  // namespace protofuse
