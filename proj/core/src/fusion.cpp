#include "protofuse/fusion.hpp"

#include <cmath>
#include <limits>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

void check_task(const TransductiveTask& task, std::span<const Vec> prototypes) {
  if (task.n_way < 1) throw std::invalid_argument("fusion: n_way must be >= 1");
  if (prototypes.size() != static_cast<std::size_t>(task.n_way)) {
    throw std::invalid_argument("fusion: need one prototype per class");
  }
  if (task.support.size() != task.support_labels.size()) {
    throw std::invalid_argument("fusion: support label count mismatch");
  }
  for (int y : task.support_labels) {
    if (y < 0 || y >= task.n_way) throw std::invalid_argument("fusion: support label out of range");
  }
}

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

void check_finite(std::span<const Vec> prototypes) {
  for (const auto& v : prototypes) {
    if (!all_finite(v)) throw NumericalError("fusion: non-finite prototype");
  }
}

std::vector<Vec> means_of(const std::vector<DiagGaussian>& dists) {
  std::vector<Vec> out;
  out.reserve(dists.size());
  for (const auto& g : dists) out.push_back(g.mean());
  return out;
}

}  // namespace

std::string to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::mean: return "mean";
    case FusionMethod::two_step: return "two_step";
    case FusionMethod::em: return "em";
    case FusionMethod::improved_em: return "improved_em";
  }
  return "?";
}

std::string to_string(FusionSetting setting) {
  return setting == FusionSetting::inductive ? "inductive" : "transductive";
}

FusionMethod parse_fusion_method(const std::string& name) {
  if (name == "mean") return FusionMethod::mean;
  if (name == "two_step") return FusionMethod::two_step;
  if (name == "em") return FusionMethod::em;
  if (name == "improved_em") return FusionMethod::improved_em;
  throw DataError("unknown fusion method '" + name + "'");
}

FusionSetting parse_fusion_setting(const std::string& name) {
  if (name == "inductive") return FusionSetting::inductive;
  if (name == "transductive") return FusionSetting::transductive;
  throw DataError("unknown fusion setting '" + name + "'");
}

void FusionConfig::validate() const {
  if (n_iter < 1) throw DataError("fusion: n_iter must be >= 1");
  if (!(em_sigma_init > 0.0)) throw DataError("fusion: em_sigma_init must be > 0");
  if (!(lambda > 0.0)) throw DataError("fusion: lambda must be > 0");
  if (em_max_iter < 1) throw DataError("fusion: em_max_iter must be >= 1");
  if (!(em_tol >= 0.0)) throw DataError("fusion: em_tol must be >= 0");
  if (setting == FusionSetting::inductive && method != FusionMethod::mean) {
    throw DataError("fusion: method '" + to_string(method) +
                    "' needs the query set; only 'mean' is allowed in the inductive setting");
  }
}

Mat soft_assign(const TransductiveTask& task, std::span<const Vec> prototypes, double lambda) {
  check_task(task, prototypes);
  check_finite(prototypes);
  const auto n_way = static_cast<Eigen::Index>(task.n_way);
  Mat weights = Mat::Zero(static_cast<Eigen::Index>(task.size()), n_way);
  for (std::size_t i = 0; i < task.support.size(); ++i) {
    weights(static_cast<Eigen::Index>(i), task.support_labels[i]) = 1.0;
  }
  Vec logits(n_way);
  for (std::size_t q = 0; q < task.query.size(); ++q) {
    for (Eigen::Index k = 0; k < n_way; ++k) {
      logits[k] = lambda * cosine_similarity(task.query[q], prototypes[static_cast<std::size_t>(k)]);
    }
    const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
    weights.row(static_cast<Eigen::Index>(task.support.size() + q)) = (e / e.sum()).transpose();
  }
  return weights;
}

std::vector<DiagGaussian> weighted_gaussian_fit(const TransductiveTask& task, const Mat& weights) {
  if (weights.rows() != static_cast<Eigen::Index>(task.size()) || weights.cols() != task.n_way) {
    throw std::invalid_argument("weighted_gaussian_fit: weight shape mismatch");
  }
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("weighted_gaussian_fit: negative weight");
  const Eigen::Index dim = task.feature(0).size();
  std::vector<DiagGaussian> out;
  out.reserve(static_cast<std::size_t>(task.n_way));
  for (Eigen::Index k = 0; k < weights.cols(); ++k) {
    const double total = weights.col(k).sum();
    if (!(total > 0.0)) {
      throw NumericalError("weighted_gaussian_fit: class " + std::to_string(k) + " has zero total weight");
    }
    Vec mean = Vec::Zero(dim);
    for (std::size_t i = 0; i < task.size(); ++i) mean += weights(static_cast<Eigen::Index>(i), k) * task.feature(i);
    mean /= total;
    Vec var = Vec::Zero(dim);
    for (std::size_t i = 0; i < task.size(); ++i) {
      var += weights(static_cast<Eigen::Index>(i), k) * (task.feature(i) - mean).array().square().matrix();
    }
    out.push_back(DiagGaussian::from_variance(std::move(mean), var / total));
  }
  return out;
}

std::vector<DiagGaussian> two_step_estimate(const TransductiveTask& task,
                                            std::span<const Vec> init_prototypes, double lambda) {
  return weighted_gaussian_fit(task, soft_assign(task, init_prototypes, lambda));
}

double em_log_likelihood(const TransductiveTask& task, std::span<const DiagGaussian> classes) {
  const auto n_way = static_cast<Eigen::Index>(classes.size());
  const double log_prior = -std::log(static_cast<double>(n_way));
  double total = 0.0;
  for (std::size_t i = 0; i < task.support.size(); ++i) {
    total += log_prior + gaussian_log_density(task.support[i], classes[static_cast<std::size_t>(task.support_labels[i])]);
  }
  Vec comp(n_way);
  for (const auto& x : task.query) {
    for (Eigen::Index k = 0; k < n_way; ++k) {
      comp[k] = log_prior + gaussian_log_density(x, classes[static_cast<std::size_t>(k)]);
    }
    total += log_sum_exp(comp);
  }
  return total;
}

EmTrace em_estimate(const TransductiveTask& task, std::span<const Vec> init_prototypes,
                    const FusionConfig& cfg) {
  check_task(task, init_prototypes);
  const auto n_way = static_cast<Eigen::Index>(task.n_way);
  EmTrace trace;
  for (const auto& p : init_prototypes) {
    trace.classes.emplace_back(p, Vec::Constant(p.size(), cfg.em_sigma_init));
  }
  trace.log_likelihood.push_back(em_log_likelihood(task, trace.classes));

  Mat resp = Mat::Zero(static_cast<Eigen::Index>(task.size()), n_way);
  for (std::size_t i = 0; i < task.support.size(); ++i) resp(static_cast<Eigen::Index>(i), task.support_labels[i]) = 1.0;
  Vec comp(n_way);
  for (int iter = 0; iter < cfg.em_max_iter; ++iter) {
    // E-step: uniform mixing weights cancel in the posterior.
    for (std::size_t q = 0; q < task.query.size(); ++q) {
      for (Eigen::Index k = 0; k < n_way; ++k) {
        comp[k] = gaussian_log_density(task.query[q], trace.classes[static_cast<std::size_t>(k)]);
      }
      const double lse = log_sum_exp(comp);
      resp.row(static_cast<Eigen::Index>(task.support.size() + q)) = (comp.array() - lse).exp().matrix().transpose();
    }
    // M-step.
    trace.classes = weighted_gaussian_fit(task, resp);
    const double ll = em_log_likelihood(task, trace.classes);
    if (!std::isfinite(ll)) throw NumericalError("em_estimate: non-finite log-likelihood");
    const double gain = ll - trace.log_likelihood.back();
    trace.log_likelihood.push_back(ll);
    trace.iterations = iter + 1;
    if (gain < cfg.em_tol) break;
  }
  return trace;
}

std::vector<DiagGaussian> improved_em_estimate(const TransductiveTask& task,
                                               std::span<const Vec> init_prototypes,
                                               const FusionConfig& cfg) {
  if (cfg.n_iter < 1) throw DataError("improved_em: n_iter must be >= 1");
  std::vector<Vec> prototypes(init_prototypes.begin(), init_prototypes.end());
  std::vector<DiagGaussian> estimate = two_step_estimate(task, prototypes, cfg.lambda);
  for (int iter = 1; iter < cfg.n_iter; ++iter) {
    auto next_means = means_of(estimate);
    double moved = 0.0;
    for (std::size_t k = 0; k < prototypes.size(); ++k) {
      moved = std::max(moved, (next_means[k] - prototypes[k]).lpNorm<Eigen::Infinity>());
    }
    if (moved < 1e-6) break;
    prototypes = std::move(next_means);
    estimate = two_step_estimate(task, prototypes, cfg.lambda);
  }
  return estimate;
}

Vec mean_fusion(const Vec& p, const Vec& p_hat) {
  require_same_dim(p.size(), p_hat.size(), "mean_fusion");
  return 0.5 * (p + p_hat);
}

GaussFusion gauss_fusion(const DiagGaussian& mean_chain, const DiagGaussian& completed_chain) {
  auto posterior = gaussian_product(mean_chain, completed_chain);
  Vec prototype = posterior.mean();
  return {std::move(prototype), std::move(posterior)};
}

PrototypeSet fuse(const TransductiveTask& task, std::span<const Vec> p, std::span<const Vec> p_hat,
                  const FusionConfig& cfg) {
  cfg.validate();
  if (p.size() != p_hat.size() || p.size() != static_cast<std::size_t>(task.n_way)) {
    throw std::invalid_argument("fuse: need one mean-based and one completed prototype per class");
  }
  PrototypeSet out;
  out.mean_based.assign(p.begin(), p.end());
  out.completed.assign(p_hat.begin(), p_hat.end());
  if (cfg.method == FusionMethod::mean) {
    for (std::size_t k = 0; k < p.size(); ++k) out.fused.push_back(mean_fusion(p[k], p_hat[k]));
    return out;
  }
  if (task.query.empty()) throw DataError("fuse: transductive fusion needs a nonempty query set");

  ClassDistEstimate est;
  switch (cfg.method) {
    case FusionMethod::two_step:
      est.mean_chain = two_step_estimate(task, p, cfg.lambda);
      est.completed_chain = two_step_estimate(task, p_hat, cfg.lambda);
      break;
    case FusionMethod::em:
      est.mean_chain = em_estimate(task, p, cfg).classes;
      est.completed_chain = em_estimate(task, p_hat, cfg).classes;
      break;
    case FusionMethod::improved_em:
      est.mean_chain = improved_em_estimate(task, p, cfg);
      est.completed_chain = improved_em_estimate(task, p_hat, cfg);
      break;
    case FusionMethod::mean:
      break;
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto fused = gauss_fusion(est.mean_chain[k], est.completed_chain[k]);
    out.fused.push_back(std::move(fused.prototype));
    out.fused_posterior.push_back(std::move(fused.posterior));
  }
  out.estimate = std::move(est);
  return out;
}

namespace {

// One soft-assignment round, kept for the backward pass.
struct Round {
  std::vector<Vec> prototypes;
  Mat weights;
  std::vector<Vec> means;
  std::vector<Vec> stds;
  Vec totals;
};

Round traced_round(const TransductiveTask& task, std::vector<Vec> prototypes, double lambda) {
  Round round;
  round.weights = soft_assign(task, prototypes, lambda);
  round.totals = round.weights.colwise().sum().transpose();
  for (const auto& g : weighted_gaussian_fit(task, round.weights)) {
    round.means.push_back(g.mean());
    round.stds.push_back(g.std());
  }
  round.prototypes = std::move(prototypes);
  return round;
}

// Same rounds and stopping rule as improved_em_estimate.
std::vector<Round> traced_chain(const TransductiveTask& task, std::span<const Vec> init, const FusionConfig& cfg,
                                int rounds) {
  std::vector<Round> trace;
  trace.push_back(traced_round(task, std::vector<Vec>(init.begin(), init.end()), cfg.lambda));
  for (int r = 1; r < rounds; ++r) {
    const Round& last = trace.back();
    double moved = 0.0;
    for (std::size_t k = 0; k < last.prototypes.size(); ++k) {
      moved = std::max(moved, (last.means[k] - last.prototypes[k]).lpNorm<Eigen::Infinity>());
    }
    if (moved < 1e-6) break;
    trace.push_back(traced_round(task, last.means, cfg.lambda));
  }
  return trace;
}

// Gradient with respect to the chain's initial prototypes.
std::vector<Vec> chain_backward(const TransductiveTask& task, const std::vector<Round>& trace,
                                std::vector<Vec> grad_mean, std::vector<Vec> grad_std, double lambda) {
  const std::size_t n_way = grad_mean.size();
  const std::size_t n_support = task.support.size();
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    const Round& round = *it;
    const auto n_rows = static_cast<Eigen::Index>(task.size());
    Mat grad_w = Mat::Zero(n_rows, static_cast<Eigen::Index>(n_way));
    for (std::size_t k = 0; k < n_way; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double total = round.totals[kk];
      const Vec& mu = round.means[k];
      const Vec& sd = round.stds[k];
      Vec grad_var = Vec::Zero(mu.size());
      if (!grad_std.empty()) {
        for (Eigen::Index j = 0; j < mu.size(); ++j) {
          // Floored dimensions are constant.
          if (sd[j] > kStdFloor) grad_var[j] = grad_std[k][j] / (2.0 * sd[j]);
        }
      }
      const Vec var = sd.array().square().matrix();
      for (std::size_t i = n_support; i < task.size(); ++i) {
        const Vec diff = task.feature(i) - mu;
        double g = grad_mean[k].dot(diff);
        g += grad_var.dot((diff.array().square().matrix() - var));
        grad_w(static_cast<Eigen::Index>(i), kk) = g / total;
      }
    }
    std::vector<Vec> grad_proto(n_way, Vec::Zero(grad_mean[0].size()));
    for (std::size_t q = 0; q < task.query.size(); ++q) {
      const auto row = static_cast<Eigen::Index>(n_support + q);
      const Vec w = round.weights.row(row).transpose();
      const Vec gw = grad_w.row(row).transpose();
      const double mix = w.dot(gw);
      const Vec& x = task.query[q];
      const double x_norm = x.norm();
      for (std::size_t k = 0; k < n_way; ++k) {
        const double g_cos = lambda * w[static_cast<Eigen::Index>(k)] * (gw[static_cast<Eigen::Index>(k)] - mix);
        if (g_cos == 0.0) continue;
        const Vec& pk = round.prototypes[k];
        const double p_norm = pk.norm();
        const double cos = x.dot(pk) / (x_norm * p_norm);
        grad_proto[k] += g_cos * (x / (x_norm * p_norm) - cos * pk / (p_norm * p_norm));
      }
    }
    grad_mean = std::move(grad_proto);
    grad_std.clear();
  }
  return grad_mean;
}

}  // namespace

std::vector<Vec> fuse_backward(const TransductiveTask& task, std::span<const Vec> /*p*/,
                               std::span<const Vec> p_hat, const FusionConfig& cfg,
                               const PrototypeSet& set, std::span<const Vec> grad_fused) {
  const std::size_t n_way = p_hat.size();
  if (grad_fused.size() != n_way) throw std::invalid_argument("fuse_backward: one gradient per class");
  std::vector<Vec> out;
  out.reserve(n_way);
  if (cfg.method == FusionMethod::mean) {
    for (const auto& g : grad_fused) out.push_back(0.5 * g);
    return out;
  }
  if (!set.estimate) throw std::invalid_argument("fuse_backward: prototype set has no chain estimate");
  const auto& est = *set.estimate;
  std::vector<Vec> grad_mu_hat, grad_sd_hat;
  for (std::size_t k = 0; k < n_way; ++k) {
    const Vec a = est.mean_chain[k].variance();
    const Vec b = est.completed_chain[k].variance();
    const Vec sum = a + b;
    grad_mu_hat.push_back(grad_fused[k].cwiseProduct(a.cwiseQuotient(sum)));
    // d fused / d b = a (mu - mu_hat) / (a + b)^2, and db/dsd = 2 sd.
    const Vec diff = est.mean_chain[k].mean() - est.completed_chain[k].mean();
    const Vec d_b = grad_fused[k].cwiseProduct(a.cwiseProduct(diff)).cwiseQuotient(sum.cwiseProduct(sum));
    grad_sd_hat.push_back(2.0 * d_b.cwiseProduct(est.completed_chain[k].std()));
  }
  if (cfg.method == FusionMethod::em) return grad_mu_hat;

  const int rounds = cfg.method == FusionMethod::two_step ? 1 : cfg.n_iter;
  const auto trace = traced_chain(task, p_hat, cfg, rounds);
  return chain_backward(task, trace, std::move(grad_mu_hat), std::move(grad_sd_hat), cfg.lambda);
}

}  // namespace protofuse
