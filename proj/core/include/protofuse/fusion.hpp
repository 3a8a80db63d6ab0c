#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

enum class FusionMethod { mean, two_step, em, improved_em };
enum class FusionSetting { inductive, transductive };

std::string to_string(FusionMethod method);
std::string to_string(FusionSetting setting);
FusionMethod parse_fusion_method(const std::string& name);
FusionSetting parse_fusion_setting(const std::string& name);

struct FusionConfig {
  FusionMethod method = FusionMethod::improved_em;
  /// Temperature of the cosine soft assignment (fixed, not trained).
  double lambda = 10.0;
  int n_iter = 6;
  double em_sigma_init = 35.0;
  double em_tol = 1e-6;
  int em_max_iter = 100;
  FusionSetting setting = FusionSetting::transductive;

  /// Throws DataError on out-of-range values or a transductive method in the
  /// inductive setting.
  void validate() const;
};

/// Labeled support plus unlabeled query features of one episode.
/// Support labels are way indices in [0, n_way).
struct TransductiveTask {
  std::span<const Vec> support;
  std::span<const int> support_labels;
  std::span<const Vec> query;
  int n_way = 0;

  std::size_t size() const { return support.size() + query.size(); }
  const Vec& feature(std::size_t i) const {
    return i < support.size() ? support[i] : query[i - support.size()];
  }
};

/// Rows are samples (support first, then query), columns are classes. Support
/// rows are one-hot; query rows are a softmax over lambda-scaled cosines.
Mat soft_assign(const TransductiveTask& task, std::span<const Vec> prototypes, double lambda);

/// Per-class weighted mean and weighted population std. Each class column of
/// `weights` needs a positive sum.
std::vector<DiagGaussian> weighted_gaussian_fit(const TransductiveTask& task, const Mat& weights);

/// One cosine soft assignment followed by one weighted fit.
std::vector<DiagGaussian> two_step_estimate(const TransductiveTask& task,
                                            std::span<const Vec> init_prototypes, double lambda);

struct EmTrace {
  std::vector<DiagGaussian> classes;
  /// Log-likelihood of the initial parameters, then after every M-step.
  std::vector<double> log_likelihood;
  int iterations = 0;
};

/// Diagonal-GMM EM with uniform fixed mixing weights and one-hot support
/// responsibilities. Stops when the log-likelihood gain falls below em_tol
/// or after em_max_iter iterations.
EmTrace em_estimate(const TransductiveTask& task, std::span<const Vec> init_prototypes,
                    const FusionConfig& cfg);

/// Log-likelihood maximized by em_estimate: query samples under the uniform
/// mixture, support samples under their labeled component.
double em_log_likelihood(const TransductiveTask& task, std::span<const DiagGaussian> classes);

/// Repeats the two-step estimate n_iter times, feeding each round's means back
/// in as prototypes. Stops early once the means move less than 1e-6.
std::vector<DiagGaussian> improved_em_estimate(const TransductiveTask& task,
                                               std::span<const Vec> init_prototypes,
                                               const FusionConfig& cfg);

/// 0.5 (p + p_hat).
Vec mean_fusion(const Vec& p, const Vec& p_hat);

struct GaussFusion {
  Vec prototype;
  DiagGaussian posterior;
};

/// Product of the two chain distributions; its mean is the fused prototype.
GaussFusion gauss_fusion(const DiagGaussian& mean_chain, const DiagGaussian& completed_chain);

/// Both chains of the fusion parameters, one entry per class.
struct ClassDistEstimate {
  std::vector<DiagGaussian> mean_chain;
  std::vector<DiagGaussian> completed_chain;
};

struct PrototypeSet {
  std::vector<Vec> mean_based;
  std::vector<Vec> completed;
  std::vector<Vec> fused;
  /// Empty for method = mean.
  std::vector<DiagGaussian> fused_posterior;
  std::optional<ClassDistEstimate> estimate;
};

/// Runs the configured estimator from p and from p_hat and fuses per class.
PrototypeSet fuse(const TransductiveTask& task, std::span<const Vec> p, std::span<const Vec> p_hat,
                  const FusionConfig& cfg);

/// Gradient of a scalar loss with respect to the completed prototypes p_hat,
/// given its gradient with respect to the fused prototypes of `set` (the
/// output of fuse with the same arguments). Exact for mean, two_step and
/// improved_em: it differentiates through every soft-assignment round and the
/// Gaussian product. For em the chain statistics are held fixed and only the
/// product weight sigma^2 / (sigma^2 + sigma_hat^2) is applied.
std::vector<Vec> fuse_backward(const TransductiveTask& task, std::span<const Vec> p,
                               std::span<const Vec> p_hat, const FusionConfig& cfg,
                               const PrototypeSet& set, std::span<const Vec> grad_fused);

}  // namespace protofuse
