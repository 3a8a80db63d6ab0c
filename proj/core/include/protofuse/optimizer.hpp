#pragma once

#include <span>
#include <string>
#include <vector>

namespace protofuse {

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  /// Epochs (or episodes) at which the learning rate is multiplied by `decay`.
  std::vector<int> milestones;
  double decay = 0.1;

  void validate() const;
};

/// Step-decayed learning rate at `epoch`.
double scheduled_learning_rate(const OptimizerConfig& cfg, int epoch);

/// SGD with momentum (v = mu v + g; p -= lr v) or Adam. Weight decay is an L2
/// term added to the gradient. State is allocated lazily on the first step
/// and bound to the block layout seen there.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  long steps() const { return steps_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  double lr_;
  long steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace protofuse
