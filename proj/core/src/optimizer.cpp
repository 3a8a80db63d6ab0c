#include "protofuse/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "protofuse/errors.hpp"

namespace protofuse {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  throw DataError("unknown optimizer '" + name + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("optimizer: learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw DataError("optimizer: momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw DataError("optimizer: weight decay must be >= 0");
}

double scheduled_learning_rate(const OptimizerConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int m : cfg.milestones) {
    if (epoch >= m) lr *= cfg.decay;
  }
  return lr;
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)), lr_(cfg_.learning_rate) {
  cfg_.validate();
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer_step: block count mismatch");
  if (first_.empty()) {
    for (auto p : params) {
      first_.emplace_back(p.size(), 0.0);
      if (cfg_.kind == OptimizerKind::adam) second_.emplace_back(p.size(), 0.0);
    }
  }
  if (first_.size() != params.size()) throw std::invalid_argument("optimizer_step: layout changed");
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    if (p.size() != g.size() || p.size() != first_[b].size()) {
      throw std::invalid_argument("optimizer_step: shape mismatch");
    }
    auto& m = first_[b];
    if (cfg_.kind == OptimizerKind::sgd_momentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + cfg_.weight_decay * p[i];
        m[i] = cfg_.momentum * m[i] + gi;
        p[i] -= lr_ * m[i];
      }
    } else {
      auto& v = second_[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + cfg_.weight_decay * p[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
      }
    }
  }
}

}  // namespace protofuse
