#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

enum class Activation { relu, identity };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::identity;
};

/// Per-layer inputs and pre-activations of one forward pass. Columns are
/// batch items.
struct MlpTrace {
  std::vector<Mat> inputs;
  std::vector<Mat> pre_activations;
  bool empty() const { return inputs.empty(); }
};

/// Gradient accumulator shaped like an Mlp's parameters.
struct MlpGrads {
  std::vector<Mat> weight;
  std::vector<Vec> bias;

  void set_zero();
  MlpGrads& operator*=(double s);
  std::vector<std::span<const double>> views() const;
};

/// Feed-forward stack of affine layers, each followed by its activation.
class Mlp {
 public:
  Mlp() = default;

  /// dims = {in, hidden..., out}. Hidden layers use `hidden`, the last layer
  /// `output`. Weights ~ U(-sqrt(6/(fan_in+fan_out)), +...), biases zero.
  Mlp(const std::vector<int>& dims, Activation hidden, Activation output, Rng& rng);

  explicit Mlp(std::vector<DenseLayer> layers);

  /// Batched forward. Fills `trace` for a later backward when given.
  Mat forward(const Mat& x, MlpTrace* trace = nullptr) const;
  Vec forward(const Vec& x) const;

  /// Accumulates d(sum(output . upstream))/d(params) into `grads` and returns
  /// the gradient with respect to the input batch.
  Mat backward(const MlpTrace& trace, const Mat& upstream, MlpGrads& grads) const;

  MlpGrads zero_grads() const;

  int input_dim() const;
  int output_dim() const;
  std::vector<int> dims() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Mutable views over weights then bias, layer by layer.
  std::vector<std::span<double>> parameters();

 private:
  std::vector<DenseLayer> layers_;
};

/// Worst relative error |a - n| / max(|a| + |n|, 1e-6) between analytic
/// gradients and central differences of `loss` (step h). When `max_per_block`
/// is positive, only that many entries per parameter block are probed,
/// chosen by `rng`.
double grad_check(std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic,
                  const std::function<double()>& loss, double h = 1e-5,
                  std::size_t max_per_block = 0, Rng* rng = nullptr);

}  // namespace protofuse
