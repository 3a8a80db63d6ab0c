#include "protofuse/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "protofuse/errors.hpp"

namespace protofuse {

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw DataError("unknown activation '" + name + "'");
}

void MlpGrads::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
  return *this;
}

std::vector<std::span<const double>> MlpGrads::views() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.emplace_back(weight[l].data(), static_cast<std::size_t>(weight[l].size()));
    out.emplace_back(bias[l].data(), static_cast<std::size_t>(bias[l].size()));
  }
  return out;
}

Mlp::Mlp(const std::vector<int>& dims, Activation hidden, Activation output, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("Mlp: layer dims must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index j = 0; j < in; ++j) {
      for (Eigen::Index i = 0; i < out; ++i) layer.weight(i, j) = limit * (2.0 * rng.uniform() - 1.0);
    }
    layer.bias = Vec::Zero(out);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("Mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw std::invalid_argument("Mlp: bias size does not match weight rows");
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw std::invalid_argument("Mlp: consecutive layer dims incompatible");
    }
  }
}

Mat Mlp::forward(const Mat& x, MlpTrace* trace) const {
  if (layers_.empty()) throw std::logic_error("Mlp: forward on empty network");
  require_same_dim(x.rows(), input_dim(), "mlp_forward");
  if (trace) {
    trace->inputs.clear();
    trace->pre_activations.clear();
  }
  Mat h = x;
  for (const auto& layer : layers_) {
    Mat pre = layer.weight * h;
    pre.colwise() += layer.bias;
    if (trace) {
      trace->inputs.push_back(std::move(h));
      trace->pre_activations.push_back(pre);
    }
    h = layer.activation == Activation::relu ? Mat(pre.cwiseMax(0.0)) : std::move(pre);
  }
  return h;
}

Vec Mlp::forward(const Vec& x) const {
  Mat out = forward(Mat(x), nullptr);
  return out.col(0);
}

Mat Mlp::backward(const MlpTrace& trace, const Mat& upstream, MlpGrads& grads) const {
  if (trace.empty()) throw std::logic_error("mlp_backward: backward called before forward");
  if (trace.inputs.size() != layers_.size()) throw std::logic_error("mlp_backward: trace/net mismatch");
  if (grads.weight.size() != layers_.size()) grads = zero_grads();
  Mat delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (layer.activation == Activation::relu) {
      delta = (trace.pre_activations[l].array() > 0.0).select(delta, 0.0);
    }
    grads.weight[l].noalias() += delta * trace.inputs[l].transpose();
    grads.bias[l] += delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Mat::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Vec::Zero(layer.bias.size()));
  }
  return g;
}

int Mlp::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> Mlp::dims() const {
  std::vector<int> out{input_dim()};
  for (const auto& layer : layers_) out.push_back(static_cast<int>(layer.weight.rows()));
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

std::vector<std::span<double>> Mlp::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return out;
}

double grad_check(std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> analytic,
                  const std::function<double()>& loss, double h, std::size_t max_per_block,
                  Rng* rng) {
  if (params.size() != analytic.size()) throw std::invalid_argument("grad_check: block count mismatch");
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto block = params[b];
    if (block.size() != analytic[b].size()) throw std::invalid_argument("grad_check: block size mismatch");
    std::vector<std::size_t> probe;
    if (max_per_block > 0 && block.size() > max_per_block) {
      if (!rng) throw std::invalid_argument("grad_check: sampling requires an rng");
      probe = sample_without_replacement(block.size(), max_per_block, *rng);
    } else {
      for (std::size_t i = 0; i < block.size(); ++i) probe.push_back(i);
    }
    for (auto i : probe) {
      const double saved = block[i];
      block[i] = saved + h;
      const double up = loss();
      block[i] = saved - h;
      const double down = loss();
      block[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[b][i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace protofuse
