#include "protofuse/protocomnet.hpp"

#include <cmath>
#include <map>

#include "protofuse/episode.hpp"
#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat aggregator_inputs(const ProtoComNet& net, const Vec& prototype, std::size_t cls,
                      const KnowledgeBase& kb, const std::vector<std::size_t>& attrs) {
  const int d = net.feature_dim();
  const int s = kb.embedding_dim();
  Mat in(d + 2 * s, static_cast<Eigen::Index>(attrs.size()));
  for (std::size_t j = 0; j < attrs.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    in.col(col).head(d) = prototype;
    in.col(col).segment(d, s) = kb.classes()[cls].embedding;
    in.col(col).tail(s) = kb.attributes()[attrs[j]].embedding;
  }
  return in;
}

void check_shapes(const ProtoComNet& net, const Vec& prototype, const KnowledgeBase& kb) {
  require_same_dim(prototype.size(), net.feature_dim(), "complete_prototype");
  require_same_dim(net.aggregator.input_dim(), net.feature_dim() + 2 * kb.embedding_dim(),
                   "complete_prototype (aggregator input vs semantic dim)");
}

}  // namespace

void AttrPriors::validate(const KnowledgeBase& kb, int feature_dim) const {
  if (seen.size() != kb.num_attributes() || inferred.size() != kb.num_attributes()) {
    throw DataError("priors: must cover every attribute of the knowledge base");
  }
  for (std::size_t a = 0; a < kb.num_attributes(); ++a) {
    if (inferred[a].dim() != feature_dim || (seen[a] && seen[a]->dim() != feature_dim)) {
      throw DataError("priors: dimension mismatch for attribute '" + kb.attributes()[a].id + "'");
    }
  }
}

ProtoComNet::ProtoComNet(int feature_dim, int semantic_dim, Rng& rng, int encoder_width,
                         int aggregator_hidden, int decoder_hidden)
    : encoder({feature_dim, encoder_width}, Activation::relu, Activation::relu, rng),
      aggregator({feature_dim + 2 * semantic_dim, aggregator_hidden, 1}, Activation::relu,
                 Activation::identity, rng),
      decoder({encoder_width, decoder_hidden, feature_dim}, Activation::relu, Activation::identity, rng) {}

std::vector<std::span<double>> ProtoComNet::parameters() {
  auto out = encoder.parameters();
  for (auto s : aggregator.parameters()) out.push_back(s);
  for (auto s : decoder.parameters()) out.push_back(s);
  return out;
}

ProtoComGrads ProtoComGrads::zeros_like(const ProtoComNet& net) {
  return {net.encoder.zero_grads(), net.aggregator.zero_grads(), net.decoder.zero_grads()};
}

void ProtoComGrads::set_zero() {
  encoder.set_zero();
  aggregator.set_zero();
  decoder.set_zero();
}

ProtoComGrads& ProtoComGrads::operator*=(double s) {
  encoder *= s;
  aggregator *= s;
  decoder *= s;
  return *this;
}

std::vector<std::span<const double>> ProtoComGrads::views() const {
  auto out = encoder.views();
  for (auto s : aggregator.views()) out.push_back(s);
  for (auto s : decoder.views()) out.push_back(s);
  return out;
}

Vec complete_prototype(const ProtoComNet& net, const Vec& prototype, std::size_t cls,
                       const KnowledgeBase& kb, const AttrPriors& priors, CompletionMode mode,
                       Rng* rng, CompletionTrace* trace) {
  check_shapes(net, prototype, kb);
  if (cls >= kb.num_classes()) throw DataError("complete_prototype: class index out of range");
  if (mode == CompletionMode::train && rng == nullptr) {
    throw std::invalid_argument("complete_prototype: train mode needs an rng");
  }
  const auto attrs = kb.class_attributes(cls);
  const auto n = static_cast<Eigen::Index>(attrs.size());

  Mat features(net.feature_dim(), n + 1);
  features.col(0) = prototype;
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t a = attrs[static_cast<std::size_t>(j)];
    if (a >= priors.inferred.size()) {
      throw DataError("complete_prototype: missing prior for attribute '" + kb.attributes()[a].id + "'");
    }
    if (mode == CompletionMode::infer) {
      features.col(j + 1) = priors.is_seen(a) ? priors.seen[a]->mean() : priors.inferred[a].mean();
    } else {
      const double r = rng->uniform();
      const DiagGaussian& dist = (priors.is_seen(a) && r < net.rho) ? *priors.seen[a] : priors.inferred[a];
      features.col(j + 1) = gaussian_sample(dist, *rng);
    }
  }

  MlpTrace enc_trace, agg_trace, dec_trace;
  const bool keep = trace != nullptr;
  Mat codes = net.encoder.forward(features, keep ? &enc_trace : nullptr);
  Vec alpha(n);
  Vec aggregate = codes.col(0);
  if (n > 0) {
    const Mat logits = net.aggregator.forward(aggregator_inputs(net, prototype, cls, kb, attrs),
                                              keep ? &agg_trace : nullptr);
    for (Eigen::Index j = 0; j < n; ++j) {
      alpha[j] = sigmoid(logits(0, j));
      aggregate += alpha[j] * codes.col(j + 1);
    }
  }
  Mat out = net.decoder.forward(Mat(aggregate), keep ? &dec_trace : nullptr);
  if (keep) {
    trace->encoder = std::move(enc_trace);
    trace->aggregator = std::move(agg_trace);
    trace->decoder = std::move(dec_trace);
    trace->codes = std::move(codes);
    trace->alpha = alpha;
    trace->attributes = attrs;
  }
  return out.col(0);
}

Vec attention_weights(const ProtoComNet& net, const Vec& prototype, std::size_t cls,
                      const KnowledgeBase& kb) {
  check_shapes(net, prototype, kb);
  Vec weights = Vec::Zero(static_cast<Eigen::Index>(kb.num_attributes()));
  const auto attrs = kb.class_attributes(cls);
  if (attrs.empty()) return weights;
  const Mat logits = net.aggregator.forward(aggregator_inputs(net, prototype, cls, kb, attrs));
  for (std::size_t j = 0; j < attrs.size(); ++j) {
    weights[static_cast<Eigen::Index>(attrs[j])] = sigmoid(logits(0, static_cast<Eigen::Index>(j)));
  }
  return weights;
}

void backward_completion(const ProtoComNet& net, const CompletionTrace& trace,
                         const Vec& grad_output, ProtoComGrads& grads) {
  if (trace.decoder.empty()) throw std::logic_error("backward_completion: no forward trace");
  if (grads.encoder.weight.empty()) grads = ProtoComGrads::zeros_like(net);
  const Vec d_aggregate = net.decoder.backward(trace.decoder, Mat(grad_output), grads.decoder).col(0);
  const auto n = static_cast<Eigen::Index>(trace.attributes.size());
  Mat d_codes(trace.codes.rows(), n + 1);
  d_codes.col(0) = d_aggregate;
  Mat d_logits(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double a = trace.alpha[j];
    d_codes.col(j + 1) = a * d_aggregate;
    d_logits(0, j) = d_aggregate.dot(trace.codes.col(j + 1)) * a * (1.0 - a);
  }
  net.encoder.backward(trace.encoder, d_codes, grads.encoder);
  if (n > 0) net.aggregator.backward(trace.aggregator, d_logits, grads.aggregator);
}

namespace {

struct BaseTaskSource {
  std::vector<std::string> classes;
  std::vector<std::size_t> kb_index;
  std::map<std::string, Vec> real;

  BaseTaskSource(const EmbeddingStore& store, const KnowledgeBase& kb, int k_shot) {
    if (k_shot < 1) throw DataError("protocomnet: k_shot must be >= 1");
    real = class_means(store, Split::base);
    for (const auto& cls : store.classes_in(Split::base)) {
      if (store.records_of(Split::base, cls).size() < static_cast<std::size_t>(k_shot)) {
        throw DataError("protocomnet: k_shot " + std::to_string(k_shot) + " exceeds size of class '" +
                        cls + "'");
      }
      classes.push_back(cls);
      kb_index.push_back(kb.class_index(cls));
    }
    if (classes.empty()) throw DataError("protocomnet: no base classes in the store");
  }

  // Picks a class and averages k random samples of it.
  std::size_t draw(const EmbeddingStore& store, int k_shot, Rng& rng, Vec& prototype) const {
    const std::size_t c = rng.uniform_index(classes.size());
    const auto& members = store.records_of(Split::base, classes[c]);
    prototype = Vec::Zero(store.dim());
    for (auto i : sample_without_replacement(members.size(), static_cast<std::size_t>(k_shot), rng)) {
      prototype += store.records()[members[i]].feature;
    }
    prototype /= static_cast<double>(k_shot);
    return c;
  }
};

}  // namespace

TrainingReport train_protocomnet(ProtoComNet& net, const EmbeddingStore& store,
                                 const KnowledgeBase& kb, const AttrPriors& priors, int k_shot,
                                 const ProtoComHyper& hyper, Rng& rng) {
  priors.validate(kb, net.feature_dim());
  const BaseTaskSource source(store, kb, k_shot);
  TrainingReport report;
  report.stage = "protocom";
  if (hyper.episodes <= 0) return report;

  const int batch = std::max(1, hyper.batch);
  Optimizer opt(hyper.optimizer);
  auto grads = ProtoComGrads::zeros_like(net);
  CompletionTrace trace;
  Vec prototype;
  int in_batch = 0;
  for (int episode = 0; episode < hyper.episodes; ++episode) {
    const std::size_t c = source.draw(store, k_shot, rng, prototype);
    const Vec completed = complete_prototype(net, prototype, source.kb_index[c], kb, priors,
                                             CompletionMode::train, &rng, &trace);
    const auto mse = mse_loss(completed, source.real.at(source.classes[c]));
    if (!std::isfinite(mse.loss)) {
      throw NumericalError("protocomnet: non-finite loss at episode " + std::to_string(episode));
    }
    report.losses.push_back(mse.loss);
    backward_completion(net, trace, mse.grad, grads);
    if (++in_batch == batch || episode + 1 == hyper.episodes) {
      grads *= 1.0 / in_batch;
      opt.set_learning_rate(scheduled_learning_rate(hyper.optimizer, episode));
      const auto views = grads.views();
      opt.step(net.parameters(), views);
      grads.set_zero();
      in_batch = 0;
    }
  }
  report.initial_loss = report.losses.front();
  report.final_loss = report.losses.back();
  return report;
}

CompletionQuality completion_quality(const ProtoComNet& net, const EmbeddingStore& store,
                                     const KnowledgeBase& kb, const AttrPriors& priors, int k_shot,
                                     int tasks, Rng& rng) {
  const BaseTaskSource source(store, kb, k_shot);
  CompletionQuality q;
  Vec prototype;
  for (int t = 0; t < tasks; ++t) {
    const std::size_t c = source.draw(store, k_shot, rng, prototype);
    const Vec& real = source.real.at(source.classes[c]);
    const Vec completed =
        complete_prototype(net, prototype, source.kb_index[c], kb, priors, CompletionMode::infer, nullptr);
    q.mean_based_cosine += cosine_similarity(prototype, real);
    q.completed_cosine += cosine_similarity(completed, real);
    q.completed_mse += mse_loss(completed, real).loss;
  }
  if (tasks > 0) {
    q.mean_based_cosine /= tasks;
    q.completed_cosine /= tasks;
    q.completed_mse /= tasks;
  }
  return q;
}

Checkpoint to_checkpoint(const ProtoComNet& net, const ScaleParam& scale) {
  return Checkpoint{"protocomnet",
                    {{"encoder", net.encoder}, {"aggregator", net.aggregator}, {"decoder", net.decoder}},
                    {{"rho", net.rho}, {"gamma", scale.gamma}}};
}

ProtoComNet protocomnet_from_checkpoint(const Checkpoint& ckpt, ScaleParam* scale) {
  if (ckpt.module != "protocomnet") {
    throw DataError("checkpoint module is '" + ckpt.module + "', expected 'protocomnet'");
  }
  ProtoComNet net;
  net.encoder = ckpt.network("encoder");
  net.aggregator = ckpt.network("aggregator");
  net.decoder = ckpt.network("decoder");
  net.rho = ckpt.scalar("rho");
  if (scale) scale->gamma = ckpt.scalar("gamma");
  if (net.decoder.input_dim() != net.encoder.output_dim() ||
      net.decoder.output_dim() != net.encoder.input_dim() || net.aggregator.output_dim() != 1 ||
      (net.aggregator.input_dim() - net.encoder.input_dim()) % 2 != 0) {
    throw DataError("protocomnet checkpoint: inconsistent network dims");
  }
  return net;
}

}  // namespace protofuse
