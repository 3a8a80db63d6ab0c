#include <cmath>
#include <sstream>

#include "protofuse/checkpoint.hpp"
#include "protofuse/errors.hpp"
#include "protofuse/losses.hpp"
#include "protofuse/mlp.hpp"
#include "protofuse/optimizer.hpp"
#include "protofuse/patnet.hpp"
#include "protofuse/protocomnet.hpp"
#include "protofuse/workflow.hpp"
#include "test_util.hpp"

using namespace protofuse;
using pf_test::vec;

namespace {

std::vector<std::vector<double>> snapshot(std::vector<std::span<double>> params) {
  std::vector<std::vector<double>> out;
  for (auto p : params) out.emplace_back(p.begin(), p.end());
  return out;
}

Mat column(const Vec& v) { return Mat(v); }

// Small trained-or-not fixture for the completion network.
struct CompletionFixture {
  SyntheticData data = pf_test::tiny_data(3);
  Rng rng{3};
  PatNet pat{data.kb.embedding_dim(), data.store.dim(), rng, 16};
  AttrPriors priors = build_priors(data.store, data.kb, pat);
  ProtoComNet net{data.store.dim(), data.kb.embedding_dim(), rng, 8, 7, 9};
};

}  // namespace

TEST(Mlp, ForwardHandCases) {
  DenseLayer id{Mat::Identity(3, 3), Vec::Zero(3), Activation::identity};
  Mlp identity({id});
  EXPECT_EQ(identity.forward(vec({1, -2, 3})), vec({1, -2, 3}));

  DenseLayer zero{Mat::Zero(2, 2), vec({-1, 2}), Activation::relu};
  EXPECT_EQ(Mlp({zero}).forward(vec({5, 5})), vec({0, 2}));

  Mat w(2, 2);
  w << 1, 2, 3, 4;
  EXPECT_EQ(Mlp({DenseLayer{w, Vec::Zero(2), Activation::identity}}).forward(vec({1, 1})), vec({3, 7}));

  EXPECT_THROW(identity.forward(vec({1, 2})), std::invalid_argument);
  DenseLayer wide{Mat::Zero(2, 5), Vec::Zero(2), Activation::identity};
  EXPECT_THROW(Mlp({id, wide}), std::invalid_argument);
}

TEST(Mlp, LinearBackwardIsOuterProduct) {
  Rng rng(1);
  Mlp net({3, 2}, Activation::identity, Activation::identity, rng);
  const Vec x = vec({1, -2, 0.5});
  const Vec up = vec({0.3, -1.1});
  MlpTrace trace;
  net.forward(column(x), &trace);
  auto grads = net.zero_grads();
  Mat dx = net.backward(trace, column(up), grads);
  EXPECT_LT((grads.weight[0] - up * x.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((grads.bias[0] - up).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((dx.col(0) - net.layers()[0].weight.transpose() * up).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mlp, ReluBlocksNegativeUnits) {
  Mat w(2, 1);
  w << 1, -1;
  Mlp net({DenseLayer{w, Vec::Zero(2), Activation::relu}});
  MlpTrace trace;
  net.forward(column(vec({2})), &trace);
  auto grads = net.zero_grads();
  net.backward(trace, column(vec({1, 1})), grads);
  EXPECT_EQ(grads.weight[0](0, 0), 2.0);
  EXPECT_EQ(grads.weight[0](1, 0), 0.0);
  EXPECT_EQ(grads.bias[0][1], 0.0);
}

TEST(Mlp, BackwardBeforeForward) {
  Rng rng(1);
  Mlp net({2, 2}, Activation::relu, Activation::identity, rng);
  auto grads = net.zero_grads();
  EXPECT_THROW(net.backward(MlpTrace{}, Mat::Ones(2, 1), grads), std::logic_error);
}

TEST(Mlp, ThreeLayerMatchesFiniteDifferences) {
  Rng rng(7);
  Mlp net({5, 8, 6, 3}, Activation::relu, Activation::identity, rng);
  for (auto& l : net.layers()) l.bias.setConstant(0.05);
  Mat x = Mat::Random(5, 4);
  Mat up = Mat::Random(3, 4);
  MlpTrace trace;
  net.forward(x, &trace);
  auto grads = net.zero_grads();
  net.backward(trace, up, grads);
  auto params = net.parameters();
  auto views = grads.views();
  const double err = grad_check(params, views, [&] { return (net.forward(x).array() * up.array()).sum(); });
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, LinearMse) {
  Rng rng(2);
  Mlp net({4, 3}, Activation::identity, Activation::identity, rng);
  const Vec x = vec({0.5, -1, 2, 0.1}), target = vec({1, 2, 3});
  MlpTrace trace;
  const Vec out = net.forward(column(x), &trace).col(0);
  auto grads = net.zero_grads();
  net.backward(trace, column(mse_loss(out, target).grad), grads);
  auto params = net.parameters();
  auto views = grads.views();
  EXPECT_LT(grad_check(params, views, [&] { return mse_loss(net.forward(x), target).loss; }), 1e-7);
}

TEST(GradCheck, ReluNetWithKlHead) {
  Rng rng(3);
  Mlp net({3, 6, 4}, Activation::relu, Activation::identity, rng);
  for (auto& l : net.layers()) l.bias.setConstant(0.1);
  const Vec x = vec({1, -0.5, 0.7});
  const DiagGaussian target(vec({0.5, -0.2}), vec({1.3, 0.6}));
  auto loss_of = [&](const Vec& out) { return kl_head_loss(out.head(2), out.tail(2), target); };
  MlpTrace trace;
  const Vec out = net.forward(column(x), &trace).col(0);
  auto kl = loss_of(out);
  Vec up(4);
  up << kl.grad_mean, kl.grad_logvar;
  auto grads = net.zero_grads();
  net.backward(trace, column(up), grads);
  auto params = net.parameters();
  auto views = grads.views();
  EXPECT_LT(grad_check(params, views, [&] { return loss_of(net.forward(x)).loss; }), 1e-4);
}

TEST(GradCheck, DeadReluLayerHasZeroGradient) {
  Rng rng(4);
  Mlp net({3, 5, 2}, Activation::relu, Activation::identity, rng);
  net.layers()[0].weight.setZero();
  net.layers()[0].bias.setConstant(-1.0);
  const Vec x = vec({1, 2, 3}), target = vec({1, -1});
  MlpTrace trace;
  const Vec out = net.forward(column(x), &trace).col(0);
  auto grads = net.zero_grads();
  net.backward(trace, column(mse_loss(out, target).grad), grads);
  EXPECT_EQ(grads.weight[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grads.bias[0].cwiseAbs().maxCoeff(), 0.0);
  auto params = net.parameters();
  auto views = grads.views();
  EXPECT_LT(grad_check(params, views, [&] { return mse_loss(net.forward(x), target).loss; }), 1e-4);
}

TEST(MseLoss, Values) {
  EXPECT_EQ(mse_loss(vec({1, 2}), vec({1, 2})).loss, 0.0);
  auto l = mse_loss(vec({0, 0}), vec({2, 0}));
  EXPECT_EQ(l.loss, 2.0);
  EXPECT_EQ(l.grad, vec({-2, 0}));
  Rng rng(5);
  const Vec a = pf_test::random_vec(9, rng), b = pf_test::random_vec(9, rng);
  double brute = 0;
  for (int i = 0; i < 9; ++i) brute += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(mse_loss(a, b).loss, brute / 9, 1e-12);
  EXPECT_THROW(mse_loss(vec({1}), vec({1, 2})), std::invalid_argument);
}

TEST(CosineCe, HandValues) {
  std::vector<Vec> protos = {vec({1, 0}), vec({0, 1})};
  std::vector<Vec> q = {vec({3, 0})};
  std::vector<int> y = {0};
  EXPECT_NEAR(cosine_ce_loss(q, y, protos, 10.0).loss, std::log1p(std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(std::log1p(std::exp(-10.0)), 4.54e-5, 1e-7);
  EXPECT_LT(cosine_ce_loss(q, y, protos, 200.0).loss, 1e-50);

  std::vector<Vec> same = {vec({1, 1}), vec({1, 1}), vec({1, 1})};
  std::vector<Vec> qs = {vec({0.3, 2}), vec({-1, 0.4})};
  std::vector<int> ys = {0, 2};
  EXPECT_NEAR(cosine_ce_loss(qs, ys, same, 7.0).loss, std::log(3.0), 1e-12);

  std::vector<Vec> zero = {vec({0, 0}), vec({0, 1})};
  EXPECT_THROW(cosine_ce_loss(q, y, zero, 10.0), std::invalid_argument);
  std::vector<Vec> one = {vec({1, 0})};
  EXPECT_THROW(cosine_ce_loss(q, y, one, 10.0), std::invalid_argument);
}

TEST(CosineCe, QueryRescaleInvariance) {
  Rng rng(6);
  std::vector<Vec> protos;
  for (int k = 0; k < 4; ++k) protos.push_back(pf_test::random_vec(5, rng));
  std::vector<Vec> q;
  std::vector<int> y;
  for (int i = 0; i < 8; ++i) {
    q.push_back(pf_test::random_vec(5, rng));
    y.push_back(i % 4);
  }
  const double base = cosine_ce_loss(q, y, protos, 12.0).loss;
  for (int i = 0; i < 8; ++i) {
    auto scaled = q;
    scaled[i] *= 0.001 + 50 * rng.uniform();
    EXPECT_NEAR(cosine_ce_loss(scaled, y, protos, 12.0).loss, base, 1e-10);
  }
}

TEST(CosineCe, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  std::vector<Vec> protos;
  for (int k = 0; k < 3; ++k) protos.push_back(pf_test::random_vec(4, rng));
  std::vector<Vec> q;
  std::vector<int> y;
  for (int i = 0; i < 6; ++i) {
    q.push_back(pf_test::random_vec(4, rng));
    y.push_back(i % 3);
  }
  double gamma = 8.0;
  auto res = cosine_ce_loss(q, y, protos, gamma);
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> analytic;
  for (int k = 0; k < 3; ++k) {
    params.emplace_back(protos[k].data(), 4);
    analytic.emplace_back(res.grad_prototypes[k].data(), 4);
  }
  params.emplace_back(&gamma, 1);
  analytic.emplace_back(&res.grad_gamma, 1);
  EXPECT_LT(grad_check(params, analytic, [&] { return cosine_ce_loss(q, y, protos, gamma).loss; }), 1e-6);
}

TEST(Softmax, SumsToOne) {
  std::vector<Vec> protos = {vec({1, 0}), vec({0.5, 2}), vec({-1, 1})};
  auto p = scaled_cosine_softmax(vec({0.2, 0.9}), protos, 10.0);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(Optimizer, PlainSgdStep) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.momentum = 0.0;
  Optimizer opt(cfg);
  std::vector<double> p = {1, 2}, g = {0.5, -1};
  std::vector<std::span<double>> ps = {std::span<double>(p)};
  std::vector<std::span<const double>> gs = {std::span<const double>(g)};
  opt.step(ps, gs);
  EXPECT_EQ(p, (std::vector<double>{0.5, 3}));
  std::vector<double> zero = {0, 0};
  std::vector<std::span<const double>> zs = {std::span<const double>(zero)};
  opt.step(ps, zs);
  EXPECT_EQ(p, (std::vector<double>{0.5, 3}));
}

TEST(Optimizer, MomentumSecondUpdate) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  Optimizer opt(cfg);
  std::vector<double> p = {0}, g = {2};
  std::vector<std::span<double>> ps = {std::span<double>(p)};
  std::vector<std::span<const double>> gs = {std::span<const double>(g)};
  opt.step(ps, gs);
  const double after_first = p[0];
  opt.step(ps, gs);
  EXPECT_NEAR(after_first - p[0], 1.9 * 0.1 * 2, 1e-15);
}

TEST(Optimizer, ValidationAndShapes) {
  OptimizerConfig bad;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), DataError);
  Optimizer opt(OptimizerConfig{});
  std::vector<double> p = {0, 0}, g = {1};
  std::vector<std::span<double>> ps = {std::span<double>(p)};
  std::vector<std::span<const double>> gs = {std::span<const double>(g)};
  EXPECT_THROW(opt.step(ps, gs), std::invalid_argument);
}

TEST(Optimizer, StepDecaySchedule) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.milestones = {10, 20};
  cfg.decay = 0.1;
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(cfg, 9), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(cfg, 10), 0.1);
  EXPECT_NEAR(scheduled_learning_rate(cfg, 25), 0.01, 1e-15);
}

TEST(Optimizer, SmallStepsDecreaseLossOnFixedBatch) {
  for (auto kind : {OptimizerKind::sgd_momentum, OptimizerKind::adam}) {
    Rng rng(10);
    Mlp net({4, 16, 3}, Activation::relu, Activation::identity, rng);
    Mat x = Mat::Random(4, 8), target = Mat::Random(3, 8);
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = 1e-3;
    Optimizer opt(cfg);
    auto loss = [&] { return 0.5 * (net.forward(x) - target).squaredNorm(); };
    double prev = loss();
    for (int step = 0; step < 8; ++step) {
      MlpTrace trace;
      Mat out = net.forward(x, &trace);
      auto grads = net.zero_grads();
      net.backward(trace, out - target, grads);
      auto views = grads.views();
      opt.step(net.parameters(), views);
      const double now = loss();
      EXPECT_LT(now, prev) << to_string(kind) << " step " << step;
      prev = now;
    }
  }
}

TEST(Checkpoint, StreamRoundTrip) {
  Rng rng(11);
  Checkpoint ckpt{"demo",
                  {{"a", Mlp({3, 4, 2}, Activation::relu, Activation::identity, rng)},
                   {"b", Mlp({2, 1}, Activation::identity, Activation::identity, rng)}},
                  {{"gamma", 12.5}}};
  std::stringstream buf;
  write_checkpoint(ckpt, buf);
  auto back = read_checkpoint(buf);
  EXPECT_EQ(back.module, "demo");
  EXPECT_EQ(back.scalar("gamma"), 12.5);
  ASSERT_EQ(back.networks.size(), 2u);
  for (std::size_t n = 0; n < 2; ++n) {
    const auto& l1 = ckpt.networks[n].second.layers();
    const auto& l2 = back.networks[n].second.layers();
    ASSERT_EQ(l1.size(), l2.size());
    for (std::size_t i = 0; i < l1.size(); ++i) {
      EXPECT_EQ(l1[i].weight, l2[i].weight);
      EXPECT_EQ(l1[i].bias, l2[i].bias);
      EXPECT_EQ(l1[i].activation, l2[i].activation);
    }
  }
  std::stringstream again;
  write_checkpoint(back, again);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Checkpoint, RejectsTruncationAndWrongModule) {
  Rng rng(12);
  PatNet pat(3, 2, rng, 4);
  std::stringstream buf;
  write_checkpoint(to_checkpoint(pat), buf);
  const std::string bytes = buf.str();
  std::istringstream cut(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(read_checkpoint(cut), DataError);
  std::istringstream full(bytes);
  auto ckpt = read_checkpoint(full);
  EXPECT_THROW(protocomnet_from_checkpoint(ckpt), DataError);
  auto back = patnet_from_checkpoint(ckpt);
  EXPECT_EQ(back.forward(vec({1, 2, 3})).mean(), pat.forward(vec({1, 2, 3})).mean());
}

TEST(PatNet, ForwardIsPositiveAndDeterministic) {
  Rng rng(13);
  PatNet net(4, 3, rng, 16);
  for (int t = 0; t < 50; ++t) {
    const Vec h = pf_test::random_vec(4, rng, 10.0);
    auto a = net.forward(h), b = net.forward(h);
    EXPECT_TRUE((a.std().array() > 0).all());
    EXPECT_EQ(a.mean(), b.mean());
    EXPECT_EQ(a.std(), b.std());
  }
  EXPECT_THROW(net.forward(vec({1, 2})), std::invalid_argument);
}

TEST(PatNet, KlGradientMatchesFiniteDifferences) {
  auto data = pf_test::tiny_data(4);
  Rng rng(4);
  PatNet net(data.kb.embedding_dim(), data.store.dim(), rng, 12);
  auto targets = seen_attribute_distributions(data.store, data.kb);
  PatNetGrads grads;
  patnet_loss(net, data.kb, targets, &grads);
  auto params = net.parameters();
  auto views = grads.views();
  EXPECT_LT(grad_check(params, views, [&] { return patnet_loss(net, data.kb, targets, nullptr); }), 1e-4);
}

TEST(PatNet, FitsSingleTarget) {
  std::vector<KnowledgeBase::ClassEntry> classes = {{"c", true, vec({1, 0})}};
  KnowledgeBase kb(2, classes, {{"a", vec({0.3, -0.8})}}, {{1}});
  std::vector<std::optional<DiagGaussian>> targets = {DiagGaussian(Vec::Zero(3), Vec::Ones(3))};
  Rng rng(14);
  PatNet net(2, 3, rng, 32);
  PatNetHyper hyper;
  hyper.epochs = 1500;
  auto report = train_patnet(net, kb, targets, hyper);
  EXPECT_LT(kl_divergence(net.forward(kb.attributes()[0].embedding), *targets[0]), 1e-2);
  EXPECT_LT(report.final_loss, report.initial_loss);
  ASSERT_EQ(report.losses.size(), 1500u);
  const std::size_t tail = report.losses.size() - report.losses.size() / 10;
  for (std::size_t i = tail + 1; i < report.losses.size(); ++i) {
    EXPECT_LE(report.losses[i], report.losses[i - 1] + 1e-9);
  }
}

TEST(PatNet, ZeroEpochsLeavesParameters) {
  auto data = pf_test::tiny_data(4);
  Rng rng(15);
  PatNet net(data.kb.embedding_dim(), data.store.dim(), rng, 8);
  const auto before = snapshot(net.parameters());
  PatNetHyper hyper;
  hyper.epochs = 0;
  auto report = train_patnet(net, data.kb, seen_attribute_distributions(data.store, data.kb), hyper);
  EXPECT_TRUE(report.empty());
  EXPECT_EQ(snapshot(net.parameters()), before);
  std::vector<std::optional<DiagGaussian>> none(data.kb.num_attributes());
  EXPECT_THROW(train_patnet(net, data.kb, none, hyper), DataError);
}

TEST(PatNet, IdenticalEmbeddingsShareThePrediction) {
  std::vector<KnowledgeBase::ClassEntry> classes = {{"c", true, vec({1, 0})}};
  KnowledgeBase kb(2, classes, {{"a", vec({0.3, -0.8})}, {"b", vec({0.3, -0.8})}}, {{1, 1}});
  std::vector<std::optional<DiagGaussian>> targets = {DiagGaussian(vec({0}), vec({1})),
                                                      DiagGaussian(vec({2}), vec({1}))};
  Rng rng(16);
  PatNet net(2, 1, rng, 16);
  PatNetHyper hyper;
  hyper.epochs = 800;
  auto report = train_patnet(net, kb, targets, hyper);
  auto dists = infer_distributions(net, kb);
  ASSERT_EQ(dists.size(), 2u);
  EXPECT_EQ(dists[0].mean(), dists[1].mean());
  EXPECT_EQ(dists[0].std(), dists[1].std());
  // The best single Gaussian for N(0,1) and N(2,1) is N(1,1) with mean KL 0.5.
  EXPECT_GE(report.final_loss, 0.5 - 1e-9);
  EXPECT_LT(report.final_loss, 0.51);
}

TEST(PatNet, InferenceCoversEveryAttribute) {
  auto data = pf_test::tiny_data(5);
  Rng rng(17);
  PatNet net(data.kb.embedding_dim(), data.store.dim(), rng, 8);
  auto dists = infer_distributions(net, data.kb);
  ASSERT_EQ(dists.size(), data.kb.num_attributes());
  for (const auto& d : dists) EXPECT_TRUE((d.std().array() > 0).all());
}

TEST(ProtoComNet, EmptyRowBypassesAttributes) {
  CompletionFixture f;
  auto assoc = f.data.kb.assoc();
  std::fill(assoc[0].begin(), assoc[0].end(), std::uint8_t{0});
  auto kb = f.data.kb.with_assoc(assoc);
  const Vec p = f.data.store.records()[0].feature;
  const Vec out = complete_prototype(f.net, p, 0, kb, f.priors, CompletionMode::infer, nullptr);
  const Vec direct = f.net.decoder.forward(f.net.encoder.forward(p));
  EXPECT_LT((out - direct).cwiseAbs().maxCoeff(), 1e-12);

  // Perturbing every prior leaves the masked class untouched.
  AttrPriors shifted = f.priors;
  for (auto& d : shifted.inferred) d = DiagGaussian((d.mean().array() + 5.0).matrix(), d.std());
  for (auto& d : shifted.seen) {
    if (d) d = DiagGaussian((d->mean().array() - 3.0).matrix(), d->std());
  }
  EXPECT_EQ(complete_prototype(f.net, p, 0, kb, shifted, CompletionMode::infer, nullptr), out);
}

TEST(ProtoComNet, AttentionMaskedByAssociation) {
  CompletionFixture f;
  const Vec p = f.data.store.records()[0].feature;
  for (std::size_t k = 0; k < f.data.kb.num_classes(); ++k) {
    const Vec alpha = attention_weights(f.net, p, k, f.data.kb);
    ASSERT_EQ(alpha.size(), static_cast<Eigen::Index>(f.data.kb.num_attributes()));
    for (std::size_t a = 0; a < f.data.kb.num_attributes(); ++a) {
      if (!f.data.kb.associated(k, a)) {
        EXPECT_EQ(alpha[a], 0.0);
      } else {
        EXPECT_GT(alpha[a], 0.0);
        EXPECT_LT(alpha[a], 1.0);
      }
    }
  }
}

TEST(ProtoComNet, Determinism) {
  CompletionFixture f;
  const Vec p = f.data.store.records()[3].feature;
  EXPECT_EQ(complete_prototype(f.net, p, 1, f.data.kb, f.priors, CompletionMode::infer, nullptr),
            complete_prototype(f.net, p, 1, f.data.kb, f.priors, CompletionMode::infer, nullptr));
  Rng a(5), b(5);
  const Vec ta = complete_prototype(f.net, p, 1, f.data.kb, f.priors, CompletionMode::train, &a);
  EXPECT_EQ(ta, complete_prototype(f.net, p, 1, f.data.kb, f.priors, CompletionMode::train, &b));
  EXPECT_EQ(ta.size(), p.size());
  EXPECT_TRUE(ta.allFinite());
  EXPECT_THROW(complete_prototype(f.net, p, 1, f.data.kb, f.priors, CompletionMode::train, nullptr),
               std::invalid_argument);
}

TEST(ProtoComNet, CompletionGradientMatchesFiniteDifferences) {
  CompletionFixture f;
  const Vec p = f.data.store.records()[0].feature;
  const std::size_t cls = f.data.kb.class_index(f.data.store.records()[0].class_id);
  Rng trng(21);
  const Vec target = pf_test::random_vec(f.data.store.dim(), trng);
  CompletionTrace trace;
  const Vec out = complete_prototype(f.net, p, cls, f.data.kb, f.priors, CompletionMode::infer, nullptr, &trace);
  auto grads = ProtoComGrads::zeros_like(f.net);
  backward_completion(f.net, trace, mse_loss(out, target).grad, grads);
  auto params = f.net.parameters();
  auto views = grads.views();
  const double err = grad_check(params, views, [&] {
    return mse_loss(complete_prototype(f.net, p, cls, f.data.kb, f.priors, CompletionMode::infer, nullptr),
                    target)
        .loss;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(ProtoComNet, ZeroEpisodesAndOversizedShots) {
  CompletionFixture f;
  const auto before = snapshot(f.net.parameters());
  ProtoComHyper hyper;
  hyper.episodes = 0;
  Rng rng(1);
  auto report = train_protocomnet(f.net, f.data.store, f.data.kb, f.priors, 1, hyper, rng);
  EXPECT_TRUE(report.empty());
  EXPECT_EQ(snapshot(f.net.parameters()), before);
  EXPECT_THROW(train_protocomnet(f.net, f.data.store, f.data.kb, f.priors, 1000, hyper, rng), DataError);
}

TEST(ProtoComNet, FullShotSingleClassLossFalls) {
  // Every record of one base class: p_k is the real prototype, so the only
  // loss left is the completion residual.
  auto data = pf_test::tiny_data(6);
  std::vector<Record> records;
  const std::string id = data.store.classes_in(Split::base)[0];
  for (auto r : data.store.records_of(Split::base, id)) records.push_back(data.store.records()[r]);
  const int k = static_cast<int>(records.size());
  EmbeddingStore store(data.store.dim(), std::move(records));
  Rng rng(6);
  PatNet pat(data.kb.embedding_dim(), store.dim(), rng, 8);
  auto priors = AttrPriors{seen_attribute_distributions(store, data.kb), infer_distributions(pat, data.kb)};
  ProtoComNet net(store.dim(), data.kb.embedding_dim(), rng, 16, 16, 16);
  ProtoComHyper hyper;
  hyper.episodes = 1500;
  hyper.optimizer.learning_rate = 0.01;
  auto report = train_protocomnet(net, store, data.kb, priors, k, hyper, rng);
  EXPECT_LT(report.losses.back(), 0.05 * report.losses.front());
}

TEST(ProtoComNet, CheckpointKeepsGamma) {
  CompletionFixture f;
  ScaleParam scale{13.25};
  std::stringstream buf;
  write_checkpoint(to_checkpoint(f.net, scale), buf);
  ScaleParam back;
  auto net = protocomnet_from_checkpoint(read_checkpoint(buf), &back);
  EXPECT_EQ(back.gamma, 13.25);
  const Vec p = f.data.store.records()[0].feature;
  EXPECT_EQ(complete_prototype(net, p, 0, f.data.kb, f.priors, CompletionMode::infer, nullptr),
            complete_prototype(f.net, p, 0, f.data.kb, f.priors, CompletionMode::infer, nullptr));
}

TEST(ProtoComNet, CompletionBeatsMeanOnHeldOutBaseTasks) {
  Rng gen(0);
  auto data = generate_synthetic(SyntheticSpec{}, gen);
  RunConfig cfg;
  cfg.patnet.epochs = 100;
  cfg.protocom.episodes = 2000;
  cfg.episode.k_shot = 1;
  auto pat = run_patnet_stage(data.store, data.kb, cfg);
  auto priors = build_priors(data.store, data.kb, pat.net);
  auto com = run_protocom_stage(data.store, data.kb, priors, cfg);
  Rng held(999);
  auto q = completion_quality(com.net, data.store, data.kb, priors, 1, 300, held);
  EXPECT_GT(q.completed_cosine, q.mean_based_cosine);
}
