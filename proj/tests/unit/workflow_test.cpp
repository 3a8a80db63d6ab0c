#include <cstdlib>

#include "protofuse/errors.hpp"
#include "protofuse/workflow.hpp"
#include "test_util.hpp"

using namespace protofuse;
using pf_test::vec;

namespace {

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) {
      ::setenv(name, value, 1);
    } else {
      ::unsetenv(name);
    }
  }
  ~ScopedEnv() {
    if (old_.empty()) {
      ::unsetenv(name_);
    } else {
      ::setenv(name_, old_.c_str(), 1);
    }
  }

 private:
  const char* name_;
  std::string old_;
};

RunConfig quick_config() {
  RunConfig cfg;
  cfg.patnet.epochs = 50;
  cfg.protocom.episodes = 200;
  cfg.finetune.episodes = 5;
  cfg.finetune.n_way = 3;
  cfg.finetune.m_query = 4;
  cfg.episode.n_episodes = 20;
  cfg.episode.m_query = 5;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST(RunConfig, JsonRoundTrip) {
  RunConfig cfg;
  cfg.seed = 77;
  cfg.paths.embeddings = "data/e.bin";
  cfg.fusion.method = FusionMethod::em;
  cfg.fusion.n_iter = 4;
  cfg.protocom_k_shot = 2;
  cfg.patnet.optimizer.milestones = {5, 9};
  cfg.finetune.gamma_learning_rate = 0.5;
  const std::string text = run_config_to_json(cfg);
  auto back = run_config_from_json(text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.paths.embeddings, cfg.paths.embeddings);
  EXPECT_EQ(back.fusion.method, FusionMethod::em);
  EXPECT_EQ(back.fusion.n_iter, 4);
  EXPECT_EQ(back.completion_shots(), 2);
  EXPECT_EQ(back.patnet.optimizer.milestones, (std::vector<int>{5, 9}));
  EXPECT_EQ(run_config_to_json(back), text);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(run_config_from_json(R"({"sed": 1})"), DataError);
  EXPECT_THROW(run_config_from_json(R"({"fusion": {"method": "median"}})"), DataError);
  EXPECT_THROW(run_config_from_json(R"({"episode": {"n_way": "five"}})"), DataError);
  EXPECT_THROW(run_config_from_json(R"({"episode": {"n_way": 0}})"), DataError);
  EXPECT_THROW(run_config_from_json(R"({"fusion": {"method": "em", "setting": "inductive"}})"), DataError);
  EXPECT_THROW(run_config_from_json("[1, 2"), DataError);
  auto partial = run_config_from_json(R"({"seed": 3, "fusion": {"n_iter": 2}})");
  EXPECT_EQ(partial.seed, 3u);
  EXPECT_EQ(partial.fusion.n_iter, 2);
  EXPECT_EQ(partial.fusion.method, FusionMethod::improved_em);
}

TEST(RunConfig, SeedFromEnvironment) {
  RunConfig cfg;
  {
    ScopedEnv env("PROTOFUSE_SEED", "1234");
    apply_seed_env(cfg);
    EXPECT_EQ(cfg.seed, 1234u);
  }
  {
    ScopedEnv env("PROTOFUSE_SEED", "12x");
    EXPECT_THROW(apply_seed_env(cfg), DataError);
  }
  {
    ScopedEnv env("PROTOFUSE_SEED", "-5");
    EXPECT_THROW(apply_seed_env(cfg), DataError);
  }
  {
    ScopedEnv env("PROTOFUSE_SEED", nullptr);
    cfg.seed = 9;
    apply_seed_env(cfg);
    EXPECT_EQ(cfg.seed, 9u);
  }
}

TEST(Centers, JsonRoundTrip) {
  std::map<std::string, Vec> centers = {{"a", vec({1.5, -2})}, {"b", vec({0.1, 1e-17})}};
  auto back = centers_from_json(centers_to_json(centers));
  EXPECT_EQ(back, centers);
  EXPECT_THROW(centers_from_json("[1]"), DataError);
}

TEST(Workflow, TrainingIsSeedDeterministic) {
  auto data = pf_test::tiny_data(9);
  auto cfg = quick_config();
  auto a = train_all(data.store, data.kb, cfg);
  auto b = train_all(data.store, data.kb, cfg);
  EXPECT_EQ(a.scale.gamma, b.scale.gamma);
  auto ra = evaluate_model(a, data.store, data.kb, cfg, &data.true_centers);
  auto rb = evaluate_model(b, data.store, data.kb, cfg, &data.true_centers);
  EXPECT_EQ(eval_report_to_json(ra), eval_report_to_json(rb));
  cfg.seed = 1;
  auto c = train_all(data.store, data.kb, cfg);
  EXPECT_NE(eval_report_to_json(evaluate_model(c, data.store, data.kb, cfg)), eval_report_to_json(ra));
}

TEST(Workflow, PatNetStageLowersKl) {
  auto data = pf_test::tiny_data(10);
  auto cfg = quick_config();
  auto stage = run_patnet_stage(data.store, data.kb, cfg);
  EXPECT_LT(stage.report.final_loss, stage.report.initial_loss);
}

TEST(Workflow, NoiseSweepAtZeroMatchesEvaluation) {
  auto data = pf_test::tiny_data(11);
  auto cfg = quick_config();
  auto rows = noise_sweep(data.store, data.kb, cfg, {0.0});
  ASSERT_EQ(rows.size(), 1u);
  auto model = train_all(data.store, data.kb, cfg);
  auto report = evaluate_model(model, data.store, data.kb, cfg);
  EXPECT_EQ(rows[0].gauss.per_episode, report.fused.per_episode);
  EXPECT_EQ(rows[0].none.per_episode, report.completed.per_episode);
  EXPECT_THROW(noise_sweep(data.store, data.kb, cfg, {}), DataError);
  EXPECT_THROW(noise_sweep(data.store, data.kb, cfg, {1.2}), DataError);
  EXPECT_FALSE(format_noise_table(rows).empty());
}

TEST(Workflow, FinetuningKeepsNovelAccuracy) {
  Rng gen(Rng(0).split(rng_tag::synthetic));
  auto data = generate_synthetic(SyntheticSpec{}, gen);
  RunConfig cfg;
  cfg.patnet.epochs = 200;
  cfg.episode.n_episodes = 200;
  cfg.threads = 1;
  auto pat = run_patnet_stage(data.store, data.kb, cfg);
  auto priors = build_priors(data.store, data.kb, pat.net);
  auto com = run_protocom_stage(data.store, data.kb, priors, cfg);
  auto tuned = run_finetune_stage(data.store, data.kb, priors, com, cfg);
  TrainedModel before{pat.net, priors, com.net, com.scale};
  TrainedModel after{pat.net, priors, tuned.net, tuned.scale};
  const double pre = evaluate_model(before, data.store, data.kb, cfg).fused.mean;
  const double post = evaluate_model(after, data.store, data.kb, cfg).fused.mean;
  EXPECT_GE(post, pre - 0.01) << "pre " << pre << " post " << post;
}

TEST(Workflow, UnseenAttributeTransfer) {
  // Low-dimensional generator with many seen attributes, so the transfer
  // network sees enough of the semantic space to extrapolate.
  SyntheticSpec spec;
  spec.dim = 8;
  spec.n_attributes = 40;
  spec.attrs_per_class = 3;
  spec.n_base_classes = 60;
  spec.n_novel_classes = 10;
  spec.samples_per_class = 30;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto data = generate_synthetic(spec, rng);
    auto seen = seen_attribute_distributions(data.store, data.kb);
    Rng init(100 + seed);
    PatNet net(data.kb.embedding_dim(), spec.dim, init, 64);
    PatNetHyper hyper;
    hyper.epochs = 300;
    hyper.optimizer.milestones = {150};
    train_patnet(net, data.kb, seen, hyper);
    auto inferred = infer_distributions(net, data.kb);
    // An attribute's contribution is its offset from the average attribute.
    Vec baseline = Vec::Zero(spec.dim);
    int n_seen = 0;
    for (const auto& d : seen) {
      if (d) {
        baseline += d->mean();
        ++n_seen;
      }
    }
    baseline /= n_seen;
    double cos = 0;
    int n_unseen = 0;
    for (std::size_t a = 0; a < seen.size(); ++a) {
      if (seen[a]) continue;
      cos += cosine_similarity(inferred[a].mean() - baseline, data.attribute_latents[a]);
      ++n_unseen;
    }
    ASSERT_GT(n_unseen, 0);
    total += cos / n_unseen;
  }
  EXPECT_GT(total / 20, 0.5);
}
