#include <benchmark/benchmark.h>

#include "protofuse/fusion.hpp"
#include "protofuse/mlp.hpp"
#include "protofuse/synthetic.hpp"
#include "protofuse/workflow.hpp"

using namespace protofuse;

namespace {

Vec random_vec(int dim, Rng& rng, double scale = 1.0) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = scale * rng.normal();
  return v;
}

void BM_GaussianProduct(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(1);
  const DiagGaussian a(random_vec(dim, rng), random_vec(dim, rng).cwiseAbs());
  const DiagGaussian b(random_vec(dim, rng), random_vec(dim, rng).cwiseAbs());
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_product(a, b));
}
BENCHMARK(BM_GaussianProduct)->Arg(64)->Arg(640);

// 5-way 1-shot episode with 15 queries per class.
void BM_ImprovedEm(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(2);
  std::vector<Vec> support, query, centers;
  std::vector<int> labels;
  for (int k = 0; k < 5; ++k) centers.push_back(random_vec(dim, rng, 2.0));
  for (int k = 0; k < 5; ++k) {
    support.push_back(centers[k] + random_vec(dim, rng));
    labels.push_back(k);
    for (int i = 0; i < 15; ++i) query.push_back(centers[k] + random_vec(dim, rng));
  }
  const TransductiveTask task{support, labels, query, 5};
  std::vector<Vec> p_hat;
  for (const auto& s : support) p_hat.push_back(s + random_vec(dim, rng, 0.5));
  FusionConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fuse(task, support, p_hat, cfg));
}
BENCHMARK(BM_ImprovedEm)->Arg(64)->Arg(640);

void BM_Completion(benchmark::State& state) {
  Rng rng(3);
  auto data = generate_synthetic(SyntheticSpec{}, rng);
  PatNet pat(data.kb.embedding_dim(), data.store.dim(), rng);
  const auto priors = build_priors(data.store, data.kb, pat);
  ProtoComNet net(data.store.dim(), data.kb.embedding_dim(), rng);
  const auto& rec = data.store.records().front();
  const std::size_t cls = data.kb.class_index(rec.class_id);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        complete_prototype(net, rec.feature, cls, data.kb, priors, CompletionMode::infer, nullptr));
  }
}
BENCHMARK(BM_Completion);

void BM_MlpForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(4);
  Mlp mlp({64, 512, 64}, Activation::relu, Activation::identity, rng);
  Mat x(64, batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  MlpGrads grads = mlp.zero_grads();
  for (auto _ : state) {
    MlpTrace trace;
    const Mat y = mlp.forward(x, &trace);
    mlp.backward(trace, y, grads);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
