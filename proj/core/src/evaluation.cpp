#include "protofuse/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "protofuse/errors.hpp"
#include "protofuse/losses.hpp"

namespace protofuse {

Vec classify(const Vec& query, std::span<const Vec> prototypes, double gamma) {
  if (prototypes.empty()) throw std::invalid_argument("classify: no prototypes");
  return scaled_cosine_softmax(query, prototypes, gamma);
}

std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

PrototypeSet episode_prototypes(const Pipeline& pipeline, const Episode& episode) {
  const auto p = support_prototypes(episode);
  std::vector<Vec> p_hat;
  if (pipeline.net) {
    if (!pipeline.kb || !pipeline.priors) throw std::invalid_argument("pipeline: network without knowledge");
    p_hat.reserve(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      p_hat.push_back(complete_prototype(*pipeline.net, p[k], pipeline.kb->class_index(episode.class_ids[k]),
                                         *pipeline.kb, *pipeline.priors, CompletionMode::infer, nullptr));
    }
  } else {
    p_hat = p;
  }
  const bool transductive = pipeline.fusion.setting == FusionSetting::transductive;
  const std::span<const Vec> query = transductive ? std::span<const Vec>(episode.query) : std::span<const Vec>();
  const TransductiveTask task{episode.support, episode.support_labels, query, episode.n_way};
  return fuse(task, p, p_hat, pipeline.fusion);
}

AccuracySummary summarize(std::vector<double> per_episode) {
  AccuracySummary s;
  const auto n = static_cast<double>(per_episode.size());
  if (per_episode.empty()) return s;
  for (double a : per_episode) s.mean += a;
  s.mean /= n;
  if (per_episode.size() > 1) {
    double ss = 0.0;
    for (double a : per_episode) ss += (a - s.mean) * (a - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  s.per_episode = std::move(per_episode);
  return s;
}

Fidelity prototype_fidelity(std::span<const PrototypeSet> sets,
                            std::span<const std::vector<std::string>> class_ids,
                            const std::map<std::string, Vec>& centers) {
  if (sets.size() != class_ids.size()) throw std::invalid_argument("prototype_fidelity: size mismatch");
  Fidelity f;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t k = 0; k < class_ids[i].size(); ++k) {
      const auto it = centers.find(class_ids[i][k]);
      if (it == centers.end()) throw DataError("no true center for class '" + class_ids[i][k] + "'");
      f.mean_based += cosine_similarity(sets[i].mean_based[k], it->second);
      f.completed += cosine_similarity(sets[i].completed[k], it->second);
      f.fused += cosine_similarity(sets[i].fused[k], it->second);
      ++count;
    }
  }
  if (count > 0) {
    f.mean_based /= static_cast<double>(count);
    f.completed /= static_cast<double>(count);
    f.fused /= static_cast<double>(count);
  }
  return f;
}

namespace {

struct EpisodeResult {
  double mean_based = 0.0;
  double completed = 0.0;
  double fused = 0.0;
  Fidelity fidelity;
};

double accuracy_of(const Episode& episode, std::span<const Vec> prototypes, double gamma) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    if (static_cast<int>(argmax(classify(episode.query[q], prototypes, gamma))) == episode.query_labels[q]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(episode.query.size());
}

EpisodeResult run_episode(const Pipeline& pipeline, const EmbeddingStore& store, const EpisodeShape& shape,
                          Rng rng, const std::map<std::string, Vec>* centers) {
  const auto episode = sample_episode(store, shape.n_way, shape.k_shot, shape.m_query, shape.split, rng);
  const auto set = episode_prototypes(pipeline, episode);
  EpisodeResult r;
  r.mean_based = accuracy_of(episode, set.mean_based, pipeline.gamma);
  r.completed = accuracy_of(episode, set.completed, pipeline.gamma);
  r.fused = accuracy_of(episode, set.fused, pipeline.gamma);
  if (centers) {
    r.fidelity = prototype_fidelity(std::span(&set, 1), std::span(&episode.class_ids, 1), *centers);
  }
  return r;
}

}  // namespace

EvalReport evaluate(const Pipeline& pipeline, const EmbeddingStore& store, const EpisodeShape& shape,
                    const Rng& rng, const std::map<std::string, Vec>* centers, int threads) {
  pipeline.fusion.validate();
  if (shape.n_episodes < 1) throw DataError("evaluate: n_episodes must be >= 1");
  if (shape.n_way < 1 || shape.k_shot < 1 || shape.m_query < 1) {
    throw DataError("evaluate: n_way, k_shot and m_query must be >= 1");
  }
  const auto n = static_cast<std::size_t>(shape.n_episodes);
  std::vector<EpisodeResult> results(n);

  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run_episode(pipeline, store, shape, rng.split(i), centers);
      } catch (...) {
        const std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  report.shape = shape;
  report.fusion = pipeline.fusion;
  std::vector<double> mean_based, completed, fused;
  for (const auto& r : results) {
    mean_based.push_back(r.mean_based);
    completed.push_back(r.completed);
    fused.push_back(r.fused);
  }
  report.mean_based = summarize(std::move(mean_based));
  report.completed = summarize(std::move(completed));
  report.fused = summarize(std::move(fused));
  if (centers) {
    Fidelity total;
    for (const auto& r : results) {
      total.mean_based += r.fidelity.mean_based;
      total.completed += r.fidelity.completed;
      total.fused += r.fidelity.fused;
      report.episode_fidelity.push_back(r.fidelity);
    }
    total.mean_based /= static_cast<double>(n);
    total.completed /= static_cast<double>(n);
    total.fused /= static_cast<double>(n);
    report.fidelity = total;
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& report, bool per_episode) {
  using nlohmann::json;
  auto summary = [&](const AccuracySummary& s) {
    json j{{"mean_accuracy", s.mean}, {"ci95_halfwidth", s.ci95}};
    if (per_episode) j["per_episode"] = s.per_episode;
    return j;
  };
  json j;
  j["n_episodes"] = report.shape.n_episodes;
  j["n_way"] = report.shape.n_way;
  j["k_shot"] = report.shape.k_shot;
  j["m_query"] = report.shape.m_query;
  j["split"] = std::string(to_string(report.shape.split));
  j["fusion"] = {{"method", to_string(report.fusion.method)}, {"setting", to_string(report.fusion.setting)}};
  j["mean_accuracy"] = report.fused.mean;
  j["ci95_halfwidth"] = report.fused.ci95;
  j["prototypes"] = {{"mean_based", summary(report.mean_based)},
                     {"completed", summary(report.completed)},
                     {"fused", summary(report.fused)}};
  if (report.fidelity) {
    j["fidelity"] = {{"mean_based", report.fidelity->mean_based},
                     {"completed", report.fidelity->completed},
                     {"fused", report.fidelity->fused}};
  }
  return j.dump(2) + "\n";
}

std::string format_eval_table(const EvalReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%d-way %d-shot, %d episodes, fusion %s (%s)\n", report.shape.n_way,
                report.shape.k_shot, report.shape.n_episodes, to_string(report.fusion.method).c_str(),
                to_string(report.fusion.setting).c_str());
  out += line;
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s\n", "prototype", "accuracy", "ci95", "fidelity");
  out += line;
  auto row = [&](const char* name, const AccuracySummary& s, std::optional<double> fid) {
    if (fid) {
      std::snprintf(line, sizeof line, "%-12s %9.2f%% %9.2f%% %10.4f\n", name, 100 * s.mean, 100 * s.ci95, *fid);
    } else {
      std::snprintf(line, sizeof line, "%-12s %9.2f%% %9.2f%% %10s\n", name, 100 * s.mean, 100 * s.ci95, "-");
    }
    out += line;
  };
  const auto& f = report.fidelity;
  row("mean-based", report.mean_based, f ? std::optional(f->mean_based) : std::nullopt);
  row("completed", report.completed, f ? std::optional(f->completed) : std::nullopt);
  row("fused", report.fused, f ? std::optional(f->fused) : std::nullopt);
  return out;
}

}  // namespace protofuse
