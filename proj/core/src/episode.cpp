#include "protofuse/episode.hpp"

#include <stdexcept>

#include "protofuse/errors.hpp"

namespace protofuse {

Episode sample_episode(const EmbeddingStore& store, int n_way, int k_shot, int m_query,
                       Split split, Rng& rng) {
  if (n_way < 1 || k_shot < 1 || m_query < 0) {
    throw DataError("episode: need n_way >= 1, k_shot >= 1, m_query >= 0");
  }
  const std::size_t per_class = static_cast<std::size_t>(k_shot + m_query);
  std::vector<std::string> eligible;
  for (const auto& cls : store.classes_in(split)) {
    if (store.records_of(split, cls).size() >= per_class) eligible.push_back(cls);
  }
  if (eligible.size() < static_cast<std::size_t>(n_way)) {
    throw DataError("episode: split '" + std::string(to_string(split)) + "' has " +
                    std::to_string(eligible.size()) + " classes with >= " +
                    std::to_string(per_class) + " records, need " + std::to_string(n_way));
  }

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  const auto chosen = sample_without_replacement(eligible.size(), static_cast<std::size_t>(n_way), rng);
  for (int way = 0; way < n_way; ++way) {
    const auto& cls = eligible[chosen[static_cast<std::size_t>(way)]];
    ep.class_ids.push_back(cls);
    const auto& members = store.records_of(split, cls);
    const auto picks = sample_without_replacement(members.size(), per_class, rng);
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const std::size_t rec = members[picks[i]];
      if (i < static_cast<std::size_t>(k_shot)) {
        ep.support.push_back(store.records()[rec].feature);
        ep.support_labels.push_back(way);
        ep.support_records.push_back(rec);
      } else {
        ep.query.push_back(store.records()[rec].feature);
        ep.query_labels.push_back(way);
        ep.query_records.push_back(rec);
      }
    }
  }
  return ep;
}

Vec class_prototype(std::span<const Vec> features) {
  if (features.empty()) throw std::invalid_argument("class_prototype: empty feature list");
  Vec sum = Vec::Zero(features.front().size());
  for (const auto& f : features) {
    require_same_dim(f.size(), sum.size(), "class_prototype");
    sum += f;
  }
  return sum / static_cast<double>(features.size());
}

std::vector<Vec> support_prototypes(const Episode& episode) {
  std::vector<std::vector<Vec>> grouped(static_cast<std::size_t>(episode.n_way));
  for (std::size_t i = 0; i < episode.support.size(); ++i) {
    grouped[static_cast<std::size_t>(episode.support_labels[i])].push_back(episode.support[i]);
  }
  std::vector<Vec> out;
  out.reserve(grouped.size());
  for (const auto& g : grouped) out.push_back(class_prototype(g));
  return out;
}

std::map<std::string, Vec> class_means(const EmbeddingStore& store, Split split) {
  std::map<std::string, Vec> out;
  for (const auto& cls : store.classes_in(split)) {
    Vec sum = Vec::Zero(store.dim());
    const auto& members = store.records_of(split, cls);
    for (auto rec : members) sum += store.records()[rec].feature;
    out.emplace(cls, sum / static_cast<double>(members.size()));
  }
  return out;
}

DiagGaussian attribute_distribution(const EmbeddingStore& store, const KnowledgeBase& kb,
                                    std::size_t attribute) {
  if (attribute >= kb.num_attributes()) throw std::out_of_range("attribute_distribution: bad index");
  Vec sum = Vec::Zero(store.dim());
  std::size_t n = 0;
  for (const auto& cls : store.classes_in(Split::base)) {
    const auto k = kb.find_class(cls);
    if (!k || !kb.associated(*k, attribute)) continue;
    for (auto rec : store.records_of(Split::base, cls)) {
      sum += store.records()[rec].feature;
      ++n;
    }
  }
  if (n == 0) {
    throw DataError("attribute '" + kb.attributes()[attribute].id +
                    "' has no base samples; it is unseen");
  }
  const Vec mean = sum / static_cast<double>(n);
  Vec sq = Vec::Zero(store.dim());
  for (const auto& cls : store.classes_in(Split::base)) {
    const auto k = kb.find_class(cls);
    if (!k || !kb.associated(*k, attribute)) continue;
    for (auto rec : store.records_of(Split::base, cls)) {
      sq += (store.records()[rec].feature - mean).array().square().matrix();
    }
  }
  return DiagGaussian::from_variance(mean, sq / static_cast<double>(n));
}

std::vector<std::optional<DiagGaussian>> seen_attribute_distributions(const EmbeddingStore& store,
                                                                      const KnowledgeBase& kb) {
  const auto split = split_attributes(kb);
  std::vector<std::optional<DiagGaussian>> out(kb.num_attributes());
  for (auto a : split.seen) {
    // A seen attribute may still lack records if its base classes have no samples.
    bool has_records = false;
    for (std::size_t k = 0; k < kb.num_classes() && !has_records; ++k) {
      has_records = kb.classes()[k].base && kb.associated(k, a) &&
                    !store.records_of(Split::base, kb.classes()[k].id).empty();
    }
    if (has_records) out[a] = attribute_distribution(store, kb, a);
  }
  return out;
}

}  // namespace protofuse
