#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protofuse/embedding_store.hpp"
#include "protofuse/knowledge.hpp"
#include "protofuse/numeric.hpp"

namespace protofuse {

/// One N-way K-shot task. Labels are local way indices into `class_ids`.
struct Episode {
  int n_way = 0;
  int k_shot = 0;
  std::vector<std::string> class_ids;
  std::vector<Vec> support;
  std::vector<int> support_labels;
  std::vector<Vec> query;
  std::vector<int> query_labels;
  std::vector<std::size_t> support_records;
  std::vector<std::size_t> query_records;
};

/// Draws `n_way` classes from `split` (among those with at least k+m records),
/// then k support and m query records per class without replacement.
Episode sample_episode(const EmbeddingStore& store, int n_way, int k_shot, int m_query,
                       Split split, Rng& rng);

/// Arithmetic mean of equal-dimension features.
Vec class_prototype(std::span<const Vec> features);

/// Mean-based prototype of each way, from the support set.
std::vector<Vec> support_prototypes(const Episode& episode);

/// Mean feature of every class in `split` over all its records.
std::map<std::string, Vec> class_means(const EmbeddingStore& store, Split split);

/// Mean and population std over all base records whose class has the attribute.
/// Throws DataError for an attribute with no base members.
DiagGaussian attribute_distribution(const EmbeddingStore& store, const KnowledgeBase& kb,
                                    std::size_t attribute);

/// attribute_distribution for every seen attribute; nullopt for the rest.
std::vector<std::optional<DiagGaussian>> seen_attribute_distributions(const EmbeddingStore& store,
                                                                      const KnowledgeBase& kb);

}  // namespace protofuse
