#pragma once

#include <map>
#include <string>

#include "protofuse/embedding_store.hpp"
#include "protofuse/knowledge.hpp"

namespace protofuse {

/// Parameters of the attribute-compositional generator.
///
/// Each attribute owns a latent vector; a class center is the sum of its
/// attributes' latents plus a class-specific offset. Every sample drops each
/// attribute contribution independently with `incompleteness_rate`, so single
/// samples are incomplete views of their class. The offset is a shared vector
/// common to every class plus a class-specific part, mimicking the common
/// mean direction of nonnegative backbone features.
struct SyntheticSpec {
  int n_base_classes = 10;
  int n_novel_classes = 5;
  int n_attributes = 20;
  int attrs_per_class = 4;
  int dim = 32;
  int samples_per_class = 50;
  double attr_scale = 1.0;
  double class_offset_scale = 0.5;
  /// Scale of the offset component shared by all classes (0 disables it).
  double shared_offset_scale = 2.0;
  double sample_noise_scale = 3.0;
  double incompleteness_rate = 0.2;
  double semantic_noise_scale = 0.1;

  void validate() const;
};

struct SyntheticData {
  EmbeddingStore store;
  KnowledgeBase kb;
  /// Expected feature of each class: (1 - incompleteness) * sum of latents + offset.
  std::map<std::string, Vec> true_centers;
  /// Attribute latent vectors, indexed like kb.attributes().
  std::vector<Vec> attribute_latents;
};

/// Base classes go to the base split, novel classes to the test split.
/// When the attribute count allows it, some attributes are reserved for novel
/// classes only, so the unseen set is nonempty.
SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng);

}  // namespace protofuse
