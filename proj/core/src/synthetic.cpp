#include "protofuse/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

std::string indexed_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%02d", prefix, i);
  return buf;
}

Vec normal_vec(int dim, double scale, Rng& rng) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = scale * rng.normal();
  return v;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_base_classes < 1 || n_novel_classes < 1 || n_attributes < 1 || attrs_per_class < 1 ||
      dim < 1 || samples_per_class < 1) {
    throw DataError("synthetic: all counts must be >= 1");
  }
  if (attrs_per_class > n_attributes) throw DataError("synthetic: attrs_per_class exceeds n_attributes");
  if (!(attr_scale > 0.0) || !(class_offset_scale > 0.0) || !(sample_noise_scale > 0.0) ||
      !(semantic_noise_scale > 0.0) || !(shared_offset_scale >= 0.0)) {
    throw DataError("synthetic: scales must be > 0");
  }
  if (!(incompleteness_rate >= 0.0 && incompleteness_rate <= 1.0)) {
    throw DataError("synthetic: incompleteness_rate must lie in [0, 1]");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const int n_classes = spec.n_base_classes + spec.n_novel_classes;

  std::vector<Vec> latents;
  for (int a = 0; a < spec.n_attributes; ++a) latents.push_back(normal_vec(spec.dim, spec.attr_scale, rng));

  const Vec shared = normal_vec(spec.dim, spec.shared_offset_scale, rng);

  // Attributes [base_pool, n_attributes) never appear in base rows.
  int reserved = 0;
  if (spec.n_attributes > spec.attrs_per_class) {
    reserved = std::max(1, spec.n_attributes / 4);
    reserved = std::min(reserved, spec.n_attributes - spec.attrs_per_class);
  }
  const int base_pool = spec.n_attributes - reserved;

  KnowledgeBase::Assoc assoc(static_cast<std::size_t>(n_classes),
                             std::vector<std::uint8_t>(static_cast<std::size_t>(spec.n_attributes), 0));
  for (int k = 0; k < n_classes; ++k) {
    auto& row = assoc[static_cast<std::size_t>(k)];
    if (k < spec.n_base_classes) {
      for (auto a : sample_without_replacement(static_cast<std::size_t>(base_pool),
                                               static_cast<std::size_t>(spec.attrs_per_class), rng)) {
        row[a] = 1;
      }
    } else {
      int remaining = spec.attrs_per_class;
      if (reserved > 0) {
        const int novel_index = k - spec.n_base_classes;
        row[static_cast<std::size_t>(base_pool + novel_index % reserved)] = 1;
        --remaining;
      }
      std::vector<std::size_t> free;
      for (int a = 0; a < spec.n_attributes; ++a) {
        if (!row[static_cast<std::size_t>(a)]) free.push_back(static_cast<std::size_t>(a));
      }
      for (auto i : sample_without_replacement(free.size(), static_cast<std::size_t>(remaining), rng)) {
        row[free[i]] = 1;
      }
    }
  }

  std::vector<KnowledgeBase::AttributeEntry> attributes;
  for (int a = 0; a < spec.n_attributes; ++a) {
    attributes.push_back({indexed_id("attr", a),
                          latents[static_cast<std::size_t>(a)] +
                              normal_vec(spec.dim, spec.semantic_noise_scale, rng)});
  }

  std::vector<KnowledgeBase::ClassEntry> classes;
  std::vector<Record> records;
  std::map<std::string, Vec> centers;
  for (int k = 0; k < n_classes; ++k) {
    const bool base = k < spec.n_base_classes;
    const std::string id = base ? indexed_id("base", k) : indexed_id("novel", k - spec.n_base_classes);
    const auto& row = assoc[static_cast<std::size_t>(k)];

    Vec latent_sum = Vec::Zero(spec.dim);
    for (int a = 0; a < spec.n_attributes; ++a) {
      if (row[static_cast<std::size_t>(a)]) latent_sum += latents[static_cast<std::size_t>(a)];
    }
    const Vec offset = shared + normal_vec(spec.dim, spec.class_offset_scale, rng);
    centers.emplace(id, (1.0 - spec.incompleteness_rate) * latent_sum + offset);
    classes.push_back({id, base,
                       (latent_sum + offset) / spec.attrs_per_class +
                           normal_vec(spec.dim, spec.semantic_noise_scale, rng)});

    for (int s = 0; s < spec.samples_per_class; ++s) {
      Vec x = offset;
      for (int a = 0; a < spec.n_attributes; ++a) {
        if (!row[static_cast<std::size_t>(a)]) continue;
        if (rng.uniform() >= spec.incompleteness_rate) x += latents[static_cast<std::size_t>(a)];
      }
      x += normal_vec(spec.dim, spec.sample_noise_scale, rng);
      records.push_back({std::move(x), id, base ? Split::base : Split::test});
    }
  }

  return SyntheticData{EmbeddingStore(spec.dim, std::move(records)),
                       KnowledgeBase(spec.dim, std::move(classes), std::move(attributes), std::move(assoc)),
                       std::move(centers), std::move(latents)};
}

}  // namespace protofuse
