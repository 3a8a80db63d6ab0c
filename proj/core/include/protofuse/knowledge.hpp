#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

/// Primitive knowledge: which parts/attributes each class has, plus the
/// semantic embeddings of every class and attribute.
class KnowledgeBase {
 public:
  struct ClassEntry {
    std::string id;
    bool base = false;
    Vec embedding;
  };
  struct AttributeEntry {
    std::string id;
    Vec embedding;
  };
  /// Row per class, column per attribute; entries are 0 or 1.
  using Assoc = std::vector<std::vector<std::uint8_t>>;

  KnowledgeBase(int embedding_dim, std::vector<ClassEntry> classes,
                std::vector<AttributeEntry> attributes, Assoc assoc);

  int embedding_dim() const { return embedding_dim_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t num_attributes() const { return attributes_.size(); }

  const std::vector<ClassEntry>& classes() const { return classes_; }
  const std::vector<AttributeEntry>& attributes() const { return attributes_; }
  const Assoc& assoc() const { return assoc_; }

  bool associated(std::size_t cls, std::size_t attr) const { return assoc_[cls][attr] != 0; }

  /// Attribute indices with R = 1 for `cls`, ascending.
  std::vector<std::size_t> class_attributes(std::size_t cls) const;

  std::optional<std::size_t> find_class(std::string_view id) const;
  std::size_t class_index(std::string_view id) const;  // throws DataError when unknown

  /// Copy with a replacement association matrix (validated).
  KnowledgeBase with_assoc(Assoc assoc) const;

 private:
  void validate() const;

  int embedding_dim_;
  std::vector<ClassEntry> classes_;
  std::vector<AttributeEntry> attributes_;
  Assoc assoc_;
  std::unordered_map<std::string, std::size_t> class_lookup_;
};

KnowledgeBase knowledge_from_json(std::string_view text);
std::string knowledge_to_json(const KnowledgeBase& kb);
KnowledgeBase load_knowledge(const std::filesystem::path& path);
void save_knowledge(const KnowledgeBase& kb, const std::filesystem::path& path);

/// Seen attributes occur in at least one base class; everything else is unseen.
struct AttrSplit {
  std::vector<std::size_t> seen;
  std::vector<std::size_t> unseen;
  /// Attributes associated with no class at all (also listed in `unseen`).
  std::vector<std::size_t> vacuous;
  std::vector<bool> is_seen;
};

AttrSplit split_attributes(const KnowledgeBase& kb);

/// Flips every association entry independently with probability `gamma`.
KnowledgeBase inject_noise(const KnowledgeBase& kb, double gamma, Rng& rng);

}  // namespace protofuse
