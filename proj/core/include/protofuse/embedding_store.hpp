#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/knowledge.hpp"
#include "protofuse/numeric.hpp"

namespace protofuse {

enum class Split : std::uint8_t { base = 0, val = 1, test = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Record {
  Vec feature;
  std::string class_id;
  Split split = Split::base;
};

/// Labeled feature vectors, indexed by split and class.
class EmbeddingStore {
 public:
  EmbeddingStore(int dim, std::vector<Record> records);

  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  /// Classes present in `split`, in order of first appearance.
  const std::vector<std::string>& classes_in(Split split) const;

  /// Record indices of `class_id` within `split` (empty when absent).
  const std::vector<std::size_t>& records_of(Split split, const std::string& class_id) const;

  /// Every class is known to `kb`, and base records belong to base classes only.
  void validate_against(const KnowledgeBase& kb) const;

 private:
  struct SplitIndex {
    std::vector<std::string> classes;
    std::map<std::string, std::vector<std::size_t>> members;
  };

  int dim_;
  std::vector<Record> records_;
  std::map<Split, SplitIndex> index_;
};

/// Binary layout: a JSON header line {"dim": d, "count": n}, then n records of
/// [u32 id length][id bytes][u8 split][d x f64], all little-endian.
EmbeddingStore read_embeddings_binary(std::istream& in);
void write_embeddings_binary(const EmbeddingStore& store, std::ostream& out);

/// CSV rows: class_id,split,f0,...,f(d-1). Split is base/val/test or 0/1/2.
EmbeddingStore read_embeddings_csv(std::istream& in);
void write_embeddings_csv(const EmbeddingStore& store, std::ostream& out);

/// Both dispatch on extension: ".csv" is CSV, anything else the binary format.
EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

}  // namespace protofuse
