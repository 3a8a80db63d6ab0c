#include "protofuse/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

static_assert(std::endian::native == std::endian::little,
              "embedding files are little-endian; big-endian hosts need byte swapping");

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError(std::string("embeddings: truncated file while reading ") + what);
  return value;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

const std::vector<std::size_t> kNoRecords;
const std::vector<std::string> kNoClasses;

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::base: return "base";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "base" || text == "0") return Split::base;
  if (text == "val" || text == "1") return Split::val;
  if (text == "test" || text == "2") return Split::test;
  throw DataError("unknown split '" + std::string(text) + "'");
}

EmbeddingStore::EmbeddingStore(int dim, std::vector<Record> records)
    : dim_(dim), records_(std::move(records)) {
  if (dim_ < 1) throw DataError("embeddings: dim must be >= 1");
  if (records_.empty()) throw DataError("embeddings: no records");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.feature.size() != dim_) {
      throw DataError("embeddings: record " + std::to_string(i) + " has dimension " +
                      std::to_string(r.feature.size()) + ", expected " + std::to_string(dim_));
    }
    if (!r.feature.allFinite()) throw DataError("embeddings: non-finite feature in record " + std::to_string(i));
    auto& idx = index_[r.split];
    auto [it, inserted] = idx.members.try_emplace(r.class_id);
    if (inserted) idx.classes.push_back(r.class_id);
    it->second.push_back(i);
  }
}

const std::vector<std::string>& EmbeddingStore::classes_in(Split split) const {
  auto it = index_.find(split);
  return it == index_.end() ? kNoClasses : it->second.classes;
}

const std::vector<std::size_t>& EmbeddingStore::records_of(Split split,
                                                           const std::string& class_id) const {
  auto it = index_.find(split);
  if (it == index_.end()) return kNoRecords;
  auto m = it->second.members.find(class_id);
  return m == it->second.members.end() ? kNoRecords : m->second;
}

void EmbeddingStore::validate_against(const KnowledgeBase& kb) const {
  for (const auto& r : records_) {
    const auto k = kb.find_class(r.class_id);
    if (!k) throw DataError("embeddings: class '" + r.class_id + "' not in knowledge base");
    const bool base_class = kb.classes()[*k].base;
    if (r.split == Split::base && !base_class) {
      throw DataError("embeddings: base record under non-base class '" + r.class_id + "'");
    }
    if (r.split != Split::base && base_class) {
      throw DataError("embeddings: novel-split record under base class '" + r.class_id + "'");
    }
  }
}

EmbeddingStore read_embeddings_binary(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line) || header_line.empty()) {
    throw DataError("embeddings: no records");
  }
  int dim = 0;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(header_line);
    dim = header.at("dim").get<int>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("embeddings: bad header: ") + e.what());
  }
  if (count == 0) throw DataError("embeddings: no records");
  if (dim < 1) throw DataError("embeddings: dim must be >= 1");
  std::vector<Record> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(in, "class id length");
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw DataError("embeddings: truncated class id");
    const auto split_byte = read_pod<std::uint8_t>(in, "split");
    if (split_byte > 2) throw DataError("embeddings: invalid split byte " + std::to_string(split_byte));
    Vec feature(dim);
    in.read(reinterpret_cast<char*>(feature.data()), static_cast<std::streamsize>(sizeof(double) * dim));
    if (!in) throw DataError("embeddings: truncated feature in record " + std::to_string(i));
    records.push_back({std::move(feature), std::move(id), static_cast<Split>(split_byte)});
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("embeddings: trailing bytes after " + std::to_string(count) + " records");
  }
  return EmbeddingStore(dim, std::move(records));
}

void write_embeddings_binary(const EmbeddingStore& store, std::ostream& out) {
  nlohmann::json header{{"dim", store.dim()}, {"count", store.size()}};
  out << header.dump() << '\n';
  for (const auto& r : store.records()) {
    write_pod(out, static_cast<std::uint32_t>(r.class_id.size()));
    out.write(r.class_id.data(), static_cast<std::streamsize>(r.class_id.size()));
    write_pod(out, static_cast<std::uint8_t>(r.split));
    out.write(reinterpret_cast<const char*>(r.feature.data()),
              static_cast<std::streamsize>(sizeof(double) * r.feature.size()));
  }
}

EmbeddingStore read_embeddings_csv(std::istream& in) {
  std::vector<Record> records;
  int dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw DataError("embeddings csv: line " + std::to_string(line_no) + " too short");
    const int row_dim = static_cast<int>(cells.size()) - 2;
    if (dim < 0) dim = row_dim;
    if (row_dim != dim) {
      throw DataError("embeddings csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(row_dim) + " features, expected " + std::to_string(dim));
    }
    Vec feature(dim);
    for (int j = 0; j < dim; ++j) {
      try {
        std::size_t used = 0;
        feature[j] = std::stod(cells[static_cast<std::size_t>(j) + 2], &used);
      } catch (const std::exception&) {
        throw DataError("embeddings csv: bad number on line " + std::to_string(line_no));
      }
    }
    records.push_back({std::move(feature), cells[0], parse_split(cells[1])});
  }
  if (records.empty()) throw DataError("embeddings: no records");
  return EmbeddingStore(dim, std::move(records));
}

void write_embeddings_csv(const EmbeddingStore& store, std::ostream& out) {
  out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : store.records()) {
    if (r.class_id.find_first_of(",\n\r") != std::string::npos) {
      throw DataError("embeddings csv: class id '" + r.class_id + "' cannot be written as CSV");
    }
    out << r.class_id << ',' << to_string(r.split);
    for (double x : r.feature) out << ',' << x;
    out << '\n';
  }
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("embeddings: cannot open " + path.string());
  if (path.extension() == ".csv") return read_embeddings_csv(in);
  return read_embeddings_binary(in);
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("embeddings: cannot write " + path.string());
  if (path.extension() == ".csv") {
    write_embeddings_csv(store, out);
  } else {
    write_embeddings_binary(store, out);
  }
  if (!out) throw DataError("embeddings: write failed for " + path.string());
}

}  // namespace protofuse
