#include "protofuse/knowledge.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "protofuse/errors.hpp"

namespace protofuse {
namespace {

using nlohmann::json;

Vec parse_embedding(const json& node, const std::string& owner) {
  if (!node.is_array()) throw DataError("knowledge: embedding of '" + owner + "' is not an array");
  Vec v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (!node[i].is_number()) {
      throw DataError("knowledge: non-numeric embedding entry for '" + owner + "'");
    }
    v[static_cast<Eigen::Index>(i)] = node[i].get<double>();
  }
  return v;
}

json embedding_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

KnowledgeBase::KnowledgeBase(int embedding_dim, std::vector<ClassEntry> classes,
                             std::vector<AttributeEntry> attributes, Assoc assoc)
    : embedding_dim_(embedding_dim),
      classes_(std::move(classes)),
      attributes_(std::move(attributes)),
      assoc_(std::move(assoc)) {
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (!class_lookup_.emplace(classes_[k].id, k).second) {
      throw DataError("knowledge: duplicate class id '" + classes_[k].id + "'");
    }
  }
  validate();
}

void KnowledgeBase::validate() const {
  if (embedding_dim_ < 1) throw DataError("knowledge: embedding_dim must be >= 1");
  if (classes_.empty()) throw DataError("knowledge: no classes");
  std::unordered_set<std::string> attr_ids;
  for (const auto& a : attributes_) {
    if (!attr_ids.insert(a.id).second) throw DataError("knowledge: duplicate attribute id '" + a.id + "'");
    if (a.embedding.size() != embedding_dim_) {
      throw DataError("knowledge: attribute '" + a.id + "' embedding has dimension " +
                      std::to_string(a.embedding.size()) + ", expected " +
                      std::to_string(embedding_dim_));
    }
    if (!a.embedding.allFinite()) throw DataError("knowledge: non-finite embedding for '" + a.id + "'");
  }
  for (const auto& c : classes_) {
    if (c.embedding.size() != embedding_dim_) {
      throw DataError("knowledge: class '" + c.id + "' embedding has dimension " +
                      std::to_string(c.embedding.size()) + ", expected " +
                      std::to_string(embedding_dim_));
    }
    if (!c.embedding.allFinite()) throw DataError("knowledge: non-finite embedding for '" + c.id + "'");
  }
  if (assoc_.size() != classes_.size()) {
    throw DataError("knowledge: assoc has " + std::to_string(assoc_.size()) + " rows for " +
                    std::to_string(classes_.size()) + " classes");
  }
  for (const auto& row : assoc_) {
    if (row.size() != attributes_.size()) {
      throw DataError("knowledge: assoc row length does not match attribute count");
    }
    for (auto v : row) {
      if (v > 1) throw DataError("knowledge: assoc entries must be 0 or 1");
    }
  }
}

std::vector<std::size_t> KnowledgeBase::class_attributes(std::size_t cls) const {
  std::vector<std::size_t> out;
  const auto& row = assoc_.at(cls);
  for (std::size_t a = 0; a < row.size(); ++a) {
    if (row[a]) out.push_back(a);
  }
  return out;
}

std::optional<std::size_t> KnowledgeBase::find_class(std::string_view id) const {
  auto it = class_lookup_.find(std::string(id));
  if (it == class_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t KnowledgeBase::class_index(std::string_view id) const {
  if (auto k = find_class(id)) return *k;
  throw DataError("unknown class '" + std::string(id) + "'");
}

KnowledgeBase KnowledgeBase::with_assoc(Assoc assoc) const {
  return KnowledgeBase(embedding_dim_, classes_, attributes_, std::move(assoc));
}

KnowledgeBase knowledge_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("knowledge: parse error: ") + e.what());
  }
  try {
    const int dim = doc.at("embedding_dim").get<int>();
    std::vector<KnowledgeBase::ClassEntry> classes;
    for (const auto& c : doc.at("classes")) {
      const auto id = c.at("id").get<std::string>();
      classes.push_back({id, c.at("base").get<bool>(), parse_embedding(c.at("embedding"), id)});
    }
    std::vector<KnowledgeBase::AttributeEntry> attributes;
    for (const auto& a : doc.at("attributes")) {
      const auto id = a.at("id").get<std::string>();
      attributes.push_back({id, parse_embedding(a.at("embedding"), id)});
    }
    KnowledgeBase::Assoc assoc;
    for (const auto& row : doc.at("assoc")) {
      std::vector<std::uint8_t> r;
      for (const auto& v : row) {
        if (!v.is_number()) throw DataError("knowledge: non-numeric assoc entry");
        const double x = v.get<double>();
        if (x != 0.0 && x != 1.0) {
          throw DataError("knowledge: assoc entries must be 0 or 1, got " + v.dump());
        }
        r.push_back(static_cast<std::uint8_t>(x));
      }
      assoc.push_back(std::move(r));
    }
    return KnowledgeBase(dim, std::move(classes), std::move(attributes), std::move(assoc));
  } catch (const json::exception& e) {
    throw DataError(std::string("knowledge: schema error: ") + e.what());
  }
}

std::string knowledge_to_json(const KnowledgeBase& kb) {
  json doc;
  doc["embedding_dim"] = kb.embedding_dim();
  json classes = json::array();
  for (const auto& c : kb.classes()) {
    classes.push_back({{"id", c.id}, {"base", c.base}, {"embedding", embedding_json(c.embedding)}});
  }
  doc["classes"] = std::move(classes);
  json attributes = json::array();
  for (const auto& a : kb.attributes()) {
    attributes.push_back({{"id", a.id}, {"embedding", embedding_json(a.embedding)}});
  }
  doc["attributes"] = std::move(attributes);
  json assoc = json::array();
  for (const auto& row : kb.assoc()) {
    json r = json::array();
    for (auto v : row) r.push_back(static_cast<int>(v));
    assoc.push_back(std::move(r));
  }
  doc["assoc"] = std::move(assoc);
  return doc.dump() + "\n";
}

KnowledgeBase load_knowledge(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("knowledge: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return knowledge_from_json(buf.str());
}

void save_knowledge(const KnowledgeBase& kb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("knowledge: cannot write " + path.string());
  out << knowledge_to_json(kb);
  if (!out) throw DataError("knowledge: write failed for " + path.string());
}

AttrSplit split_attributes(const KnowledgeBase& kb) {
  AttrSplit split;
  split.is_seen.assign(kb.num_attributes(), false);
  for (std::size_t a = 0; a < kb.num_attributes(); ++a) {
    bool any = false;
    for (std::size_t k = 0; k < kb.num_classes(); ++k) {
      if (!kb.associated(k, a)) continue;
      any = true;
      if (kb.classes()[k].base) split.is_seen[a] = true;
    }
    if (split.is_seen[a]) {
      split.seen.push_back(a);
    } else {
      split.unseen.push_back(a);
      if (!any) split.vacuous.push_back(a);
    }
  }
  return split;
}

KnowledgeBase inject_noise(const KnowledgeBase& kb, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("inject_noise: gamma must lie in [0, 1]");
  }
  auto assoc = kb.assoc();
  for (auto& row : assoc) {
    for (auto& v : row) {
      // Strict comparison: gamma = 0 never flips, gamma = 1 always does.
      if (rng.uniform() < gamma) v = static_cast<std::uint8_t>(1 - v);
    }
  }
  return kb.with_assoc(std::move(assoc));
}

}  // namespace protofuse
