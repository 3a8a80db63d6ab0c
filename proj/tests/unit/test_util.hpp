#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "protofuse/embedding_store.hpp"
#include "protofuse/knowledge.hpp"
#include "protofuse/numeric.hpp"
#include "protofuse/synthetic.hpp"

namespace pf_test {

using protofuse::Vec;

inline Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

inline Vec random_vec(int dim, protofuse::Rng& rng, double scale = 1.0) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = scale * rng.normal();
  return v;
}

// Small generator shape that trains in well under a second.
inline protofuse::SyntheticSpec tiny_spec() {
  protofuse::SyntheticSpec spec;
  spec.n_base_classes = 6;
  spec.n_novel_classes = 5;
  spec.n_attributes = 10;
  spec.attrs_per_class = 3;
  spec.dim = 6;
  spec.samples_per_class = 20;
  return spec;
}

inline protofuse::SyntheticData tiny_data(std::uint64_t seed = 1) {
  protofuse::Rng rng(seed);
  return protofuse::generate_synthetic(tiny_spec(), rng);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "protofuse_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace pf_test
