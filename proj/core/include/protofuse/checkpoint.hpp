#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "protofuse/mlp.hpp"

namespace protofuse {

/// Named networks and scalars of one trainable module.
struct Checkpoint {
  std::string module;
  std::vector<std::pair<std::string, Mlp>> networks;
  std::vector<std::pair<std::string, double>> scalars;

  const Mlp& network(const std::string& name) const;
  double scalar(const std::string& name) const;
};

/// One JSON manifest line ({module, networks: [{name, dims, activations}],
/// scalars: [names], parameter_count}) followed by the raw little-endian f64
/// parameters: each network's layers in order (weights column-major, then
/// bias), then the scalars.
void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protofuse
