#pragma once

#include <optional>
#include <string>
#include <vector>

#include <protofuse/synthetic.hpp>
#include <protofuse/workflow.hpp>

namespace protofuse::cli {

/// Flags shared by the config-driven commands; set values override the file.
struct Overrides {
  std::string config;
  std::string embeddings;
  std::string knowledge;
  std::string checkpoints;
  std::string output;
  std::string centers;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> n_way;
  std::optional<int> k_shot;
  std::optional<int> m_query;
  std::optional<int> episodes;
  std::string split;
  std::string fusion;
  std::string setting;
  std::optional<int> n_iter;
  std::optional<int> epochs;
};

struct GenOptions {
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  std::string out_dir = "data";
  bool csv = false;
};

int gen_synthetic(const GenOptions& opts);
int train(const std::string& stage, const Overrides& ov);
int eval(const Overrides& ov);
int fidelity(const Overrides& ov);
int noise_sweep(const Overrides& ov, const std::vector<double>& gammas);

}  // namespace protofuse::cli
