#pragma once

#include <string>
#include <vector>

namespace protofuse {

/// Loss (and, for episodic stages, accuracy) per epoch or episode.
struct TrainingReport {
  std::string stage;
  std::vector<double> losses;
  std::vector<double> accuracies;
  /// Loss of the untrained parameters on the same objective, when evaluated.
  double initial_loss = 0.0;
  double final_loss = 0.0;

  bool empty() const { return losses.empty(); }
};

std::string report_to_json(const TrainingReport& report);

}  // namespace protofuse
