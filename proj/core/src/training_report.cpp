#include "protofuse/training_report.hpp"

#include <json.hpp>

namespace protofuse {

std::string report_to_json(const TrainingReport& report) {
  nlohmann::json j;
  j["stage"] = report.stage;
  j["steps"] = report.losses.size();
  j["initial_loss"] = report.initial_loss;
  j["final_loss"] = report.final_loss;
  j["losses"] = report.losses;
  if (!report.accuracies.empty()) j["accuracies"] = report.accuracies;
  return j.dump(2) + "\n";
}

}  // namespace protofuse
