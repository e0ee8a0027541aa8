#pragma once

#include <string>
#include <vector>

#include "splattrack/pipeline.hpp"

namespace splattrack {

struct AppConfig {
  PipelineConfig pipeline;
  std::vector<double> delta_thresholds = {1, 2, 4, 8, 16};
  double survival_threshold_512 = 50.0;  // px at 512-wide images
  int export_every = 0;                  // 0 = final frame only
};

/// Parses a JSON config file. Unknown keys and out-of-range values are
/// rejected with messages naming the offending key.
AppConfig load_config(const std::string& path);
AppConfig parse_config(const std::string& json_text);

std::string config_to_json(const AppConfig& config);

}  // namespace splattrack
