#pragma once

#include <vector>

#include "splattrack/types.hpp"

namespace splattrack {

/// One 2D trajectory plus per-frame ground-truth visibility flags.
struct Trajectory {
  std::vector<Vec2> pixels;
  std::vector<uint8_t> visible;  // ground-truth occlusion flags
};

struct MetricsReport {
  double mte = 0.0;        // pixels
  double delta_avg = 0.0;  // percent
  double survival = 0.0;   // percent
  std::vector<std::vector<double>> error_curves;  // per point, per frame
};

/// Median 2D error over all (point, frame) pairs where the ground truth is
/// visible. Throws on an empty evaluation set.
double mte(const std::vector<Trajectory>& pred,
           const std::vector<Trajectory>& gt);

/// Mean fraction (percent) of visible pairs within each pixel threshold.
double delta_avg(const std::vector<Trajectory>& pred,
                 const std::vector<Trajectory>& gt,
                 const std::vector<double>& thresholds = {1, 2, 4, 8, 16});

/// Mean fraction (percent) of the visible-frame span a point stays within
/// the pixel threshold.
double survival(const std::vector<Trajectory>& pred,
                const std::vector<Trajectory>& gt, double threshold);

MetricsReport compute_metrics(const std::vector<Trajectory>& pred,
                              const std::vector<Trajectory>& gt,
                              double survival_threshold,
                              const std::vector<double>& delta_thresholds = {
                                  1, 2, 4, 8, 16});

/// Benchmark-convention survival threshold (50 px at 512-wide images),
/// scaled to the actual image width.
inline double survival_threshold_for_width(int width) {
  return 50.0 * width / 512.0;
}

}  // namespace splattrack
