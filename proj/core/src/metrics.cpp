#include "splattrack/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace splattrack {

namespace {

void check_aligned(const std::vector<Trajectory>& pred,
                   const std::vector<Trajectory>& gt) {
  if (pred.size() != gt.size()) {
    throw ContractViolation("metrics: prediction/ground-truth point count mismatch");
  }
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].pixels.size() != gt[i].pixels.size() ||
        gt[i].visible.size() != gt[i].pixels.size()) {
      throw ContractViolation("metrics: trajectory length mismatch");
    }
  }
}

std::vector<double> visible_errors(const std::vector<Trajectory>& pred,
                                   const std::vector<Trajectory>& gt) {
  std::vector<double> errors;
  for (size_t i = 0; i < pred.size(); ++i) {
    for (size_t t = 0; t < gt[i].pixels.size(); ++t) {
      if (!gt[i].visible[t]) continue;
      errors.push_back((pred[i].pixels[t] - gt[i].pixels[t]).norm());
    }
  }
  return errors;
}

}  // namespace

double mte(const std::vector<Trajectory>& pred,
           const std::vector<Trajectory>& gt) {
  check_aligned(pred, gt);
  std::vector<double> errors = visible_errors(pred, gt);
  if (errors.empty()) {
    throw ContractViolation("mte: empty evaluation set");
  }
  const size_t mid = errors.size() / 2;
  std::nth_element(errors.begin(), errors.begin() + mid, errors.end());
  if (errors.size() % 2 == 1) return errors[mid];
  const double upper = errors[mid];
  const double lower = *std::max_element(errors.begin(), errors.begin() + mid);
  return 0.5 * (lower + upper);
}

double delta_avg(const std::vector<Trajectory>& pred,
                 const std::vector<Trajectory>& gt,
                 const std::vector<double>& thresholds) {
  check_aligned(pred, gt);
  const std::vector<double> errors = visible_errors(pred, gt);
  if (errors.empty()) {
    throw ContractViolation("delta_avg: empty evaluation set");
  }
  double acc = 0.0;
  for (double thr : thresholds) {
    size_t within = 0;
    for (double e : errors) {
      if (e < thr) ++within;
    }
    acc += static_cast<double>(within) / errors.size();
  }
  return 100.0 * acc / thresholds.size();
}

double survival(const std::vector<Trajectory>& pred,
                const std::vector<Trajectory>& gt, double threshold) {
  check_aligned(pred, gt);
  if (pred.empty()) {
    throw ContractViolation("survival: empty evaluation set");
  }
  double acc = 0.0;
  size_t counted = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    size_t visible_total = 0, survived = 0;
    bool failed = false;
    for (size_t t = 0; t < gt[i].pixels.size(); ++t) {
      if (!gt[i].visible[t]) continue;
      ++visible_total;
      if (!failed) {
        const double e = (pred[i].pixels[t] - gt[i].pixels[t]).norm();
        if (e > threshold) {
          failed = true;
        } else {
          ++survived;
        }
      }
    }
    if (visible_total == 0) continue;
    acc += static_cast<double>(survived) / visible_total;
    ++counted;
  }
  if (counted == 0) {
    throw ContractViolation("survival: empty evaluation set");
  }
  return 100.0 * acc / counted;
}

MetricsReport compute_metrics(const std::vector<Trajectory>& pred,
                              const std::vector<Trajectory>& gt,
                              double survival_threshold,
                              const std::vector<double>& delta_thresholds) {
  MetricsReport report;
  report.mte = mte(pred, gt);
  report.delta_avg = delta_avg(pred, gt, delta_thresholds);
  report.survival = survival(pred, gt, survival_threshold);
  report.error_curves.resize(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    report.error_curves[i].resize(gt[i].pixels.size());
    for (size_t t = 0; t < gt[i].pixels.size(); ++t) {
      report.error_curves[i][t] =
          gt[i].visible[t] ? (pred[i].pixels[t] - gt[i].pixels[t]).norm()
                           : std::nan("");
    }
  }
  return report;
}

}  // namespace splattrack
