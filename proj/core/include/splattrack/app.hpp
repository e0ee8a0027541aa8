#pragma once

#include <string>
#include <vector>

#include "splattrack/config.hpp"
#include "splattrack/metrics.hpp"
#include "splattrack/pipeline.hpp"
#include "splattrack/sequence_io.hpp"

namespace splattrack {

struct Query {
  int frame = 0;
  bool is_3d = false;
  Vec2 pixel = Vec2::Zero();
  Vec3 point = Vec3::Zero();
};

std::vector<Query> load_queries(const std::string& path);

struct TrackingRun {
  TrackSet tracks;
  SceneState state;
};

/// Fits the whole sequence online and tracks the queries. export_dir, when
/// non-empty, receives scene PLY snapshots per the export interval.
TrackingRun run_tracking(const std::vector<Frame>& frames,
                         const std::vector<Query>& queries,
                         const AppConfig& config,
                         const std::string& export_dir = {});

/// CLI entry points. Each returns a process exit code and reports failures
/// on stderr with the offending file or frame.
int run_track(const std::string& sequence_dir, const AppConfig& config,
              const std::string& queries_path, const std::string& out_dir);
int run_eval(const std::string& script_or_dir, const AppConfig& config,
             const std::string& out_dir);
int run_synth(const std::string& script, const AppConfig& config,
              const std::string& out_dir, int frames, int width, int height);

void write_trajectories_csv(const std::string& path, const TrackSet& tracks);
void write_scene_ply(const std::string& path, const GaussianSet& scene);
void write_metrics_report(const std::string& out_dir,
                          const MetricsReport& report);

/// Converts tracked points into metric trajectories aligned with ground
/// truth (tracks must be born at frame 0).
std::vector<Trajectory> to_trajectories(const TrackSet& tracks,
                                        size_t frame_count);
std::vector<Trajectory> gt_trajectories(
    const std::vector<GroundTruthTrack>& tracks);

}  // namespace splattrack
