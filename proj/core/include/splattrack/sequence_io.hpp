#pragma once

#include <string>
#include <vector>

#include "splattrack/synthetic.hpp"
#include "splattrack/types.hpp"

namespace splattrack {

/// Intrinsics and scaling read from meta.json.
struct SequenceMeta {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double depth_scale = 1.0;  // applied to 16-bit PNG depth
  double fps = 0.0;
};

/// Lazy reader over the on-disk sequence layout:
///   NNNNNN.png (8-bit RGB), NNNNNN.pfm or NNNNNN.png depth, NNNNNN.txt
///   pose (4x4 row-major world->camera), optional NNNNNN.mask.png and
///   NNNNNN.flo, plus meta.json.
class SequenceReader {
 public:
  explicit SequenceReader(const std::string& directory);

  size_t size() const { return count_; }
  const SequenceMeta& meta() const { return meta_; }
  /// Loads frame i; throws with the offending file name on any defect.
  Frame read(size_t index) const;

 private:
  std::string dir_;
  SequenceMeta meta_;
  size_t count_ = 0;
  std::vector<bool> depth_is_pfm_;
};

/// Writes frames in the canonical layout; used by the synth subcommand and
/// the round-trip tests. Ground-truth tracks, when given, land in
/// tracks_gt.csv next to the frames.
void write_sequence(const std::string& directory,
                    const std::vector<Frame>& frames, double fps = 10.0,
                    const std::vector<GroundTruthTrack>* tracks = nullptr);

/// Reads tracks_gt.csv written by write_sequence.
std::vector<GroundTruthTrack> read_ground_truth(const std::string& directory);

// Individual format helpers (exposed for tests).
void write_pfm(const std::string& path, const ImageD& image);
ImageD read_pfm(const std::string& path);
void write_flo(const std::string& path, const ImageD& flow);
ImageD read_flo(const std::string& path);
void write_pose(const std::string& path, const Camera& cam);
void read_pose(const std::string& path, Camera& cam);

}  // namespace splattrack
