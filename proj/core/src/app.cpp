#include "splattrack/app.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "splattrack/synthetic.hpp"

namespace splattrack {

namespace fs = std::filesystem;

namespace {

bool parse_double(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

void require_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw std::runtime_error("cannot create directory " + dir + ": " +
                             ec.message());
}

bool is_script_name(const std::string& s) {
  try {
    parse_script(s);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::vector<Query> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open queries file " + path);
  std::vector<Query> queries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_csv(line);
    double frame_val = 0;
    if (!parse_double(fields[0], frame_val)) {
      if (lineno == 1) continue;  // header row
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed query line");
    }
    Query q;
    q.frame = static_cast<int>(frame_val);
    std::vector<double> vals;
    for (size_t i = 1; i < fields.size(); ++i) {
      double v = 0;
      if (!parse_double(fields[i], v))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed query line");
      vals.push_back(v);
    }
    if (vals.size() == 2) {
      q.is_3d = false;
      q.pixel = Vec2(vals[0], vals[1]);
    } else if (vals.size() == 3) {
      q.is_3d = true;
      q.point = Vec3(vals[0], vals[1], vals[2]);
    } else {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected frame,u,v or frame,x,y,z");
    }
    queries.push_back(q);
  }
  if (queries.empty())
    throw std::runtime_error("queries file " + path + " holds no queries");
  return queries;
}

TrackingRun run_tracking(const std::vector<Frame>& frames,
                         const std::vector<Query>& queries,
                         const AppConfig& config,
                         const std::string& export_dir) {
  if (frames.empty()) throw std::invalid_argument("no frames to track");
  TrackingRun run{TrackSet{}, initialize(frames[0], config.pipeline)};
  run.tracks.points.resize(queries.size());

  const int n = static_cast<int>(frames.size());
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      try {
        fit_frame(run.state, frames[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error("frame " + std::to_string(i) + ": " +
                                 e.what());
      }
    }
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      if (queries[qi].frame != i) continue;
      run.tracks.points[qi] =
          queries[qi].is_3d
              ? bind_query_3d(run.state, queries[qi].point)
              : bind_query_2d(run.state, frames[i], queries[qi].pixel);
    }
    update_tracks(run.state, frames[i].camera, run.tracks);
    if (!export_dir.empty() && config.export_every > 0 &&
        (i + 1) % config.export_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "scene_%06d.ply", i);
      write_scene_ply((fs::path(export_dir) / name).string(), run.state.scene);
    }
  }
  if (!export_dir.empty())
    write_scene_ply((fs::path(export_dir) / "scene_final.ply").string(),
                    run.state.scene);
  return run;
}

void write_trajectories_csv(const std::string& path, const TrackSet& tracks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "point_id,frame,u,v,x,y,z,visible\n";
  char buf[256];
  for (size_t pi = 0; pi < tracks.points.size(); ++pi) {
    const TrackedPoint& tp = tracks.points[pi];
    for (size_t fi = 0; fi < tp.positions_3d.size(); ++fi) {
      const Vec2& px = tp.pixels[fi];
      const Vec3& x = tp.positions_3d[fi];
      std::snprintf(buf, sizeof(buf),
                    "%zu,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", pi,
                    tp.birth_frame + static_cast<int>(fi), px.x(), px.y(),
                    x.x(), x.y(), x.z(), tp.visible[fi] ? 1 : 0);
      out << buf;
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_scene_ply(const std::string& path, const GaussianSet& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << scene.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "property float scale_x\nproperty float scale_y\n"
         "property float scale_z\n";
  out << "property float opacity\nproperty int label\n";
  out << "end_header\n";
  char buf[256];
  for (size_t i = 0; i < scene.size(); ++i) {
    const Vec3& p = scene.positions[i];
    const Vec3& c = scene.colors[i];
    const Vec3& s = scene.scales[i];
    auto q8 = [](double v) {
      return static_cast<int>(
          std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
    };
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d %.9g %.9g %.9g %.9g %d\n",
                  p.x(), p.y(), p.z(), q8(c.x()), q8(c.y()), q8(c.z()),
                  s.x(), s.y(), s.z(), scene.opacities[i], scene.labels[i]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<Trajectory> to_trajectories(const TrackSet& tracks,
                                        size_t frame_count) {
  std::vector<Trajectory> out;
  out.reserve(tracks.points.size());
  for (const TrackedPoint& tp : tracks.points) {
    Trajectory t;
    t.pixels.assign(frame_count, Vec2(-1, -1));
    t.visible.assign(frame_count, 0);
    if (tp.gaussian >= 0) {
      for (size_t fi = 0; fi < tp.pixels.size(); ++fi) {
        const size_t frame = tp.birth_frame + fi;
        if (frame >= frame_count) break;
        t.pixels[frame] = tp.pixels[fi];
        t.visible[frame] = tp.visible[fi];
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trajectory> gt_trajectories(
    const std::vector<GroundTruthTrack>& tracks) {
  std::vector<Trajectory> out;
  out.reserve(tracks.size());
  for (const GroundTruthTrack& t : tracks)
    out.push_back(Trajectory{t.pixels, t.visible});
  return out;
}

void write_metrics_report(const std::string& out_dir,
                          const MetricsReport& report) {
  require_dir(out_dir);
  nlohmann::json j;
  j["mte_px"] = report.mte;
  j["delta_avg_percent"] = report.delta_avg;
  j["survival_percent"] = report.survival;
  {
    std::ofstream out(fs::path(out_dir) / "metrics.json");
    if (!out) throw std::runtime_error("cannot write metrics.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "metrics.csv");
    if (!out) throw std::runtime_error("cannot write metrics.csv");
    char buf[128];
    out << "mte_px,delta_avg_percent,survival_percent\n";
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", report.mte,
                  report.delta_avg, report.survival);
    out << buf;
  }
  {
    std::ofstream out(fs::path(out_dir) / "error_curves.csv");
    if (!out) throw std::runtime_error("cannot write error_curves.csv");
    out << "point_id,frame,error_px\n";
    char buf[128];
    for (size_t pi = 0; pi < report.error_curves.size(); ++pi)
      for (size_t fi = 0; fi < report.error_curves[pi].size(); ++fi) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g\n", pi, fi,
                      report.error_curves[pi][fi]);
        out << buf;
      }
  }
}

int run_track(const std::string& sequence_dir, const AppConfig& config,
              const std::string& queries_path, const std::string& out_dir) {
  try {
    const std::vector<Query> queries = load_queries(queries_path);
    SequenceReader reader(sequence_dir);
    std::vector<Frame> frames;
    frames.reserve(reader.size());
    for (size_t i = 0; i < reader.size(); ++i) frames.push_back(reader.read(i));
    require_dir(out_dir);
    const TrackingRun run = run_tracking(frames, queries, config, out_dir);
    write_trajectories_csv((fs::path(out_dir) / "trajectories.csv").string(),
                           run.tracks);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "track: " << e.what() << "\n";
    return 1;
  }
}

int run_eval(const std::string& script_or_dir, const AppConfig& config,
             const std::string& out_dir) {
  try {
    std::vector<Frame> frames;
    std::vector<GroundTruthTrack> gt;
    if (is_script_name(script_or_dir)) {
      ScriptParams params;
      params.kind = parse_script(script_or_dir);
      params.with_flow = config.pipeline.use_flow;
      SyntheticSequence seq = generate(params, config.pipeline.seed);
      frames = std::move(seq.frames);
      gt = std::move(seq.tracks);
    } else {
      SequenceReader reader(script_or_dir);
      frames.reserve(reader.size());
      for (size_t i = 0; i < reader.size(); ++i)
        frames.push_back(reader.read(i));
      gt = read_ground_truth(script_or_dir);
    }
    if (gt.empty())
      throw std::runtime_error("no ground-truth tracks for " + script_or_dir);

    std::vector<Query> queries;
    for (const GroundTruthTrack& t : gt) {
      Query q;
      q.frame = 0;
      q.pixel = t.pixels.at(0);
      queries.push_back(q);
    }
    require_dir(out_dir);
    const TrackingRun run = run_tracking(frames, queries, config, out_dir);
    write_trajectories_csv((fs::path(out_dir) / "trajectories.csv").string(),
                           run.tracks);

    const double threshold =
        config.survival_threshold_512 * frames[0].width() / 512.0;
    const MetricsReport report =
        compute_metrics(to_trajectories(run.tracks, frames.size()),
                        gt_trajectories(gt), threshold,
                        config.delta_thresholds);
    write_metrics_report(out_dir, report);
    std::cout << "mte_px=" << report.mte
              << " delta_avg=" << report.delta_avg
              << " survival=" << report.survival << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << "\n";
    return 1;
  }
}

int run_synth(const std::string& script, const AppConfig& config,
              const std::string& out_dir, int frames, int width, int height) {
  try {
    ScriptParams params;
    params.kind = parse_script(script);
    if (frames > 0) params.frames = frames;
    if (width > 0) params.width = width;
    if (height > 0) params.height = height;
    const SyntheticSequence seq = generate(params, config.pipeline.seed);
    write_sequence(out_dir, seq.frames, 10.0, &seq.tracks);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace splattrack
