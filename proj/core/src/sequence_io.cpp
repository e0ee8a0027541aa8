#include "splattrack/sequence_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

namespace splattrack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(size_t index, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%06zu%s", index, suffix);
  return buf;
}

[[noreturn]] void file_error(const std::string& path, const std::string& msg) {
  throw ContractViolation("sequence: " + path + ": " + msg);
}

}  // namespace

void write_pfm(const std::string& path, const ImageD& image) {
  if (image.channels != 1) file_error(path, "PFM writer expects one channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) file_error(path, "cannot open for writing");
  out << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  // Rows bottom-to-top, little endian (negative scale).
  std::vector<float> row(image.width);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      row[x] = static_cast<float>(image(x, y));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              sizeof(float) * row.size());
  }
}

ImageD read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) file_error(path, "cannot open");
  std::string header;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> header >> w >> h >> scale;
  if (header != "Pf" || w <= 0 || h <= 0) file_error(path, "malformed PFM header");
  in.get();  // newline after the scale line
  ImageD img(w, h, 1);
  std::vector<float> row(w);
  const bool flip_endian = scale > 0.0;
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), sizeof(float) * row.size());
    if (!in) file_error(path, "truncated PFM data");
    for (int x = 0; x < w; ++x) {
      float v = row[x];
      if (flip_endian) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      img(x, y) = v;
    }
  }
  return img;
}

void write_flo(const std::string& path, const ImageD& flow) {
  if (flow.channels != 2) file_error(path, "flow must have two channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) file_error(path, "cannot open for writing");
  const float magic = 202021.25f;
  const int32_t w = flow.width, h = flow.height;
  out.write(reinterpret_cast<const char*>(&magic), sizeof(magic));
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float uv[2] = {static_cast<float>(flow(x, y, 0)),
                           static_cast<float>(flow(x, y, 1))};
      out.write(reinterpret_cast<const char*>(uv), sizeof(uv));
    }
  }
}

ImageD read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) file_error(path, "cannot open");
  float magic = 0;
  int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (magic != 202021.25f || w <= 0 || h <= 0) {
    file_error(path, "malformed .flo header");
  }
  ImageD flow(w, h, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float uv[2];
      in.read(reinterpret_cast<char*>(uv), sizeof(uv));
      if (!in) file_error(path, "truncated .flo data");
      flow(x, y, 0) = uv[0];
      flow(x, y, 1) = uv[1];
    }
  }
  return flow;
}

void write_pose(const std::string& path, const Camera& cam) {
  std::ofstream out(path);
  if (!out) file_error(path, "cannot open for writing");
  char buf[64];
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = cam.rotation;
  m.topRightCorner<3, 1>() = cam.translation;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << buf << (c == 3 ? "\n" : " ");
    }
  }
}

void read_pose(const std::string& path, Camera& cam) {
  std::ifstream in(path);
  if (!in) file_error(path, "cannot open");
  std::vector<double> values;
  double v;
  while (in >> v) values.push_back(v);
  if (values.size() != 16) {
    file_error(path, "malformed pose matrix: expected 16 numbers, got " +
                         std::to_string(values.size()));
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = values[4 * r + c];
  }
  Mat3 rot = m.topLeftCorner<3, 3>();
  if ((rot * rot.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-4) {
    file_error(path, "pose rotation is not orthonormal");
  }
  cam.rotation = rot;
  cam.translation = m.topRightCorner<3, 1>();
}

SequenceReader::SequenceReader(const std::string& directory) : dir_(directory) {
  const std::string meta_path = (fs::path(dir_) / "meta.json").string();
  std::ifstream in(meta_path);
  if (!in) file_error(meta_path, "missing meta.json");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    file_error(meta_path, std::string("invalid JSON: ") + e.what());
  }
  try {
    meta_.fx = j.at("fx").get<double>();
    meta_.fy = j.at("fy").get<double>();
    meta_.cx = j.at("cx").get<double>();
    meta_.cy = j.at("cy").get<double>();
    meta_.width = j.at("width").get<int>();
    meta_.height = j.at("height").get<int>();
    meta_.depth_scale = j.value("depth_scale", 1.0);
    meta_.fps = j.value("fps", 0.0);
  } catch (const json::exception& e) {
    file_error(meta_path, std::string("bad meta field: ") + e.what());
  }
  if (meta_.fx <= 0 || meta_.fy <= 0 || meta_.width <= 0 || meta_.height <= 0) {
    file_error(meta_path, "non-positive intrinsics or image size");
  }

  // Frame indices must be contiguous from 0.
  for (size_t i = 0;; ++i) {
    const fs::path color = fs::path(dir_) / frame_name(i, ".png");
    if (!fs::exists(color)) break;
    const fs::path pfm = fs::path(dir_) / frame_name(i, ".pfm");
    const fs::path depth_png = fs::path(dir_) / frame_name(i, ".depth.png");
    if (fs::exists(pfm)) {
      depth_is_pfm_.push_back(true);
    } else if (fs::exists(depth_png)) {
      depth_is_pfm_.push_back(false);
    } else {
      file_error(pfm.string(), "missing depth file (.pfm or .depth.png)");
    }
    const fs::path pose = fs::path(dir_) / frame_name(i, ".txt");
    if (!fs::exists(pose)) file_error(pose.string(), "missing pose file");
    ++count_;
  }
  if (count_ == 0) {
    file_error((fs::path(dir_) / "000000.png").string(),
               "no frames found (indices must start at 0)");
  }
}

Frame SequenceReader::read(size_t index) const {
  if (index >= count_) {
    throw ContractViolation("sequence: frame index out of range");
  }
  Frame frame;
  frame.camera.fx = meta_.fx;
  frame.camera.fy = meta_.fy;
  frame.camera.cx = meta_.cx;
  frame.camera.cy = meta_.cy;
  frame.camera.width = meta_.width;
  frame.camera.height = meta_.height;

  const std::string color_path =
      (fs::path(dir_) / frame_name(index, ".png")).string();
  cv::Mat color = cv::imread(color_path, cv::IMREAD_COLOR);
  if (color.empty()) file_error(color_path, "cannot read color image");
  if (color.cols != meta_.width || color.rows != meta_.height) {
    file_error(color_path, "color size does not match meta.json");
  }
  frame.rgb = ImageD(meta_.width, meta_.height, 3);
  for (int y = 0; y < meta_.height; ++y) {
    for (int x = 0; x < meta_.width; ++x) {
      const cv::Vec3b bgr = color.at<cv::Vec3b>(y, x);
      frame.rgb(x, y, 0) = bgr[2] / 255.0;
      frame.rgb(x, y, 1) = bgr[1] / 255.0;
      frame.rgb(x, y, 2) = bgr[0] / 255.0;
    }
  }

  if (depth_is_pfm_[index]) {
    const std::string depth_path =
        (fs::path(dir_) / frame_name(index, ".pfm")).string();
    frame.depth = read_pfm(depth_path);
    if (frame.depth.width != meta_.width || frame.depth.height != meta_.height) {
      file_error(depth_path, "depth size does not match meta.json");
    }
  } else {
    const std::string depth_path =
        (fs::path(dir_) / frame_name(index, ".depth.png")).string();
    cv::Mat depth = cv::imread(depth_path, cv::IMREAD_UNCHANGED);
    if (depth.empty() || depth.type() != CV_16UC1) {
      file_error(depth_path, "expected 16-bit single-channel PNG depth");
    }
    if (depth.cols != meta_.width || depth.rows != meta_.height) {
      file_error(depth_path, "depth size does not match meta.json");
    }
    frame.depth = ImageD(meta_.width, meta_.height, 1);
    for (int y = 0; y < meta_.height; ++y) {
      for (int x = 0; x < meta_.width; ++x) {
        frame.depth(x, y) = depth.at<uint16_t>(y, x) * meta_.depth_scale;
      }
    }
  }

  const std::string pose_path =
      (fs::path(dir_) / frame_name(index, ".txt")).string();
  read_pose(pose_path, frame.camera);

  const fs::path mask_path = fs::path(dir_) / frame_name(index, ".mask.png");
  if (fs::exists(mask_path)) {
    cv::Mat mask = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
    if (mask.empty()) file_error(mask_path.string(), "cannot read mask");
    if (mask.cols != meta_.width || mask.rows != meta_.height) {
      file_error(mask_path.string(), "mask size does not match meta.json");
    }
    frame.mask = MaskImage(meta_.width, meta_.height, 1, 0);
    for (int y = 0; y < meta_.height; ++y) {
      for (int x = 0; x < meta_.width; ++x) {
        (*frame.mask)(x, y) = mask.at<uint8_t>(y, x) != 0 ? 1 : 0;
      }
    }
  }

  const fs::path flow_path = fs::path(dir_) / frame_name(index, ".flo");
  if (fs::exists(flow_path)) {
    frame.flow = read_flo(flow_path.string());
    if (frame.flow->width != meta_.width || frame.flow->height != meta_.height) {
      file_error(flow_path.string(), "flow size does not match meta.json");
    }
  }
  return frame;
}

void write_sequence(const std::string& directory,
                    const std::vector<Frame>& frames, double fps,
                    const std::vector<GroundTruthTrack>* tracks) {
  if (frames.empty()) {
    throw ContractViolation("write_sequence: no frames");
  }
  fs::create_directories(directory);
  const Camera& cam0 = frames[0].camera;

  json meta;
  meta["fx"] = cam0.fx;
  meta["fy"] = cam0.fy;
  meta["cx"] = cam0.cx;
  meta["cy"] = cam0.cy;
  meta["width"] = cam0.width;
  meta["height"] = cam0.height;
  meta["depth_scale"] = 1.0;
  meta["fps"] = fps;
  std::ofstream((fs::path(directory) / "meta.json").string()) << meta.dump(2);

  for (size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    cv::Mat color(f.height(), f.width(), CV_8UC3);
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        color.at<cv::Vec3b>(y, x) =
            cv::Vec3b(static_cast<uint8_t>(std::lround(f.rgb(x, y, 2) * 255.0)),
                      static_cast<uint8_t>(std::lround(f.rgb(x, y, 1) * 255.0)),
                      static_cast<uint8_t>(std::lround(f.rgb(x, y, 0) * 255.0)));
      }
    }
    cv::imwrite((fs::path(directory) / frame_name(i, ".png")).string(), color);
    write_pfm((fs::path(directory) / frame_name(i, ".pfm")).string(), f.depth);
    write_pose((fs::path(directory) / frame_name(i, ".txt")).string(), f.camera);
    if (f.mask) {
      cv::Mat mask(f.height(), f.width(), CV_8UC1);
      for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
          mask.at<uint8_t>(y, x) = (*f.mask)(x, y) ? 255 : 0;
        }
      }
      cv::imwrite((fs::path(directory) / frame_name(i, ".mask.png")).string(),
                  mask);
    }
    if (f.flow) {
      write_flo((fs::path(directory) / frame_name(i, ".flo")).string(), *f.flow);
    }
  }

  if (tracks != nullptr) {
    std::ofstream out((fs::path(directory) / "tracks_gt.csv").string());
    out << "point_id,frame,u,v,x,y,z,visible\n";
    char buf[256];
    for (size_t p = 0; p < tracks->size(); ++p) {
      const GroundTruthTrack& t = (*tracks)[p];
      for (size_t f = 0; f < t.pixels.size(); ++f) {
        std::snprintf(buf, sizeof(buf),
                      "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", p, f,
                      t.pixels[f].x(), t.pixels[f].y(), t.positions_3d[f].x(),
                      t.positions_3d[f].y(), t.positions_3d[f].z(),
                      t.visible[f] ? 1 : 0);
        out << buf;
      }
    }
  }
}

std::vector<GroundTruthTrack> read_ground_truth(const std::string& directory) {
  const std::string path = (fs::path(directory) / "tracks_gt.csv").string();
  std::ifstream in(path);
  if (!in) file_error(path, "missing ground-truth tracks");
  std::vector<GroundTruthTrack> tracks;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    size_t p, f;
    double u, v, x, y, z;
    int vis;
    if (!(ss >> p >> f >> u >> v >> x >> y >> z >> vis)) {
      file_error(path, "malformed row: " + line);
    }
    if (p >= tracks.size()) tracks.resize(p + 1);
    tracks[p].pixels.emplace_back(u, v);
    tracks[p].positions_3d.emplace_back(x, y, z);
    tracks[p].visible.push_back(vis ? 1 : 0);
  }
  return tracks;
}

}  // namespace splattrack
