#include "splattrack/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace splattrack {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw ContractViolation("config: " + msg);
}

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) fail("section '" + name_ + "' must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      out = it->get<T>();
      seen_.push_back(key);
    }
  }
  const json* subsection(const char* key) {
    if (auto it = j_.find(key); it != j_.end()) {
      seen_.push_back(key);
      return &*it;
    }
    return nullptr;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        fail("unknown key '" + it.key() + "' in section '" + name_ + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

AppConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }

  AppConfig cfg;
  PipelineConfig& p = cfg.pipeline;

  Section root(j, "root");
  root.get("seed", p.seed);
  root.get("stride", p.stride);
  root.get("iterations_first", p.iterations_first);
  root.get("iterations", p.iterations);
  root.get("k_frac", p.k_frac);
  root.get("extend_opacity_threshold", p.extend_opacity_threshold);
  root.get("flow_samples", p.flow_samples);
  root.get("use_flow", p.use_flow);
  root.get("use_modulation", p.use_modulation);
  root.get("gamma", p.gamma);
  root.get("export_every", cfg.export_every);

  if (const json* w = root.subsection("weights")) {
    Section s(*w, "weights");
    s.get("image", p.weights.image);
    s.get("depth", p.weights.depth);
    s.get("rigid_loc", p.weights.rigid_loc);
    s.get("rigid_rot", p.weights.rigid_rot);
    s.get("iso", p.weights.iso);
    s.get("visible", p.weights.visible);
    s.get("neighbor_count", p.weights.neighbor_count);
    s.get("depth_coverage_threshold", p.weights.depth_coverage_threshold);
    s.finish();
  }
  if (const json* o = root.subsection("optimizer")) {
    Section s(*o, "optimizer");
    s.get("beta1", p.optimizer.beta1);
    s.get("beta2", p.optimizer.beta2);
    s.get("epsilon", p.optimizer.epsilon);
    s.get("position_lr", p.optimizer.position_lr);
    s.get("scale_lr", p.optimizer.scale_lr);
    s.get("orientation_lr", p.optimizer.orientation_lr);
    s.get("color_lr", p.optimizer.color_lr);
    s.get("opacity_lr", p.optimizer.opacity_lr);
    s.get("offset_lr", p.optimizer.offset_lr);
    s.get("optimize_opacity", p.optimizer.optimize_opacity);
    s.get("min_scale", p.optimizer.min_scale);
    s.finish();
  }
  if (const json* m = root.subsection("modulation")) {
    Section s(*m, "modulation");
    s.get("c1", p.modulation.c1);
    s.get("c2", p.modulation.c2);
    s.finish();
  }
  if (const json* r = root.subsection("render")) {
    Section s(*r, "render");
    s.get("alpha_min", p.render.alpha_min);
    s.get("transmittance_min", p.render.transmittance_min);
    s.get("screen_blur", p.render.screen_blur);
    s.get("near_plane", p.render.near_plane);
    s.get("alpha_max", p.render.alpha_max);
    s.get("tile_size", p.render.tile_size);
    s.finish();
  }
  if (const json* m = root.subsection("metrics")) {
    Section s(*m, "metrics");
    s.get("delta_thresholds", cfg.delta_thresholds);
    s.get("survival_threshold_512", cfg.survival_threshold_512);
    s.finish();
  }
  root.finish();

  require(p.stride >= 1, "stride must be >= 1");
  require(p.iterations_first >= 0 && p.iterations >= 0,
          "iteration counts must be non-negative");
  require(p.k_frac >= 1, "k_frac must be >= 1");
  require(p.extend_opacity_threshold > 0.0 && p.extend_opacity_threshold <= 1.0,
          "extend_opacity_threshold must be in (0, 1]");
  require(p.weights.image >= 0 && p.weights.depth >= 0 &&
              p.weights.rigid_loc >= 0 && p.weights.rigid_rot >= 0 &&
              p.weights.iso >= 0 && p.weights.visible >= 0,
          "energy weights must be non-negative");
  require(p.weights.neighbor_count >= 1, "neighbor_count must be >= 1");
  require(p.modulation.c1 > 0.0, "modulation c1 must be positive");
  require(p.render.alpha_min > 0.0 && p.render.alpha_min < 1.0,
          "alpha_min must be in (0, 1)");
  require(p.render.tile_size >= 1, "tile_size must be >= 1");
  require(!cfg.delta_thresholds.empty(), "delta_thresholds must be non-empty");
  require(cfg.survival_threshold_512 > 0.0,
          "survival_threshold_512 must be positive");
  require(cfg.export_every >= 0, "export_every must be >= 0");
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ContractViolation("config: cannot open '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const AppConfig& cfg) {
  const PipelineConfig& p = cfg.pipeline;
  json j;
  j["seed"] = p.seed;
  j["stride"] = p.stride;
  j["iterations_first"] = p.iterations_first;
  j["iterations"] = p.iterations;
  j["k_frac"] = p.k_frac;
  j["extend_opacity_threshold"] = p.extend_opacity_threshold;
  j["flow_samples"] = p.flow_samples;
  j["use_flow"] = p.use_flow;
  j["use_modulation"] = p.use_modulation;
  j["gamma"] = p.gamma;
  j["export_every"] = cfg.export_every;
  j["weights"] = {{"image", p.weights.image},
                  {"depth", p.weights.depth},
                  {"rigid_loc", p.weights.rigid_loc},
                  {"rigid_rot", p.weights.rigid_rot},
                  {"iso", p.weights.iso},
                  {"visible", p.weights.visible},
                  {"neighbor_count", p.weights.neighbor_count},
                  {"depth_coverage_threshold", p.weights.depth_coverage_threshold}};
  j["optimizer"] = {{"beta1", p.optimizer.beta1},
                    {"beta2", p.optimizer.beta2},
                    {"epsilon", p.optimizer.epsilon},
                    {"position_lr", p.optimizer.position_lr},
                    {"scale_lr", p.optimizer.scale_lr},
                    {"orientation_lr", p.optimizer.orientation_lr},
                    {"color_lr", p.optimizer.color_lr},
                    {"opacity_lr", p.optimizer.opacity_lr},
                    {"offset_lr", p.optimizer.offset_lr},
                    {"optimize_opacity", p.optimizer.optimize_opacity},
                    {"min_scale", p.optimizer.min_scale}};
  j["modulation"] = {{"c1", p.modulation.c1}, {"c2", p.modulation.c2}};
  j["render"] = {{"alpha_min", p.render.alpha_min},
                 {"transmittance_min", p.render.transmittance_min},
                 {"screen_blur", p.render.screen_blur},
                 {"near_plane", p.render.near_plane},
                 {"alpha_max", p.render.alpha_max},
                 {"tile_size", p.render.tile_size}};
  j["metrics"] = {{"delta_thresholds", cfg.delta_thresholds},
                  {"survival_threshold_512", cfg.survival_threshold_512}};
  return j.dump(2);
}

}  // namespace splattrack
