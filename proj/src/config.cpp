#include "sfsm/config.hpp"

#include <set>

#include "sfsm/errors.hpp"
#include "sfsm/io.hpp"

namespace sfsm {

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ValidationError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ValidationError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ValidationError(where_ + "." + key + ": wrong type");
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != 3) throw ValidationError(where_ + "." + key + ": expected 3 numbers");
    for (int k = 0; k < 3; ++k) {
      if (!(*it)[k].is_number()) throw ValidationError(where_ + "." + key + ": expected 3 numbers");
      out[k] = (*it)[k].get<double>();
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError(where_ + ": unknown field '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
void rethrow_with_field(F&& f) {
  try {
    f();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::string version_string() { return SFSM_VERSION; }

Json scene_to_json(const SceneConfig& c) {
  Json j;
  j["range_m"] = c.range_m;
  j["fov_deg"] = c.fov_deg;
  j["n_frames"] = c.n_frames;
  j["fps"] = c.fps;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  j["target_extent_m"] = c.target_extent_m;
  j["n_landmarks"] = c.n_landmarks;
  j["planar_fraction"] = c.planar_fraction;
  j["arc_rate_deg_s"] = c.arc_rate_deg_s;
  j["arc_axis"] = vec3_json(c.arc_axis);
  j["tumble_rate_deg_s"] = c.tumble_rate_deg_s;
  j["tumble_axis"] = vec3_json(c.tumble_axis);
  j["pixel_noise_px"] = c.pixel_noise_px;
  j["quantize"] = c.quantize;
  j["outlier_fraction"] = c.outlier_fraction;
  j["track_survival"] = c.track_survival;
  j["rng_seed"] = c.rng_seed;
  return j;
}

SceneConfig scene_from_json(const Json& j) {
  SceneConfig c;
  Reader r(j, "scene");
  r.get("range_m", c.range_m);
  r.get("fov_deg", c.fov_deg);
  r.get("n_frames", c.n_frames);
  r.get("fps", c.fps);
  r.get("image_width", c.image_width);
  r.get("image_height", c.image_height);
  r.get("target_extent_m", c.target_extent_m);
  r.get("n_landmarks", c.n_landmarks);
  r.get("planar_fraction", c.planar_fraction);
  r.get("arc_rate_deg_s", c.arc_rate_deg_s);
  r.get_vec3("arc_axis", c.arc_axis);
  r.get("tumble_rate_deg_s", c.tumble_rate_deg_s);
  r.get_vec3("tumble_axis", c.tumble_axis);
  r.get("pixel_noise_px", c.pixel_noise_px);
  r.get("quantize", c.quantize);
  r.get("outlier_fraction", c.outlier_fraction);
  r.get("track_survival", c.track_survival);
  r.get("rng_seed", c.rng_seed);
  r.finish();
  validate(c);
  return c;
}

Json generate_to_json(const GenerateConfig& c) {
  Json j;
  j["n_sequences"] = c.n_sequences;
  j["master_seed"] = c.master_seed;
  j["scene"] = scene_to_json(c.scene);
  return j;
}

GenerateConfig generate_from_json(const Json& j) {
  GenerateConfig c;
  Reader r(j, "generate");
  r.get("n_sequences", c.n_sequences);
  r.get("master_seed", c.master_seed);
  if (const Json* s = r.child("scene")) c.scene = scene_from_json(*s);
  r.finish();
  if (c.n_sequences < 1) throw ValidationError("generate.n_sequences must be >= 1");
  return c;
}

Json thresholds_to_json(const SuccessThresholds& t) {
  Json j;
  j["ate"] = t.ate;
  j["are_deg"] = t.are_deg;
  j["depth"] = t.depth;
  return j;
}

SuccessThresholds thresholds_from_json(const Json& j) {
  SuccessThresholds t;
  Reader r(j, "thresholds");
  r.get("ate", t.ate);
  r.get("are_deg", t.are_deg);
  r.get("depth", t.depth);
  r.finish();
  validate(t);
  return t;
}

Json pipeline_to_json(const PipelineConfig& c) {
  Json j;
  j["variant"] = to_string(c.variant);
  j["nominal_inverse_depth"] = c.nominal_inverse_depth;
  Json s1;
  s1["inlier_threshold_px"] = c.step1.inlier_threshold_px;
  s1["ransac_iterations"] = c.step1.ransac_iterations;
  s1["sample_size"] = c.step1.sample_size;
  s1["rng_seed"] = c.step1.rng_seed;
  s1["estimate_translation"] = c.step1.estimate_translation;
  s1["adaptive"] = c.step1.adaptive;
  s1["confidence"] = c.step1.confidence;
  s1["max_adaptive_iterations"] = c.step1.max_adaptive_iterations;
  j["step1"] = s1;
  j["softplus_alpha"] = c.softplus.alpha;
  j["depth_clamp_floor"] = c.depth_clamp_floor;
  Json lm;
  lm["max_iterations"] = c.lm.max_iterations;
  lm["initial_damping"] = c.lm.initial_damping;
  lm["damping_up"] = c.lm.damping_up;
  lm["damping_down"] = c.lm.damping_down;
  lm["max_damping"] = c.lm.max_damping;
  lm["absolute_cost_tolerance"] = c.lm.absolute_cost_tolerance;
  lm["relative_cost_tolerance"] = c.lm.relative_cost_tolerance;
  lm["gradient_tolerance"] = c.lm.gradient_tolerance;
  lm["use_huber"] = c.lm.use_huber;
  lm["huber_threshold"] = c.lm.huber_threshold;
  lm["use_schur"] = c.lm.use_schur;
  j["lm"] = lm;
  j["thresholds"] = thresholds_to_json(c.thresholds);
  return j;
}

PipelineConfig pipeline_from_json(const Json& j) {
  PipelineConfig c;
  Reader r(j, "pipeline");
  std::string variant = to_string(c.variant);
  r.get("variant", variant);
  rethrow_with_field([&] { c.variant = variant_from_string(variant); });
  r.get("nominal_inverse_depth", c.nominal_inverse_depth);
  if (const Json* s = r.child("step1")) {
    Reader s1(*s, "pipeline.step1");
    s1.get("inlier_threshold_px", c.step1.inlier_threshold_px);
    s1.get("ransac_iterations", c.step1.ransac_iterations);
    s1.get("sample_size", c.step1.sample_size);
    s1.get("rng_seed", c.step1.rng_seed);
    s1.get("estimate_translation", c.step1.estimate_translation);
    s1.get("adaptive", c.step1.adaptive);
    s1.get("confidence", c.step1.confidence);
    s1.get("max_adaptive_iterations", c.step1.max_adaptive_iterations);
    s1.finish();
  }
  r.get("softplus_alpha", c.softplus.alpha);
  r.get("depth_clamp_floor", c.depth_clamp_floor);
  if (const Json* s = r.child("lm")) {
    Reader lm(*s, "pipeline.lm");
    lm.get("max_iterations", c.lm.max_iterations);
    lm.get("initial_damping", c.lm.initial_damping);
    lm.get("damping_up", c.lm.damping_up);
    lm.get("damping_down", c.lm.damping_down);
    lm.get("max_damping", c.lm.max_damping);
    lm.get("absolute_cost_tolerance", c.lm.absolute_cost_tolerance);
    lm.get("relative_cost_tolerance", c.lm.relative_cost_tolerance);
    lm.get("gradient_tolerance", c.lm.gradient_tolerance);
    lm.get("use_huber", c.lm.use_huber);
    lm.get("huber_threshold", c.lm.huber_threshold);
    lm.get("use_schur", c.lm.use_schur);
    lm.finish();
  }
  if (const Json* s = r.child("thresholds")) c.thresholds = thresholds_from_json(*s);
  r.finish();
  c = resolve_variant(c);
  validate(c);
  return c;
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) { return parse_json(read_text_file(path), path.string()); }

}  // namespace sfsm
