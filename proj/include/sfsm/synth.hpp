#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sfsm/geometry.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

/// Weak-perspective, center-pointing inspection scene. Angular rates are
/// applied about the target center; the camera looks at the center in every
/// frame.
struct SceneConfig {
  double range_m = 100.0;
  double fov_deg = 14.9;
  int n_frames = 20;
  double fps = 10.0;
  int image_width = 1024;
  int image_height = 1024;
  double target_extent_m = 8.0;
  int n_landmarks = 200;
  double planar_fraction = 0.5;
  double arc_rate_deg_s = 1.5;
  Vec3 arc_axis = Vec3(0.0, 1.0, 0.0);
  double tumble_rate_deg_s = 1.5;
  Vec3 tumble_axis = Vec3(1.0, 0.0, 0.0);
  double pixel_noise_px = 0.3;
  bool quantize = true;
  double outlier_fraction = 0.0;
  /// Per-frame probability that a track survives into the next frame.
  double track_survival = 0.995;
  std::uint64_t rng_seed = 42;
};

/// Throws ValidationError naming the offending field.
void validate(const SceneConfig& cfg);

/// Ground truth in the frozen-target relative frame (world = reference camera).
struct SceneTruth {
  std::vector<Mat3> rotations;     // frames 0..n, rotation 0 = I
  std::vector<Vec3> translations;  // frames 0..n, translation 0 = 0
  std::vector<std::int64_t> landmark_ids;
  std::vector<Vec3> landmarks;  // reference frame, meters
  std::vector<bool> outlier;    // per landmark id; a whole track is an outlier
  std::uint64_t seed = 0;
  double parallax_deg = 0.0;  // rotation angle about the target between frames 0 and n
  SceneConfig config;
};

struct Scene {
  FeatureTracks tracks;
  SceneTruth truth;
};

/// Throws GenerationError when fewer than 10 tracks are covisible in frames 0 and n.
Scene generate_scene(const SceneConfig& cfg);

/// 64-bit mix used to derive per-sequence seeds: splitmix64(master ^ index).
std::uint64_t sequence_seed(std::uint64_t master_seed, std::uint64_t index);

/// Sequences differ in arc direction (in the image plane), tumble axis
/// (uniform on the sphere) and noise realization. Throws GenerationError
/// naming the sequence index.
std::vector<Scene> generate_benchmark_set(const SceneConfig& base, int n_sequences, std::uint64_t master_seed);

/// Camera-model identity for the scene's image size and field of view.
CameraModel scene_camera(const SceneConfig& cfg);

}  // namespace sfsm
