#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sfsm/geometry.hpp"
#include "sfsm/step1.hpp"
#include "sfsm/synth.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm::testing {

inline CameraModel test_camera() { return CameraModel::from_fov(14.9, 1024, 1024); }

/// Frame-i point under the small-motion model, written out component by component.
inline NormalizedPoint small_motion_point(const Vec3& th, const Vec3& rb, double x0, double y0) {
  const double X = x0 - th.z() * y0 + th.y() + rb.x();
  const double Y = th.z() * x0 + y0 - th.x() + rb.y();
  const double Z = -th.y() * x0 + th.x() * y0 + 1.0 + rb.z();
  return {X / Z, Y / Z};
}

struct SmallMotionSequence {
  FeatureTracks tracks;
  std::vector<Vec3> thetas;  // frames 1..n
  std::vector<Vec3> rbars;
  std::vector<bool> outlier;
};

/// Tracks generated exactly by the small-motion model with linearly growing
/// motion. Outlier tracks get uniform in-image pixels after frame 0.
inline SmallMotionSequence small_motion_sequence(int n_frames, int m, const Vec3& theta_n, const Vec3& rbar_n,
                                                 std::uint64_t seed, double outlier_fraction = 0.0) {
  SmallMotionSequence s;
  const CameraModel cam = test_camera();
  s.tracks.camera = cam;
  s.tracks.n_frames = n_frames;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> px(150.0, 874.0);
  std::uniform_real_distribution<double> any(0.0, 1024.0);
  const int n = n_frames - 1;
  for (int i = 1; i <= n; ++i) {
    s.thetas.push_back(theta_n * i / n);
    s.rbars.push_back(rbar_n * i / n);
  }
  const int n_out = static_cast<int>(std::lround(outlier_fraction * m));
  for (int j = 0; j < m; ++j) {
    Track t;
    t.id = j;
    const bool out = j < n_out;
    s.outlier.push_back(out);
    const PixelPoint p0{px(rng), px(rng)};
    t.observations.push_back({0, p0});
    const NormalizedPoint x0 = pixel_to_camera(cam, p0);
    for (int i = 1; i <= n; ++i) {
      if (out) {
        t.observations.push_back({i, {any(rng), any(rng)}});
      } else {
        const NormalizedPoint xi =
            small_motion_point(s.thetas[static_cast<std::size_t>(i - 1)], s.rbars[static_cast<std::size_t>(i - 1)], x0.x, x0.y);
        t.observations.push_back({i, camera_to_pixel(cam, xi)});
      }
    }
    s.tracks.tracks.push_back(std::move(t));
  }
  return s;
}

inline SceneConfig noise_free_scene(std::uint64_t seed = 42) {
  SceneConfig c;
  c.pixel_noise_px = 0.0;
  c.quantize = false;
  c.track_survival = 1.0;
  c.rng_seed = seed;
  return c;
}

}  // namespace sfsm::testing
