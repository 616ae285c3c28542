#include "sfsm/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "sfsm/config.hpp"
#include "sfsm/errors.hpp"

namespace sfsm {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ValidationError(std::string("scene config: ") + field + " " + why);
}

Vec3 unit_or_throw(const Vec3& v, const char* field) {
  require(v.allFinite() && v.norm() > 1e-12, field, "must be a non-zero vector");
  return v.normalized();
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  while (true) {
    Vec3 v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-9) return v.normalized();
  }
}

}  // namespace

void validate(const SceneConfig& c) {
  require(c.range_m > 0.0, "range_m", "must be positive");
  require(c.fov_deg > 0.0 && c.fov_deg < 180.0, "fov_deg", "must lie in (0, 180)");
  require(c.n_frames >= 2, "n_frames", "must be >= 2");
  require(c.fps > 0.0, "fps", "must be positive");
  require(c.image_width > 0 && c.image_height > 0, "image_width/image_height", "must be positive");
  require(c.target_extent_m > 0.0 && c.target_extent_m < c.range_m, "target_extent_m", "must lie in (0, range_m)");
  require(c.n_landmarks >= 1, "n_landmarks", "must be >= 1");
  require(c.planar_fraction >= 0.0 && c.planar_fraction <= 1.0, "planar_fraction", "must lie in [0, 1]");
  require(c.outlier_fraction >= 0.0 && c.outlier_fraction <= 1.0, "outlier_fraction", "must lie in [0, 1]");
  require(c.track_survival >= 0.0 && c.track_survival <= 1.0, "track_survival", "must lie in [0, 1]");
  require(c.pixel_noise_px >= 0.0, "pixel_noise_px", "must be non-negative");
  require(std::isfinite(c.arc_rate_deg_s), "arc_rate_deg_s", "must be finite");
  require(std::isfinite(c.tumble_rate_deg_s), "tumble_rate_deg_s", "must be finite");
  unit_or_throw(c.arc_axis, "arc_axis");
  unit_or_throw(c.tumble_axis, "tumble_axis");
}

CameraModel scene_camera(const SceneConfig& cfg) {
  return CameraModel::from_fov(cfg.fov_deg, cfg.image_width, cfg.image_height);
}

Scene generate_scene(const SceneConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scene scene;
  SceneTruth& truth = scene.truth;
  truth.config = cfg;
  truth.seed = cfg.rng_seed;
  const CameraModel cam = scene_camera(cfg);
  const Vec3 center(0.0, 0.0, cfg.range_m);
  const double extent = cfg.target_extent_m;

  // Landmarks: a disk through the center (random orientation) plus a ball.
  const Vec3 normal = random_unit(rng);
  Vec3 e1 = normal.cross(std::abs(normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
  const Vec3 e2 = normal.cross(e1);
  const int n_planar = static_cast<int>(std::lround(cfg.planar_fraction * cfg.n_landmarks));
  for (int j = 0; j < cfg.n_landmarks; ++j) {
    Vec3 offset;
    if (j < n_planar) {
      const double rad = extent * std::sqrt(uni(rng));
      const double ang = 2.0 * std::numbers::pi * uni(rng);
      offset = rad * (std::cos(ang) * e1 + std::sin(ang) * e2);
    } else {
      do {
        offset = Vec3(2.0 * uni(rng) - 1.0, 2.0 * uni(rng) - 1.0, 2.0 * uni(rng) - 1.0);
      } while (offset.squaredNorm() > 1.0);
      offset *= extent;
    }
    truth.landmark_ids.push_back(j);
    truth.landmarks.push_back(center + offset);
    truth.outlier.push_back(false);
  }

  // Relative motion: rotation G_i of the camera rig about the target center.
  const Vec3 arc = unit_or_throw(cfg.arc_axis, "arc_axis") * cfg.arc_rate_deg_s * kDeg;
  const Vec3 tumble = unit_or_throw(cfg.tumble_axis, "tumble_axis") * cfg.tumble_rate_deg_s * kDeg;
  for (int i = 0; i < cfg.n_frames; ++i) {
    const double t = i / cfg.fps;
    const Mat3 G = exact_rotation(t * arc) * exact_rotation(-t * tumble);
    truth.rotations.push_back(G.transpose());
    truth.translations.push_back(center - G.transpose() * center);
  }
  truth.rotations.front() = Mat3::Identity();
  truth.translations.front() = Vec3::Zero();
  truth.parallax_deg = rotation_log(truth.rotations.back()).norm() / kDeg;

  FeatureTracks& tracks = scene.tracks;
  tracks.camera = cam;
  tracks.n_frames = cfg.n_frames;
  for (int i = 0; i < cfg.n_frames; ++i) tracks.timestamps.push_back(i / cfg.fps);
  tracks.seed = cfg.rng_seed;
  tracks.provenance = "sfsm-synth " + version_string() + " " + scene_to_json(cfg).dump();

  auto measure = [&](const PixelPoint& ideal) {
    PixelPoint p{ideal.u + cfg.pixel_noise_px * gauss(rng), ideal.v + cfg.pixel_noise_px * gauss(rng)};
    if (cfg.quantize) p = {std::round(p.u), std::round(p.v)};
    return p;
  };

  for (std::size_t j = 0; j < truth.landmarks.size(); ++j) {
    Track tr;
    tr.id = truth.landmark_ids[j];
    for (int i = 0; i < cfg.n_frames; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const Vec3 y = truth.rotations[ii] * truth.landmarks[j] + truth.translations[ii];
      if (!(y.z() > 0.0)) break;
      const PixelPoint ideal = camera_to_pixel(cam, normalize_homogeneous(y));
      const PixelPoint p = measure(ideal);
      if (!cam.contains(p)) break;
      tr.observations.push_back({i, p});
    }
    if (!tr.observations.empty()) tracks.tracks.push_back(std::move(tr));
  }

  // Whole-track outliers keep their reference measurement.
  const auto n_outliers = static_cast<std::size_t>(std::lround(cfg.outlier_fraction * tracks.tracks.size()));
  std::vector<std::size_t> order(tracks.tracks.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  for (std::size_t k = 0; k < n_outliers; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
    std::swap(order[k], order[pick(rng)]);
    Track& tr = tracks.tracks[order[k]];
    truth.outlier[static_cast<std::size_t>(tr.id)] = true;
    for (std::size_t o = 1; o < tr.observations.size(); ++o) {
      PixelPoint p{uni(rng) * cfg.image_width, uni(rng) * cfg.image_height};
      if (cfg.quantize) p = {std::round(p.u), std::round(p.v)};
      tr.observations[o].pixel = p;
    }
  }

  // Suffix dropout keeps every track contiguous.
  if (cfg.track_survival < 1.0) {
    for (Track& tr : tracks.tracks) {
      for (std::size_t o = 1; o < tr.observations.size(); ++o) {
        if (uni(rng) >= cfg.track_survival) {
          tr.observations.resize(o);
          break;
        }
      }
    }
  }

  const auto covisible = covisible_subset(tracks, 0, tracks.last_frame()).size();
  if (covisible < 10)
    throw GenerationError("synth: only " + std::to_string(covisible) + " tracks covisible in frames 0 and n");
  return scene;
}

std::uint64_t sequence_seed(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t z = (master_seed ^ index) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Scene> generate_benchmark_set(const SceneConfig& base, int n_sequences, std::uint64_t master_seed) {
  if (n_sequences < 1) throw ValidationError("synth: benchmark set needs at least one sequence");
  validate(base);
  std::vector<Scene> out(static_cast<std::size_t>(n_sequences));
  std::vector<std::string> errors(out.size());
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < n_sequences; ++s) {
    SceneConfig cfg = base;
    cfg.rng_seed = sequence_seed(master_seed, static_cast<std::uint64_t>(s));
    std::mt19937_64 rng(sequence_seed(cfg.rng_seed, 0x5eedULL));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double phase = 2.0 * std::numbers::pi * uni(rng);
    cfg.arc_axis = Vec3(std::cos(phase), std::sin(phase), 0.0);
    cfg.tumble_axis = random_unit(rng);
    try {
      out[static_cast<std::size_t>(s)] = generate_scene(cfg);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(s)] = e.what();
    }
  }
  for (std::size_t s = 0; s < errors.size(); ++s)
    if (!errors[s].empty()) throw GenerationError("sequence " + std::to_string(s) + ": " + errors[s]);
  return out;
}

}  // namespace sfsm
