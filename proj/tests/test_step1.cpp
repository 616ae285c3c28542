#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fixtures.hpp"
#include "sfsm/errors.hpp"
#include "sfsm/kernels.hpp"
#include "sfsm/step1.hpp"
#include "sfsm/synth.hpp"

using namespace sfsm;
using testing::small_motion_point;
using testing::small_motion_sequence;

namespace {

std::vector<Correspondence> exact_correspondences(const Vec3& th, const Vec3& rb, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.12, 0.12);
  std::vector<Correspondence> c;
  for (int j = 0; j < k; ++j) {
    const double x = u(rng), y = u(rng);
    c.push_back({{x, y}, small_motion_point(th, rb, x, y)});
  }
  return c;
}

double max_abs(const Vec3& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("expected_point examples") {
  const NormalizedPoint x0{0.03, -0.02};
  CHECK(expected_point(Vec3::Zero(), Vec3::Zero(), x0) == x0);
  const NormalizedPoint a = expected_point(Vec3::Zero(), Vec3(0.001, 0, 0), {0, 0});
  CHECK(a.x == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(a.y == 0.0);
  const NormalizedPoint b = expected_point(Vec3(0, 0.01, 0), Vec3::Zero(), {0, 0});
  CHECK(b.x == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(b.y == 0.0);
  CHECK_THROWS_AS(expected_point(Vec3::Zero(), Vec3(0, 0, -1.0), {0, 0}), DegenerateDepth);
  CHECK_FALSE(try_expected_point(Vec3::Zero(), Vec3(0, 0, -1.0), {0, 0}).has_value());

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int k = 0; k < 200; ++k) {
    const Vec3 th(u(rng), u(rng), u(rng)), rb(u(rng), u(rng), u(rng));
    const double x = u(rng), y = u(rng);
    const NormalizedPoint e = expected_point(th, rb, {x, y});
    const NormalizedPoint o = small_motion_point(th, rb, x, y);
    CHECK(std::abs(e.x - o.x) < 1e-15);
    CHECK(std::abs(e.y - o.y) < 1e-15);
  }
}

TEST_CASE("linear system rows for a boresight correspondence") {
  const std::vector<Correspondence> c{{{0, 0}, {0, 0}}};
  const LinearSystem s = build_linear_system(c, true, 1);
  Eigen::Matrix<double, 2, 6> A;
  A << 0, -1, 0, -1, 0, 0, 1, 0, 0, 0, -1, 0;
  CHECK(s.A == A);
  CHECK(s.b == Eigen::Vector2d::Zero());
  CHECK_THROWS_AS(build_linear_system(c), InsufficientCorrespondences);
  const LinearSystem r = build_linear_system(c, false, 1);
  CHECK(r.A.cols() == 3);
  CHECK(r.A == A.leftCols(3));
}

TEST_CASE("linear system is satisfied by the generating motion") {
  const Vec3 th(0.004, -0.006, 0.002), rb(0.0011, -0.0007, 0.0004);
  const auto c = exact_correspondences(th, rb, 30, 1);
  const LinearSystem s = build_linear_system(c);
  CHECK(s.A.rows() == 60);
  Eigen::Matrix<double, 6, 1> x;
  x << th, rb;
  CHECK((s.A * x - s.b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("least squares recovers exact small motion") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int t = 0; t < 50; ++t) {
    const Vec3 th(u(rng), u(rng), u(rng)), rb(u(rng), u(rng), u(rng) * 0.1);
    const auto c = exact_correspondences(th, rb, 40, 100 + t);
    const SmallMotion m = solve_least_squares(c);
    CHECK(max_abs(m.rotation - th) < 1e-10);
    CHECK(max_abs(m.scaled_translation - rb) < 1e-10);
  }
  const auto same = exact_correspondences(Vec3::Zero(), Vec3::Zero(), 10, 3);
  const SmallMotion z = solve_least_squares(same);
  CHECK(max_abs(z.rotation) < 1e-14);
  CHECK(max_abs(z.scaled_translation) < 1e-14);
}

TEST_CASE("minimal samples") {
  const Vec3 th(0.003, 0.001, -0.002), rb(0.0005, 0.0002, -0.0001);
  const auto good = exact_correspondences(th, rb, 3, 11);
  const auto m = solve_sample(good);
  REQUIRE(m.has_value());
  CHECK(max_abs(m->rotation - th) < 1e-10);
  CHECK(max_abs(m->scaled_translation - rb) < 1e-10);

  std::vector<Correspondence> collinear;
  for (double s : {-0.05, 0.01, 0.07}) {
    const double x = s, y = 0.5 * s + 0.01;
    collinear.push_back({{x, y}, small_motion_point(th, rb, x, y)});
  }
  const LinearSystem sys = build_linear_system(collinear);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.A);
  const auto sv = svd.singularValues();
  CHECK(sv(0) / sv(sv.size() - 1) > 1e10);
  CHECK_FALSE(solve_sample(collinear).has_value());

  std::vector<Correspondence> repeated{good[0], good[0], good[1]};
  CHECK_FALSE(solve_sample(repeated).has_value());

  const auto two = exact_correspondences(Vec3(0.003, -0.001, 0.002), Vec3::Zero(), 2, 2);
  const auto r = solve_sample(two, false);
  REQUIRE(r.has_value());
  CHECK(max_abs(r->rotation - Vec3(0.003, -0.001, 0.002)) < 1e-10);
}

TEST_CASE("config validation and defaults") {
  Step1Config c;
  CHECK(c.ransac_iterations == 52);
  CHECK(c.sample_size == 3);
  CHECK_NOTHROW(validate(c));
  c.inlier_threshold_px = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.sample_size = 2;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c.estimate_translation = false;
  CHECK_NOTHROW(validate(c));
  c = {};
  c.ransac_iterations = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.nominal_inverse_depth = -1;
  CHECK_THROWS_AS(validate(c), ValidationError);
  CHECK(ransac_iterations_for_confidence(0.999, 0.5, 3) == 52);
}

TEST_CASE("RANSAC on outlier-free exact tracks") {
  const Vec3 th(0.006, -0.004, 0.003), rb(0.002, 0.001, 0.0003);
  auto seq = small_motion_sequence(20, 80, th, rb, 21);
  const RansacResult r = ransac_frame_pair(seq.tracks, 0, 19, Step1Config{});
  CHECK(r.inliers.size() == 80);
  CHECK(r.covisible == 80);
  CHECK(r.hypotheses == 52);
  CHECK(max_abs(r.motion.rotation - th) < 1e-8);
  CHECK(max_abs(r.motion.scaled_translation - rb) < 1e-8);
}

TEST_CASE("RANSAC needs three covisible tracks") {
  auto seq = small_motion_sequence(5, 2, Vec3(0.001, 0, 0), Vec3::Zero(), 2);
  CHECK_THROWS_AS(ransac_frame_pair(seq.tracks, 0, 4, Step1Config{}), RansacFailure);
  try {
    run_step1(seq.tracks, Step1Config{});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("step1: insufficient covisible tracks") != std::string::npos);
  }
}

TEST_CASE("RANSAC rejects outlier-dominated input") {
  auto seq = small_motion_sequence(10, 60, Vec3(0.004, 0.002, 0), Vec3(0.001, 0, 0), 17, 0.95);
  CHECK_THROWS_AS(ransac_frame_pair(seq.tracks, 0, 9, Step1Config{}), RansacFailure);
}

TEST_CASE("RANSAC with 30% outliers") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto seq = small_motion_sequence(20, 100, Vec3(0.005, -0.003, 0.002), Vec3(0.001, 0.002, 0.0002), 40 + s, 0.3);
    Step1Config cfg;
    cfg.rng_seed = s;
    const RansacResult r = ransac_frame_pair(seq.tracks, 0, 19, cfg);
    int tp = 0;
    for (std::size_t idx : r.inliers) tp += !seq.outlier[idx];
    CHECK(tp >= 67);
    CHECK(static_cast<double>(tp) / r.inliers.size() >= 0.95);
  }
}

TEST_CASE("all frames recovered on exact data") {
  const Vec3 th(0.008, 0.005, -0.004), rb(-0.002, 0.0015, 0.0005);
  auto seq = small_motion_sequence(20, 60, th, rb, 5);
  const SmallMotionEstimate e = run_step1(seq.tracks, Step1Config{});
  REQUIRE(e.frames.size() == 19);
  for (std::size_t k = 0; k < e.frames.size(); ++k) {
    CHECK(max_abs(e.frames[k].motion.rotation - seq.thetas[k]) < 1e-8);
    CHECK(max_abs(e.frames[k].motion.scaled_translation - seq.rbars[k]) < 1e-8);
    CHECK(e.frames[k].rms_residual_px < 1e-6);
  }
  const RansacResult r = ransac_frame_pair(seq.tracks, 0, 19, Step1Config{});
  CHECK(max_abs(e.frames.back().motion.rotation - r.motion.rotation) < 1e-12);
  CHECK(max_abs(e.frames.back().motion.scaled_translation - r.motion.scaled_translation) < 1e-12);
}

TEST_CASE("frame identical to the reference gives zero motion") {
  auto seq = small_motion_sequence(6, 40, Vec3(0.002, 0.001, 0), Vec3(0.001, 0, 0), 3);
  for (Track& t : seq.tracks.tracks) t.observations[2].pixel = t.observations[0].pixel;
  const SmallMotionEstimate e = run_step1(seq.tracks, Step1Config{});
  CHECK(max_abs(e.frames[1].motion.rotation) < 1e-12);
  CHECK(max_abs(e.frames[1].motion.scaled_translation) < 1e-12);
}

TEST_CASE("pure rotation gives zero scaled translation") {
  auto seq = small_motion_sequence(12, 50, Vec3(0.007, -0.003, 0.004), Vec3::Zero(), 12);
  const SmallMotionEstimate e = run_step1(seq.tracks, Step1Config{});
  for (const auto& f : e.frames) CHECK(f.motion.scaled_translation.norm() <= 1e-6);

  Step1Config ha;
  ha.estimate_translation = false;
  ha.sample_size = 2;
  const SmallMotionEstimate h = run_step1(seq.tracks, ha);
  CHECK(h.inliers.size() == 50);
  CHECK(max_abs(h.frames.back().motion.rotation - seq.thetas.back()) < 1e-8);
  CHECK(h.frames.back().motion.scaled_translation == Vec3::Zero());
}

TEST_CASE("principal-point equivariance") {
  auto seq = small_motion_sequence(10, 50, Vec3(0.004, 0.003, -0.002), Vec3(0.001, -0.001, 0.0002), 31, 0.2);
  FeatureTracks shifted = seq.tracks;
  const CameraModel& c = seq.tracks.camera;
  const double du = 12.5, dv = 72.25;
  for (Track& t : shifted.tracks)
    for (Observation& o : t.observations) {
      o.pixel.u += du;
      o.pixel.v += dv;
    }
  shifted.camera = CameraModel(c.fx(), c.fy(), c.cx() + du, c.cy() + dv, c.width() + 100, c.height() + 100);
  const auto a = run_step1(seq.tracks, Step1Config{});
  const auto b = run_step1(shifted, Step1Config{});
  CHECK(a.inliers == b.inliers);
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    CHECK(max_abs(a.frames[k].motion.rotation - b.frames[k].motion.rotation) < 1e-10);
    CHECK(max_abs(a.frames[k].motion.scaled_translation - b.frames[k].motion.scaled_translation) < 1e-10);
  }
}

TEST_CASE("nominal inverse depth does not affect step 1") {
  const Scene s = generate_scene(SceneConfig{});
  Step1Config a, b;
  a.inlier_threshold_px = b.inlier_threshold_px = 10.0;
  b.nominal_inverse_depth = 2 * a.nominal_inverse_depth;
  const auto ea = run_step1(s.tracks, a), eb = run_step1(s.tracks, b);
  CHECK(ea.inliers == eb.inliers);
  for (std::size_t k = 0; k < ea.frames.size(); ++k) {
    CHECK(ea.frames[k].motion.rotation == eb.frames[k].motion.rotation);
    CHECK(ea.frames[k].motion.scaled_translation == eb.frames[k].motion.scaled_translation);
    CHECK(ea.frames[k].rms_residual_px == eb.frames[k].rms_residual_px);
  }
}

TEST_CASE("serial and parallel RANSAC agree") {
  auto seq = small_motion_sequence(20, 150, Vec3(0.005, 0.004, 0.001), Vec3(0.001, 0.0005, 0.0001), 77, 0.4);
  Step1Config cfg;
  cfg.rng_seed = 99;
  const auto a = ransac_frame_pair(seq.tracks, 0, 19, cfg, Execution::serial);
  const auto b = ransac_frame_pair(seq.tracks, 0, 19, cfg, Execution::parallel);
  CHECK(a.inliers == b.inliers);
  CHECK(a.best_iteration == b.best_iteration);
  CHECK(a.motion.rotation == b.motion.rotation);
  CHECK(a.motion.scaled_translation == b.motion.scaled_translation);
  const auto c = ransac_frame_pair(seq.tracks, 0, 19, cfg, Execution::parallel);
  CHECK(c.inliers == b.inliers);
}

TEST_CASE("inlier sets grow with the threshold") {
  auto seq = small_motion_sequence(20, 120, Vec3(0.006, -0.002, 0.003), Vec3(0.0015, 0.001, 0.0002), 55, 0.3);
  Step1Config one, two;
  one.inlier_threshold_px = 1.0;
  two.inlier_threshold_px = 2.0;
  const auto a = ransac_frame_pair(seq.tracks, 0, 19, one);
  const auto b = ransac_frame_pair(seq.tracks, 0, 19, two);
  CHECK(std::includes(b.inliers.begin(), b.inliers.end(), a.inliers.begin(), a.inliers.end()));
}

TEST_CASE("adaptive stopping never runs fewer than the floor") {
  auto seq = small_motion_sequence(8, 80, Vec3(0.003, 0.001, 0), Vec3(0.001, 0, 0), 6, 0.5);
  Step1Config cfg;
  cfg.adaptive = true;
  const auto r = ransac_frame_pair(seq.tracks, 0, 7, cfg);
  CHECK(r.hypotheses >= 52);
  CHECK(r.hypotheses <= cfg.max_adaptive_iterations);
}

TEST_CASE("quantization sensitivity of the small-motion model") {
  // Integer rounding of exactly model-consistent tracks.
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto seq = small_motion_sequence(20, 200, Vec3(0.02, -0.015, 0.01), Vec3(0.01, 0.008, 0.0005), 1000 + s);
    for (Track& t : seq.tracks.tracks)
      for (Observation& o : t.observations) o.pixel = {std::nearbyint(o.pixel.u), std::nearbyint(o.pixel.v)};
    const auto e = run_step1(seq.tracks, Step1Config{});
    for (std::size_t k = 0; k < e.frames.size(); ++k)
      worst = std::max(worst, (e.frames[k].motion.rotation - seq.thetas[k]).norm() * 180.0 / std::numbers::pi);
  }
  MESSAGE("worst step-1 rotation error under rounding: " << worst << " deg");
  CHECK(worst <= 0.6);
}
