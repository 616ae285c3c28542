// Serial reference kernels against their OpenMP versions.
//   sfsm_bench [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include <omp.h>

#include "sfsm/kernels.hpp"
#include "sfsm/pipeline.hpp"
#include "sfsm/step2.hpp"
#include "sfsm/step3.hpp"
#include "sfsm/synth.hpp"

using namespace sfsm;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double median_seconds(int repeats, F&& f) {
  std::vector<double> t;
  for (int k = 0; k < repeats; ++k) {
    const auto t0 = Clock::now();
    f();
    t.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s %12.6f %12.6f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
              same ? "identical" : "DIFFERENT");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
  SceneConfig sc;
  sc.n_landmarks = 2000;
  const Scene scene = generate_scene(sc);
  const CameraModel& cam = scene.tracks.camera;

  std::printf("threads %d, repeats %d, %zu tracks\n", omp_get_max_threads(), repeats, scene.tracks.tracks.size());
  std::printf("%-28s %12s %12s %9s\n", "kernel", "serial s", "openmp s", "speedup");

  // Hypothesis scoring on frame pair (0, last).
  std::vector<NormalizedPoint> ref;
  std::vector<PixelPoint> meas;
  const int last = scene.tracks.last_frame();
  for (const Track& t : scene.tracks.tracks)
    if (t.observed_in(last)) {
      ref.push_back(pixel_to_camera(cam, t.at(0)));
      meas.push_back(t.at(last));
    }
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.01);
  std::vector<kernels::Hypothesis> hyp(2000);
  for (auto& h : hyp) h = {{Vec3(g(rng), g(rng), g(rng)), Vec3(g(rng), g(rng), g(rng))}, true};
  std::vector<kernels::HypothesisScore> a, b;
  const double s1 = median_seconds(repeats, [&] { a = kernels::score_hypotheses_serial(hyp, ref, meas, cam, 2.0); });
  const double p1 = median_seconds(repeats, [&] { b = kernels::score_hypotheses_parallel(hyp, ref, meas, cam, 2.0); });
  bool same = a.size() == b.size();
  for (std::size_t k = 0; same && k < a.size(); ++k)
    same = a[k].inliers == b[k].inliers && a[k].sum_sq_px == b[k].sum_sq_px;
  row("score_hypotheses", s1, p1, same);

  // Residual and Jacobian evaluation on the step-2 and step-3 problems.
  PipelineConfig cfg;
  cfg.step1.inlier_threshold_px = 10.0;
  const SmallMotionEstimate e = run_step1(scene.tracks, cfg.step1);
  Step2Problem p2 = init_step2(e, scene.tracks, step2_config(cfg));
  const Step2Solution s2 = solve_step2(p2, cfg.lm);
  const Step3Problem p3 = init_step3(e, s2, scene.tracks, step3_config(cfg));
  for (const auto& [name, problem] : {std::pair<const char*, const Problem*>{"evaluate_residuals step2", &p2.problem},
                                      {"evaluate_residuals step3", &p3.problem}}) {
    auto sa = kernels::make_evaluation_storage(*problem);
    auto sb = kernels::make_evaluation_storage(*problem);
    const double s = median_seconds(repeats, [&] { kernels::evaluate_residuals_serial(*problem, true, sa); });
    const double p = median_seconds(repeats, [&] { kernels::evaluate_residuals_parallel(*problem, true, sb); });
    bool eq = true;
    for (std::size_t k = 0; eq && k < sa.size(); ++k) {
      eq = sa[k].residual == sb[k].residual;
      for (std::size_t j = 0; eq && j < sa[k].jacobians.size(); ++j) eq = sa[k].jacobians[j] == sb[k].jacobians[j];
    }
    row(name, s, p, eq);
  }

  // Whole step-3 solve with each path.
  LmConfig lm = cfg.lm;
  lm.max_iterations = 20;
  Step3Problem q3a = p3, q3b = p3;
  const double s3 = median_seconds(1, [&] { solve_step3(q3a, lm, Execution::serial); });
  const double t3 = median_seconds(1, [&] { solve_step3(q3b, lm, Execution::parallel); });
  bool eq3 = true;
  for (std::size_t k = 0; k < q3a.problem.blocks().size(); ++k)
    eq3 = eq3 && q3a.problem.blocks()[k].value == q3b.problem.blocks()[k].value;
  row("solve_step3 (20 iterations)", s3, t3, eq3);
  return 0;
}
