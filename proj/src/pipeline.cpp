#include "sfsm/pipeline.hpp"

#include <chrono>

#include "sfsm/errors.hpp"

namespace sfsm {

std::string to_string(Variant v) { return v == Variant::proposed ? "proposed" : "ha-baseline"; }

std::vector<std::string> variant_names() { return {"proposed", "ha-baseline"}; }

Variant variant_from_string(const std::string& s) {
  if (s == "proposed") return Variant::proposed;
  if (s == "ha-baseline") return Variant::ha_baseline;
  throw ValidationError("unknown variant '" + s + "' (valid: proposed, ha-baseline)");
}

void validate(const SuccessThresholds& t) {
  if (!(t.ate > 0.0)) throw ValidationError("thresholds.ate must be positive");
  if (!(t.are_deg > 0.0)) throw ValidationError("thresholds.are_deg must be positive");
  if (!(t.depth > 0.0)) throw ValidationError("thresholds.depth must be positive");
}

PipelineConfig resolve_variant(PipelineConfig cfg) {
  cfg.step1.nominal_inverse_depth = cfg.nominal_inverse_depth;
  if (cfg.variant == Variant::ha_baseline) {
    cfg.step1.estimate_translation = false;
    cfg.step1.sample_size = 2;
  }
  return cfg;
}

void validate(const PipelineConfig& cfg) {
  if (!(cfg.nominal_inverse_depth > 0.0)) throw ValidationError("nominal_inverse_depth must be positive");
  if (!(cfg.softplus.alpha > 0.0)) throw ValidationError("softplus.alpha must be positive");
  if (!(cfg.depth_clamp_floor > 0.0)) throw ValidationError("depth_clamp_floor must be positive");
  validate(cfg.step1);
  validate(cfg.lm);
  validate(cfg.thresholds);
}

namespace {

InverseDepthModel depth_model(const PipelineConfig& cfg) {
  InverseDepthModel m;
  m.kind = cfg.variant == Variant::proposed ? DepthParameterization::softplus : DepthParameterization::clamped;
  m.softplus = cfg.softplus;
  m.clamp_floor = cfg.depth_clamp_floor;
  return m;
}

}  // namespace

Step2Config step2_config(const PipelineConfig& cfg) {
  Step2Config s;
  s.nominal_inverse_depth = cfg.nominal_inverse_depth;
  s.depth = depth_model(cfg);
  return s;
}

Step3Config step3_config(const PipelineConfig& cfg) {
  Step3Config s;
  s.landmark_model =
      cfg.variant == Variant::proposed ? LandmarkModel::azimuth_elevation : LandmarkModel::anchored_inverse_depth;
  s.depth = depth_model(cfg);
  return s;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::none: return "none";
    case Stage::step1: return "step1";
    case Stage::step2: return "step2";
    case Stage::step3: return "step3";
  }
  return "none";
}

bool PipelineResult::converged() const {
  return ok() && step2 && solution && sfsm::converged(step2->report.termination) &&
         sfsm::converged(solution->report.termination);
}

PipelineResult run_pipeline(const FeatureTracks& tracks, const PipelineConfig& input, Execution exec) {
  const PipelineConfig cfg = resolve_variant(input);
  validate(cfg);
  PipelineResult out;
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

  auto t0 = Clock::now();
  try {
    out.step1 = run_step1(tracks, cfg.step1, exec);
  } catch (const Error& e) {
    out.failed_stage = Stage::step1;
    out.message = e.what();
  }
  auto t1 = Clock::now();
  out.times.step1 = seconds(t0, t1);
  if (!out.ok()) return out;

  try {
    Step2Problem p2 = init_step2(*out.step1, tracks, step2_config(cfg));
    out.step2 = solve_step2(p2, cfg.lm, exec);
  } catch (const Error& e) {
    out.failed_stage = Stage::step2;
    out.message = e.what();
  }
  auto t2 = Clock::now();
  out.times.step2 = seconds(t1, t2);
  if (!out.ok()) return out;

  try {
    Step3Problem p3 = init_step3(*out.step1, *out.step2, tracks, step3_config(cfg));
    out.solution = solve_step3(p3, cfg.lm, exec);
  } catch (const Error& e) {
    out.failed_stage = Stage::step3;
    out.message = e.what();
  }
  out.times.step3 = seconds(t2, Clock::now());
  return out;
}

}  // namespace sfsm
