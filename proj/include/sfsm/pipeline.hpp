#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"
#include "sfsm/optimizer.hpp"
#include "sfsm/step1.hpp"
#include "sfsm/step2.hpp"
#include "sfsm/step3.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

enum class Variant { proposed, ha_baseline };

std::string to_string(Variant v);
/// Throws ValidationError listing the valid names.
Variant variant_from_string(const std::string& s);
std::vector<std::string> variant_names();

struct SuccessThresholds {
  double ate = 1.0;      // normalized translation units
  double are_deg = 1.0;  // degrees
  double depth = 2.0;    // normalized depth units
};

void validate(const SuccessThresholds& t);

struct PipelineConfig {
  Variant variant = Variant::proposed;
  /// Shared nominal inverse depth (1/m) used by steps 1 and 2.
  double nominal_inverse_depth = 0.01;
  Step1Config step1;
  SoftPlusParams softplus;
  double depth_clamp_floor = 1e-10;
  LmConfig lm;
  SuccessThresholds thresholds;
};

/// Applies the variant's forced settings. The baseline drops the translation
/// columns of the step-1 system (two-point samples), replaces soft-plus with a
/// clamped raw inverse depth and uses anchored w = 1/Z landmarks without
/// direction priors.
PipelineConfig resolve_variant(PipelineConfig cfg);

/// Throws ValidationError naming the field.
void validate(const PipelineConfig& cfg);

Step2Config step2_config(const PipelineConfig& cfg);
Step3Config step3_config(const PipelineConfig& cfg);

enum class Stage { none, step1, step2, step3 };
std::string to_string(Stage s);

struct StepTimes {
  double step1 = 0.0;  // seconds
  double step2 = 0.0;
  double step3 = 0.0;
};

struct PipelineResult {
  Stage failed_stage = Stage::none;
  std::string message;
  std::optional<SmallMotionEstimate> step1;
  std::optional<Step2Solution> step2;
  std::optional<InitializationSolution> solution;
  StepTimes times;

  bool ok() const { return failed_stage == Stage::none; }
  /// True when both optimizer stages ended in a converged state.
  bool converged() const;
};

/// Runs steps 1 to 3 on the given tracks. Stage errors are captured in the
/// result, never thrown. The config is resolved before use.
PipelineResult run_pipeline(const FeatureTracks& tracks, const PipelineConfig& cfg,
                            Execution exec = Execution::parallel);

}  // namespace sfsm
