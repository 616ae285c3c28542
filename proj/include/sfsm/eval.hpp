#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfsm/pipeline.hpp"
#include "sfsm/step3.hpp"
#include "sfsm/synth.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

/// Estimate and truth, each normalized so that the last translation has unit
/// length. Normalized values are canonicalized to 24 significant bits so that
/// a rescaled estimate normalizes to the same bits.
struct AlignedSolution {
  std::vector<Mat3> rotations;  // frames 0..n
  std::vector<Vec3> translations;
  std::vector<Mat3> true_rotations;
  std::vector<Vec3> true_translations;
  std::vector<std::int64_t> landmark_ids;  // retained landmarks present in the truth
  std::vector<double> depths;              // reference-frame Z, normalized
  std::vector<double> true_depths;
  double estimate_scale = 1.0;  // ||r_n|| before normalization
  double truth_scale = 1.0;
  bool steps_converged = true;
};

/// Throws DegenerateScale when either ||r_n|| < 1e-12, ValidationError when
/// frame counts disagree.
AlignedSolution align_and_scale(const InitializationSolution& est, const SceneTruth& truth);

struct ErrorReport {
  double rms_ate = 0.0;
  double rms_are_deg = 0.0;
  double rms_depth = 0.0;
  std::vector<Vec3> ate;  // frames 1..n
  std::vector<Vec3> are;  // rotation vectors in degrees, frames 1..n
  std::vector<double> depth_errors;
  std::size_t retained_landmarks = 0;
  bool steps_converged = false;
  bool success = false;
};

/// sqrt(sum ||e||^2 / N); zero for an empty set.
double rms(const std::vector<Vec3>& errors);
double rms(const std::vector<double>& errors);

/// Success is left false; see classify_success.
ErrorReport compute_errors(const AlignedSolution& aligned);

bool classify_success(const ErrorReport& report, const SuccessThresholds& thresholds);

struct SequenceInput {
  std::string name;
  std::uint64_t seed = 0;
  FeatureTracks tracks;
  SceneTruth truth;
};

struct SequenceResult {
  std::string name;
  std::uint64_t seed = 0;
  Variant variant = Variant::proposed;
  bool success = false;
  bool evaluated = false;  // errors below are meaningful
  ErrorReport errors;
  StepTimes times;
  int step1_hypotheses = 0;
  int step2_iterations = 0;
  int step3_iterations = 0;
  std::string step2_termination = "none";
  std::string step3_termination = "none";
  std::string failed_stage = "none";
  std::string message;
  int cheirality_violations = 0;
  bool costs_monotone = true;  // accepted-step traces non-increasing in both solves
};

struct BenchmarkSummary {
  Variant variant = Variant::proposed;
  PipelineConfig config;
  std::size_t n_sequences = 0;
  std::size_t n_successful = 0;
  double success_rate = 0.0;  // percent
  // Means over successful sequences; NaN when none succeeded.
  double mean_rms_ate = 0.0;
  double mean_rms_are_deg = 0.0;
  double mean_rms_depth = 0.0;
  // Means over all sequences that reached the step.
  double mean_time_step1 = 0.0;
  double mean_time_step2 = 0.0;
  double mean_time_step3 = 0.0;
  std::vector<SequenceResult> rows;
};

struct BenchmarkOptions {
  int jobs = 0;  // 0 = OpenMP default
  int timing_repeats = 1;  // per-step time is the median over repeats
};

/// Runs every variant on every sequence. Per-sequence failures are recorded
/// in rows. Throws ValidationError on an empty sequence list.
std::vector<BenchmarkSummary> run_benchmark(const std::vector<SequenceInput>& sequences,
                                            const std::vector<PipelineConfig>& variants,
                                            const BenchmarkOptions& options = {});

/// Evaluates one pipeline run against the truth.
SequenceResult evaluate_run(const PipelineResult& run, const SceneTruth& truth, const PipelineConfig& cfg);

/// Recomputes the summary statistics from rows.
void summarize(BenchmarkSummary& s);

/// Deterministic per-sequence rows (no wall-clock fields).
std::string format_results_csv(const BenchmarkSummary& s);
/// Wall-clock per step per sequence.
std::string format_timing_csv(const BenchmarkSummary& s);
/// JSON summary covering every variant, with config and criterion echo.
std::string format_summary_json(const std::vector<BenchmarkSummary>& summaries);

/// Table with one row per variant, rendered from a summary JSON document.
/// Throws ValidationError on schema mismatch.
std::string render_report(const std::string& summary_json);

}  // namespace sfsm
