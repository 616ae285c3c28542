#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "sfsm/pipeline.hpp"
#include "sfsm/synth.hpp"

namespace sfsm {

/// Rotation as a unit quaternion (w, x, y, z) with w >= 0.
Eigen::Vector4d rotation_to_quaternion(const Mat3& R);
Mat3 quaternion_to_rotation(const Eigen::Vector4d& q);

/// SFSM-SOLUTION v1: header with version and resolved config, one pose row
/// per frame, one row per landmark, a diagnostics block per step. The result
/// must hold a solution.
std::string format_solution(const PipelineResult& result, const PipelineConfig& cfg);
void write_solution(const std::filesystem::path& path, const PipelineResult& result, const PipelineConfig& cfg);

/// SFSM-TRUTH v1: version, seed, parallax, scene config, poses, landmarks with
/// outlier labels.
std::string format_truth(const SceneTruth& truth);
SceneTruth parse_truth(std::istream& in, const std::string& what = "truth");
void write_truth(const SceneTruth& truth, const std::filesystem::path& path);
SceneTruth read_truth(const std::filesystem::path& path);

}  // namespace sfsm
