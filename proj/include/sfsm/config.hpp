#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "sfsm/pipeline.hpp"
#include "sfsm/synth.hpp"

namespace sfsm {

using Json = nlohmann::ordered_json;

/// Scene family plus the sequence count and master seed used by `generate`.
struct GenerateConfig {
  SceneConfig scene;
  int n_sequences = 1;
  std::uint64_t master_seed = 42;
};

// Every *_to_json emits all fields; every *_from_json starts from the
// defaults, overrides the fields present, rejects unknown keys and
// validates. Errors are ValidationError naming the field.
Json scene_to_json(const SceneConfig& c);
SceneConfig scene_from_json(const Json& j);

Json generate_to_json(const GenerateConfig& c);
GenerateConfig generate_from_json(const Json& j);

Json pipeline_to_json(const PipelineConfig& c);
PipelineConfig pipeline_from_json(const Json& j);

Json thresholds_to_json(const SuccessThresholds& t);
SuccessThresholds thresholds_from_json(const Json& j);

/// Parses a JSON file; ParseError on malformed text, IoError when unreadable.
Json read_json_file(const std::filesystem::path& path);
Json parse_json(const std::string& text, const std::string& what);

std::string version_string();

}  // namespace sfsm
