#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sfsm/geometry.hpp"

namespace sfsm {

struct Observation {
  int frame = 0;
  PixelPoint pixel;
  bool operator==(const Observation&) const = default;
};

/// One landmark's measurements; observations are contiguous and start at frame 0.
struct Track {
  std::int64_t id = 0;
  std::vector<Observation> observations;

  int last_frame() const { return observations.empty() ? -1 : observations.back().frame; }
  bool observed_in(int frame) const { return frame >= 0 && frame <= last_frame(); }
  /// Valid only when observed_in(frame); relies on contiguity.
  const PixelPoint& at(int frame) const { return observations[static_cast<std::size_t>(frame)].pixel; }

  bool operator==(const Track&) const = default;
};

struct FeatureTracks {
  CameraModel camera{1.0, 1.0, 0.0, 0.0, 1, 1};
  int n_frames = 0;  // frames 0..n_frames-1, frame 0 is the reference
  std::vector<Track> tracks;
  std::vector<double> timestamps;  // optional, seconds
  std::string provenance;          // optional
  std::optional<std::uint64_t> seed;

  int last_frame() const { return n_frames - 1; }
  bool operator==(const FeatureTracks&) const = default;
};

/// Structural checks: non-empty, unique ids, frame-0 anchoring, strictly
/// increasing contiguous frames, pixels inside the image. Throws ValidationError.
void validate_tracks(const FeatureTracks& tracks);

FeatureTracks parse_tracks(std::istream& in);
void format_tracks(const FeatureTracks& tracks, std::ostream& out);

FeatureTracks read_tracks(const std::filesystem::path& path);
void write_tracks(const FeatureTracks& tracks, const std::filesystem::path& path);

/// Sorted indices (into tracks.tracks) of tracks observed in both frames.
std::vector<std::size_t> covisible_subset(const FeatureTracks& tracks, int frame_a, int frame_b);

}  // namespace sfsm
