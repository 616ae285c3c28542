#include "sfsm/tracks.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sfsm/errors.hpp"
#include "sfsm/io.hpp"

namespace sfsm {

namespace {

constexpr const char* kMagic = "SFSM-TRACKS v1";

[[noreturn]] void fail_track(std::size_t index, std::int64_t id, const std::string& why) {
  throw ValidationError("track " + std::to_string(index) + " (id " + std::to_string(id) + "): " + why);
}

}  // namespace

void validate_tracks(const FeatureTracks& t) {
  if (t.n_frames < 2) throw ValidationError("tracks: need at least two frames");
  if (t.tracks.empty()) throw ValidationError("tracks: empty track list");
  if (!t.timestamps.empty() && static_cast<int>(t.timestamps.size()) != t.n_frames)
    throw ValidationError("tracks: timestamp count does not match frame count");
  std::set<std::int64_t> ids;
  for (std::size_t k = 0; k < t.tracks.size(); ++k) {
    const Track& tr = t.tracks[k];
    if (!ids.insert(tr.id).second) fail_track(k, tr.id, "duplicate id");
    if (tr.observations.empty() || tr.observations.front().frame != 0)
      fail_track(k, tr.id, "missing frame-0 observation");
    for (std::size_t o = 0; o < tr.observations.size(); ++o) {
      const Observation& ob = tr.observations[o];
      if (o > 0 && ob.frame <= tr.observations[o - 1].frame)
        fail_track(k, tr.id, "frames not strictly increasing");
      if (ob.frame != static_cast<int>(o)) fail_track(k, tr.id, "gap in observed frames");
      if (ob.frame >= t.n_frames) fail_track(k, tr.id, "frame index out of range");
      if (!std::isfinite(ob.pixel.u) || !std::isfinite(ob.pixel.v))
        fail_track(k, tr.id, "non-finite pixel coordinate");
      if (!t.camera.contains(ob.pixel)) fail_track(k, tr.id, "pixel outside image bounds");
    }
  }
}

FeatureTracks parse_tracks(std::istream& in) {
  LineReader reader(in, "tracks");
  if (reader.next_line() != kMagic) reader.fail("expected header '" + std::string(kMagic) + "'");

  FeatureTracks t;
  bool have_camera = false, have_frames = false;
  std::size_t declared_tracks = 0;
  // Header keys until "tracks".
  while (true) {
    std::istringstream ls(reader.next_line());
    std::string key;
    ls >> key;
    if (key == "provenance") {
      std::getline(ls >> std::ws, t.provenance);
    } else if (key == "seed") {
      std::uint64_t s;
      if (!(ls >> s)) reader.fail("bad seed");
      t.seed = s;
    } else if (key == "camera") {
      double fx, fy, cx, cy;
      int w, h;
      if (!(ls >> fx >> fy >> cx >> cy >> w >> h)) reader.fail("bad camera line");
      try {
        t.camera = CameraModel(fx, fy, cx, cy, w, h);
      } catch (const ValidationError& e) {
        reader.fail(e.what());
      }
      have_camera = true;
    } else if (key == "frames") {
      if (!(ls >> t.n_frames)) reader.fail("bad frame count");
      have_frames = true;
    } else if (key == "timestamps") {
      double ts;
      while (ls >> ts) t.timestamps.push_back(ts);
    } else if (key == "tracks") {
      if (!(ls >> declared_tracks)) reader.fail("bad track count");
      break;
    } else {
      reader.fail("unknown header key '" + key + "'");
    }
    reader.expect_end(ls);
  }
  if (!have_camera || !have_frames) reader.fail("header missing camera or frames");

  while (reader.has_line()) {
    std::istringstream ls(reader.next_line());
    std::string first;
    ls >> first;
    if (first == "track") {
      Track tr;
      if (!(ls >> tr.id)) reader.fail("bad track id");
      reader.expect_end(ls);
      t.tracks.push_back(std::move(tr));
      continue;
    }
    if (t.tracks.empty()) reader.fail("observation before first track line");
    Observation ob;
    try {
      std::size_t used = 0;
      ob.frame = std::stoi(first, &used);
      if (used != first.size()) throw std::invalid_argument(first);
    } catch (const std::exception&) {
      reader.fail("bad frame index '" + first + "'");
    }
    if (!(ls >> ob.pixel.u >> ob.pixel.v)) reader.fail("bad observation");
    reader.expect_end(ls);
    t.tracks.back().observations.push_back(ob);
  }
  if (t.tracks.size() != declared_tracks)
    throw ParseError("tracks: header declares " + std::to_string(declared_tracks) + " tracks, body has " +
                     std::to_string(t.tracks.size()));
  validate_tracks(t);
  return t;
}

void format_tracks(const FeatureTracks& t, std::ostream& out) {
  out << kMagic << '\n';
  if (!t.provenance.empty()) out << "provenance " << t.provenance << '\n';
  if (t.seed) out << "seed " << *t.seed << '\n';
  const CameraModel& c = t.camera;
  out << "camera " << fmt17(c.fx()) << ' ' << fmt17(c.fy()) << ' ' << fmt17(c.cx()) << ' ' << fmt17(c.cy())
      << ' ' << c.width() << ' ' << c.height() << '\n';
  out << "frames " << t.n_frames << '\n';
  if (!t.timestamps.empty()) {
    out << "timestamps";
    for (double ts : t.timestamps) out << ' ' << fmt17(ts);
    out << '\n';
  }
  out << "tracks " << t.tracks.size() << '\n';
  for (const Track& tr : t.tracks) {
    out << "track " << tr.id << '\n';
    for (const Observation& ob : tr.observations)
      out << ob.frame << ' ' << fmt17(ob.pixel.u) << ' ' << fmt17(ob.pixel.v) << '\n';
  }
}

FeatureTracks read_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_tracks(in);
}

void write_tracks(const FeatureTracks& tracks, const std::filesystem::path& path) {
  validate_tracks(tracks);
  std::ostringstream buf;
  format_tracks(tracks, buf);
  write_text_file(path, buf.str());
}

std::vector<std::size_t> covisible_subset(const FeatureTracks& tracks, int frame_a, int frame_b) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < tracks.tracks.size(); ++k) {
    const Track& tr = tracks.tracks[k];
    if (tr.observed_in(frame_a) && tr.observed_in(frame_b)) out.push_back(k);
  }
  return out;
}

}  // namespace sfsm
