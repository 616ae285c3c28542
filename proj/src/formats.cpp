#include "sfsm/formats.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Geometry>

#include "sfsm/config.hpp"
#include "sfsm/errors.hpp"
#include "sfsm/io.hpp"

namespace sfsm {

Eigen::Vector4d rotation_to_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0.0) out = -out;
  return out;
}

Mat3 quaternion_to_rotation(const Eigen::Vector4d& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

namespace {

void put_pose(std::ostringstream& os, std::size_t i, const Mat3& R, const Vec3& t) {
  const Eigen::Vector4d q = rotation_to_quaternion(R);
  os << "pose " << i;
  for (int k = 0; k < 4; ++k) os << ' ' << fmt17(q[k]);
  for (int k = 0; k < 3; ++k) os << ' ' << fmt17(t[k]);
  os << '\n';
}

void put_report(std::ostringstream& os, const char* step, const SolveReport& r, double rms0, double rms1,
                int violations) {
  os << step << " initial_cost " << fmt17(r.initial_cost) << " final_cost " << fmt17(r.final_cost)
     << " iterations " << r.iterations << " accepted " << r.accepted_steps << " termination "
     << to_string(r.termination) << " initial_rms_px " << fmt17(rms0) << " final_rms_px " << fmt17(rms1)
     << " cheirality_violations " << violations << '\n';
}

}  // namespace

std::string format_solution(const PipelineResult& res, const PipelineConfig& cfg) {
  if (!res.solution || !res.step1 || !res.step2) throw ValidationError("solution: pipeline result is incomplete");
  const InitializationSolution& s = *res.solution;
  std::ostringstream os;
  os << "SFSM-SOLUTION v1\n";
  os << "version " << version_string() << '\n';
  os << "config " << pipeline_to_json(resolve_variant(cfg)).dump() << '\n';
  os << "landmark_model " << to_string(s.landmark_model) << '\n';
  os << "frames " << s.poses.size() << '\n';
  for (std::size_t i = 0; i < s.poses.size(); ++i) put_pose(os, i, s.poses[i].rotation, s.poses[i].translation);
  os << "landmarks " << s.landmarks.size() << '\n';
  for (const LandmarkEstimate& l : s.landmarks) {
    os << "landmark " << l.track_id << ' ' << fmt17(l.omega) << ' ' << fmt17(l.psi) << ' ' << fmt17(l.phi);
    for (int k = 0; k < 3; ++k) os << ' ' << fmt17(l.point[k]);
    os << '\n';
  }
  os << "dropped " << s.dropped_track_ids.size();
  for (auto id : s.dropped_track_ids) os << ' ' << id;
  os << '\n';
  os << "diagnostics\n";
  os << "step1 hypotheses " << res.step1->hypotheses << " inliers " << res.step1->inliers.size() << " covisible "
     << res.step1->covisible << '\n';
  put_report(os, "step2", res.step2->report, res.step2->initial_rms_px, res.step2->final_rms_px,
             res.step2->cheirality_violations);
  put_report(os, "step3", s.report, s.initial_rms_px, s.final_rms_px, s.cheirality_violations);
  for (std::size_t i = 0; i < s.poses.size(); ++i)
    os << "frame_rms " << i << ' ' << fmt17(s.poses[i].rms_residual_px) << ' ' << s.poses[i].observations << '\n';
  for (const LandmarkEstimate& l : s.landmarks)
    os << "landmark_rms " << l.track_id << ' ' << fmt17(l.rms_residual_px) << ' ' << l.observations << '\n';
  os << "end\n";
  return os.str();
}

void write_solution(const std::filesystem::path& path, const PipelineResult& result, const PipelineConfig& cfg) {
  write_text_file(path, format_solution(result, cfg));
}

std::string format_truth(const SceneTruth& t) {
  std::ostringstream os;
  os << "SFSM-TRUTH v1\n";
  os << "version " << version_string() << '\n';
  os << "seed " << t.seed << '\n';
  os << "parallax_deg " << fmt17(t.parallax_deg) << '\n';
  os << "config " << scene_to_json(t.config).dump() << '\n';
  os << "frames " << t.rotations.size() << '\n';
  for (std::size_t i = 0; i < t.rotations.size(); ++i) put_pose(os, i, t.rotations[i], t.translations[i]);
  os << "landmarks " << t.landmarks.size() << '\n';
  for (std::size_t j = 0; j < t.landmarks.size(); ++j) {
    os << "landmark " << t.landmark_ids[j];
    for (int k = 0; k < 3; ++k) os << ' ' << fmt17(t.landmarks[j][k]);
    os << ' ' << (t.outlier[j] ? 1 : 0) << '\n';
  }
  return os.str();
}

SceneTruth parse_truth(std::istream& in, const std::string& what) {
  LineReader lr(in, what);
  SceneTruth t;
  auto line = [&](const std::string& key) {
    if (!lr.has_line()) lr.fail("unexpected end of file, expected '" + key + "'");
    std::istringstream ls(lr.next_line());
    std::string k;
    ls >> k;
    if (k != key) lr.fail("expected '" + key + "', found '" + k + "'");
    return ls;
  };
  if (!lr.has_line() || lr.next_line() != "SFSM-TRUTH v1") lr.fail("missing SFSM-TRUTH v1 header");
  {
    auto ls = line("version");
  }
  {
    auto ls = line("seed");
    if (!(ls >> t.seed)) lr.fail("bad seed");
    lr.expect_end(ls);
  }
  {
    auto ls = line("parallax_deg");
    if (!(ls >> t.parallax_deg)) lr.fail("bad parallax_deg");
    lr.expect_end(ls);
  }
  {
    auto ls = line("config");
    std::string rest;
    std::getline(ls, rest);
    try {
      t.config = scene_from_json(parse_json(rest, what));
    } catch (const Error& e) {
      lr.fail(e.what());
    }
  }
  std::size_t n = 0;
  {
    auto ls = line("frames");
    if (!(ls >> n) || n < 1) lr.fail("bad frame count");
    lr.expect_end(ls);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto ls = line("pose");
    std::size_t idx = 0;
    Eigen::Vector4d q;
    Vec3 r;
    if (!(ls >> idx >> q[0] >> q[1] >> q[2] >> q[3] >> r[0] >> r[1] >> r[2]) || idx != i) lr.fail("bad pose row");
    lr.expect_end(ls);
    t.rotations.push_back(i == 0 ? Mat3::Identity() : quaternion_to_rotation(q));
    t.translations.push_back(r);
  }
  std::size_t m = 0;
  {
    auto ls = line("landmarks");
    if (!(ls >> m)) lr.fail("bad landmark count");
    lr.expect_end(ls);
  }
  for (std::size_t j = 0; j < m; ++j) {
    auto ls = line("landmark");
    std::int64_t id = 0;
    Vec3 p;
    int label = 0;
    if (!(ls >> id >> p[0] >> p[1] >> p[2] >> label) || (label != 0 && label != 1)) lr.fail("bad landmark row");
    lr.expect_end(ls);
    t.landmark_ids.push_back(id);
    t.landmarks.push_back(p);
    t.outlier.push_back(label == 1);
  }
  if (lr.has_line()) lr.fail("trailing content");
  return t;
}

void write_truth(const SceneTruth& truth, const std::filesystem::path& path) {
  write_text_file(path, format_truth(truth));
}

SceneTruth read_truth(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return parse_truth(in, path.string());
}

}  // namespace sfsm
