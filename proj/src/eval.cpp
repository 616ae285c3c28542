#include "sfsm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "sfsm/config.hpp"
#include "sfsm/errors.hpp"
#include "sfsm/io.hpp"

namespace sfsm {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kMinScale = 1e-12;

// Rounds the significand to 24 bits. Rescaling an estimate perturbs its
// normalized values by a few ulps; rounding far above that level makes the
// normalized values, and everything computed from them, independent of scale.
double canonical(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  int e = 0;
  const double m = std::frexp(x, &e);
  return std::ldexp(std::nearbyint(std::ldexp(m, 24)), e - 24);
}

Vec3 canonical(const Vec3& v) { return Vec3(canonical(v.x()), canonical(v.y()), canonical(v.z())); }

}  // namespace

AlignedSolution align_and_scale(const InitializationSolution& est, const SceneTruth& truth) {
  const std::size_t n = truth.rotations.size();
  if (est.poses.size() != n || truth.translations.size() != n || n < 2)
    throw ValidationError("eval: estimate has " + std::to_string(est.poses.size()) + " frames, truth has " +
                          std::to_string(n));
  AlignedSolution a;
  a.estimate_scale = est.poses.back().translation.norm();
  a.truth_scale = truth.translations.back().norm();
  if (!(a.estimate_scale >= kMinScale)) throw DegenerateScale("eval: estimated last translation is degenerate");
  if (!(a.truth_scale >= kMinScale)) throw DegenerateScale("eval: true last translation is degenerate");
  for (std::size_t i = 0; i < n; ++i) {
    a.rotations.push_back(est.poses[i].rotation);
    a.translations.push_back(canonical(Vec3(est.poses[i].translation / a.estimate_scale)));
    a.true_rotations.push_back(truth.rotations[i]);
    a.true_translations.push_back(canonical(Vec3(truth.translations[i] / a.truth_scale)));
  }
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t j = 0; j < truth.landmark_ids.size(); ++j) index.emplace(truth.landmark_ids[j], j);
  for (const LandmarkEstimate& l : est.landmarks) {
    auto it = index.find(l.track_id);
    if (it == index.end()) continue;
    a.landmark_ids.push_back(l.track_id);
    a.depths.push_back(canonical(l.point.z() / a.estimate_scale));
    a.true_depths.push_back(canonical(truth.landmarks[it->second].z() / a.truth_scale));
  }
  a.steps_converged = converged(est.report.termination);
  return a;
}

double rms(const std::vector<Vec3>& e) {
  if (e.empty()) return 0.0;
  double s = 0.0;
  for (const Vec3& v : e) s += v.squaredNorm();
  return std::sqrt(s / static_cast<double>(e.size()));
}

double rms(const std::vector<double>& e) {
  if (e.empty()) return 0.0;
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s / static_cast<double>(e.size()));
}

ErrorReport compute_errors(const AlignedSolution& a) {
  ErrorReport r;
  for (std::size_t i = 1; i < a.rotations.size(); ++i) {
    r.ate.push_back(a.rotations[i].transpose() * a.translations[i] -
                    a.true_rotations[i].transpose() * a.true_translations[i]);
    r.are.push_back(rotation_log(a.true_rotations[i] * a.rotations[i].transpose()) * kRadToDeg);
  }
  for (std::size_t j = 0; j < a.depths.size(); ++j) r.depth_errors.push_back(a.depths[j] - a.true_depths[j]);
  r.rms_ate = rms(r.ate);
  r.rms_are_deg = rms(r.are);
  r.rms_depth = rms(r.depth_errors);
  r.retained_landmarks = a.depths.size();
  r.steps_converged = a.steps_converged;
  return r;
}

bool classify_success(const ErrorReport& r, const SuccessThresholds& t) {
  return r.steps_converged && r.rms_ate <= t.ate && r.rms_are_deg <= t.are_deg && r.rms_depth <= t.depth;
}

namespace {

bool non_increasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1]) return false;
  return true;
}

}  // namespace

SequenceResult evaluate_run(const PipelineResult& run, const SceneTruth& truth, const PipelineConfig& cfg) {
  SequenceResult row;
  row.variant = cfg.variant;
  row.seed = truth.seed;
  row.times = run.times;
  row.failed_stage = to_string(run.failed_stage);
  row.message = run.message;
  if (run.step1) row.step1_hypotheses = run.step1->hypotheses;
  if (run.step2) {
    row.step2_iterations = run.step2->report.iterations;
    row.step2_termination = to_string(run.step2->report.termination);
    row.cheirality_violations += run.step2->cheirality_violations;
    row.costs_monotone = row.costs_monotone && non_increasing(run.step2->report.cost_trace);
  }
  if (run.solution) {
    row.step3_iterations = run.solution->report.iterations;
    row.step3_termination = to_string(run.solution->report.termination);
    row.cheirality_violations += run.solution->cheirality_violations;
    row.costs_monotone = row.costs_monotone && non_increasing(run.solution->report.cost_trace);
  }
  if (!run.ok()) return row;
  try {
    row.errors = compute_errors(align_and_scale(*run.solution, truth));
    row.errors.steps_converged = run.converged();
    row.errors.success = classify_success(row.errors, cfg.thresholds);
    row.success = row.errors.success;
    row.evaluated = true;
  } catch (const DegenerateScale& e) {
    row.failed_stage = "eval";
    row.message = e.what();
  }
  return row;
}

void summarize(BenchmarkSummary& s) {
  s.n_sequences = s.rows.size();
  s.n_successful = 0;
  double ate = 0.0, are = 0.0, depth = 0.0, t1 = 0.0, t2 = 0.0, t3 = 0.0;
  for (const SequenceResult& r : s.rows) {
    t1 += r.times.step1;
    t2 += r.times.step2;
    t3 += r.times.step3;
    if (!r.success) continue;
    ++s.n_successful;
    ate += r.errors.rms_ate;
    are += r.errors.rms_are_deg;
    depth += r.errors.rms_depth;
  }
  const double n = static_cast<double>(s.n_sequences);
  const double k = static_cast<double>(s.n_successful);
  s.success_rate = s.n_sequences ? 100.0 * k / n : 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.mean_rms_ate = k > 0 ? ate / k : nan;
  s.mean_rms_are_deg = k > 0 ? are / k : nan;
  s.mean_rms_depth = k > 0 ? depth / k : nan;
  s.mean_time_step1 = n > 0 ? t1 / n : nan;
  s.mean_time_step2 = n > 0 ? t2 / n : nan;
  s.mean_time_step3 = n > 0 ? t3 / n : nan;
}

std::vector<BenchmarkSummary> run_benchmark(const std::vector<SequenceInput>& sequences,
                                            const std::vector<PipelineConfig>& variants,
                                            const BenchmarkOptions& options) {
  if (sequences.empty()) throw ValidationError("bench: no sequences");
  if (variants.empty()) throw ValidationError("bench: no variants");
  if (options.timing_repeats < 1) throw ValidationError("bench: timing_repeats must be >= 1");
  std::vector<PipelineConfig> cfgs;
  for (const PipelineConfig& v : variants) {
    cfgs.push_back(resolve_variant(v));
    validate(cfgs.back());
  }
  const std::size_t ns = sequences.size();
  const std::size_t total = ns * cfgs.size();
  std::vector<SequenceResult> rows(total);
  const int threads = options.jobs > 0 ? options.jobs : 0;
  const Execution inner = threads == 1 ? Execution::parallel : Execution::serial;

  auto task = [&](std::size_t k) {
    const std::size_t v = k / ns, s = k % ns;
    const SequenceInput& in = sequences[s];
    PipelineResult run = run_pipeline(in.tracks, cfgs[v], inner);
    if (options.timing_repeats > 1) {
      std::vector<double> a{run.times.step1}, b{run.times.step2}, c{run.times.step3};
      for (int r = 1; r < options.timing_repeats; ++r) {
        const StepTimes t = run_pipeline(in.tracks, cfgs[v], inner).times;
        a.push_back(t.step1);
        b.push_back(t.step2);
        c.push_back(t.step3);
      }
      auto median = [](std::vector<double> x) {
        std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(x.size() / 2), x.end());
        return x[x.size() / 2];
      };
      run.times = {median(a), median(b), median(c)};
    }
    SequenceResult row = evaluate_run(run, in.truth, cfgs[v]);
    row.name = in.name;
    row.seed = in.seed;
    rows[k] = std::move(row);
  };

  if (threads > 0) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(total); ++k) task(static_cast<std::size_t>(k));
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(total); ++k) task(static_cast<std::size_t>(k));
  }

  std::vector<BenchmarkSummary> out;
  for (std::size_t v = 0; v < cfgs.size(); ++v) {
    BenchmarkSummary s;
    s.variant = cfgs[v].variant;
    s.config = cfgs[v];
    s.rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(v * ns),
                  rows.begin() + static_cast<std::ptrdiff_t>((v + 1) * ns));
    summarize(s);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) { return std::isfinite(v) ? fmt17(v) : std::string("nan"); }

void csv_provenance(std::ostringstream& os, const BenchmarkSummary& s) {
  os << "# version " << version_string() << '\n';
  os << "# config " << pipeline_to_json(s.config).dump() << '\n';
}

}  // namespace

std::string format_results_csv(const BenchmarkSummary& s) {
  std::ostringstream os;
  csv_provenance(os, s);
  os << "seed,sequence,variant,success,rms_ate,rms_are_deg,rms_depth,retained_landmarks,iters_step1,iters_step2,"
        "iters_step3,termination_step2,termination_step3,failed_stage,cheirality_violations,message\n";
  for (const SequenceResult& r : s.rows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    os << r.seed << ',' << r.name << ',' << to_string(r.variant) << ',' << (r.success ? 1 : 0) << ','
       << num(r.evaluated ? r.errors.rms_ate : nan) << ',' << num(r.evaluated ? r.errors.rms_are_deg : nan) << ','
       << num(r.evaluated ? r.errors.rms_depth : nan) << ',' << (r.evaluated ? r.errors.retained_landmarks : 0)
       << ',' << r.step1_hypotheses << ',' << r.step2_iterations << ',' << r.step3_iterations << ','
       << r.step2_termination << ',' << r.step3_termination << ',' << r.failed_stage << ','
       << r.cheirality_violations << ',' << csv_quote(r.message) << '\n';
  }
  return os.str();
}

std::string format_timing_csv(const BenchmarkSummary& s) {
  std::ostringstream os;
  csv_provenance(os, s);
  os << "seed,sequence,variant,t_step1,t_step2,t_step3\n";
  for (const SequenceResult& r : s.rows)
    os << r.seed << ',' << r.name << ',' << to_string(r.variant) << ',' << num(r.times.step1) << ','
       << num(r.times.step2) << ',' << num(r.times.step3) << '\n';
  return os.str();
}

namespace {

Json num_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string format_summary_json(const std::vector<BenchmarkSummary>& summaries) {
  Json j;
  j["format"] = "sfsm-benchmark-summary v1";
  j["version"] = version_string();
  j["population"] = {{"errors", "successful sequences"}, {"times", "all sequences"}};
  Json vs = Json::array();
  for (const BenchmarkSummary& s : summaries) {
    Json v;
    v["variant"] = to_string(s.variant);
    v["criterion"] = {{"all_steps_converged", true},
                      {"ate_max", s.config.thresholds.ate},
                      {"are_deg_max", s.config.thresholds.are_deg},
                      {"depth_max", s.config.thresholds.depth}};
    v["n_sequences"] = s.n_sequences;
    v["n_successful"] = s.n_successful;
    v["success_rate"] = s.success_rate;
    v["mean_rms_ate"] = num_or_null(s.mean_rms_ate);
    v["mean_rms_are_deg"] = num_or_null(s.mean_rms_are_deg);
    v["mean_rms_depth"] = num_or_null(s.mean_rms_depth);
    v["mean_time_step1_s"] = num_or_null(s.mean_time_step1);
    v["mean_time_step2_s"] = num_or_null(s.mean_time_step2);
    v["mean_time_step3_s"] = num_or_null(s.mean_time_step3);
    v["config"] = pipeline_to_json(s.config);
    vs.push_back(v);
  }
  j["variants"] = vs;
  return j.dump(2) + "\n";
}

namespace {

double field(const Json& v, const char* key, bool nullable) {
  auto it = v.find(key);
  if (it == v.end()) throw ValidationError(std::string("summary: missing field '") + key + "'");
  if (it->is_null() && nullable) return std::numeric_limits<double>::quiet_NaN();
  if (!it->is_number()) throw ValidationError(std::string("summary: field '") + key + "' is not a number");
  return it->get<double>();
}

std::string cell(double v, const char* f) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string render_report(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("summary: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("variants") || !j["variants"].is_array())
    throw ValidationError("summary: missing 'variants' array");
  if (j["variants"].empty()) throw ValidationError("summary: 'variants' is empty");

  const std::vector<std::string> head = {"Method",        "Success Rate (%)", "RMS ATE",
                                         "RMS ARE (deg)", "Normalized Depth RMSE Mean",
                                         "Time step1 (s)", "Time step2 (s)", "Time step3 (s)"};
  std::vector<std::vector<std::string>> rows{head};
  std::ostringstream crit;
  for (const Json& v : j["variants"]) {
    if (!v.is_object() || !v.contains("variant") || !v["variant"].is_string())
      throw ValidationError("summary: variant entry without a 'variant' name");
    const std::string name = v["variant"].get<std::string>();
    rows.push_back({name, cell(field(v, "success_rate", false), "%.1f"), cell(field(v, "mean_rms_ate", true), "%.3f"),
                    cell(field(v, "mean_rms_are_deg", true), "%.3f"), cell(field(v, "mean_rms_depth", true), "%.3f"),
                    cell(field(v, "mean_time_step1_s", true), "%.4f"), cell(field(v, "mean_time_step2_s", true), "%.4f"),
                    cell(field(v, "mean_time_step3_s", true), "%.4f")});
    if (v.contains("criterion") && v["criterion"].is_object()) {
      const Json& c = v["criterion"];
      crit << name << ": success = all steps converged, RMS ATE <= " << cell(field(c, "ate_max", false), "%g")
           << ", RMS ARE <= " << cell(field(c, "are_deg_max", false), "%g")
           << " deg, depth RMSE <= " << cell(field(c, "depth_max", false), "%g") << '\n';
    }
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < rows[k].size(); ++c) {
      std::string s = rows[k][c];
      if (c == 0)
        s += std::string(width[c] - s.size(), ' ');
      else
        s = std::string(width[c] - s.size(), ' ') + s;
      os << (c ? "  " : "") << s;
    }
    os << '\n';
    if (k == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  os << "Error means over successful sequences; compute times over all sequences.\n" << crit.str();
  return os.str();
}

}  // namespace sfsm
