#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfsm/config.hpp"
#include "sfsm/errors.hpp"
#include "sfsm/eval.hpp"
#include "sfsm/formats.hpp"
#include "sfsm/io.hpp"
#include "sfsm/pipeline.hpp"
#include "sfsm/synth.hpp"
#include "sfsm/tracks.hpp"

namespace fs = std::filesystem;

namespace sfsm::cli {

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string input;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<int> sequences;
  int jobs = 0;
  int repeats = 1;
  std::string thresholds;
};

char seq_buf[32];

std::string sequence_name(int i) {
  std::snprintf(seq_buf, sizeof seq_buf, "seq_%03d", i);
  return seq_buf;
}

SuccessThresholds parse_thresholds(const std::string& s) {
  SuccessThresholds t;
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--thresholds: '" + item + "' is not a number");
    }
  }
  if (v.size() != 3) throw ValidationError("--thresholds expects ate,are_deg,depth");
  t = {v[0], v[1], v[2]};
  validate(t);
  return t;
}

// File fields first, then flags.
PipelineConfig load_pipeline(const Options& o) {
  PipelineConfig cfg;
  if (!o.config.empty()) cfg = pipeline_from_json(read_json_file(o.config));
  if (!o.variant.empty()) cfg.variant = variant_from_string(o.variant);
  if (o.seed) cfg.step1.rng_seed = *o.seed;
  if (!o.thresholds.empty()) cfg.thresholds = parse_thresholds(o.thresholds);
  cfg = resolve_variant(cfg);
  validate(cfg);
  return cfg;
}

int cmd_generate(const Options& o, std::ostream& out) {
  GenerateConfig g;
  if (!o.config.empty()) g = generate_from_json(read_json_file(o.config));
  if (o.seed) g.master_seed = *o.seed;
  if (o.sequences) g.n_sequences = *o.sequences;
  if (g.n_sequences < 1) throw ValidationError("n_sequences must be >= 1");
  validate(g.scene);
  const std::vector<Scene> scenes = generate_benchmark_set(g.scene, g.n_sequences, g.master_seed);
  fs::create_directories(o.out);
  Json manifest;
  manifest["format"] = "sfsm-dataset v1";
  manifest["version"] = version_string();
  manifest["config"] = generate_to_json(g);
  manifest["seed_rule"] = "seed_i = splitmix64(master_seed xor i)";
  Json seqs = Json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string name = sequence_name(static_cast<int>(i));
    write_tracks(scenes[i].tracks, fs::path(o.out) / (name + ".tracks"));
    write_truth(scenes[i].truth, fs::path(o.out) / (name + ".truth"));
    Json s;
    s["name"] = name;
    s["seed"] = scenes[i].truth.seed;
    s["tracks"] = name + ".tracks";
    s["truth"] = name + ".truth";
    s["n_tracks"] = scenes[i].tracks.tracks.size();
    s["parallax_deg"] = scenes[i].truth.parallax_deg;
    seqs.push_back(s);
  }
  manifest["sequences"] = seqs;
  const std::string text = manifest.dump(2) + "\n";
  write_text_file(fs::path(o.out) / "manifest.json", text);
  out << text;
  return kOk;
}

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = load_pipeline(o);
  const FeatureTracks tracks = read_tracks(o.input);
  const PipelineResult res = run_pipeline(tracks, cfg);
  if (!res.ok()) {
    err << "pipeline failed at " << to_string(res.failed_stage) << ": " << res.message << '\n';
    return kPipelineFailure;
  }
  write_solution(o.out, res, cfg);
  out << "step2 " << to_string(res.step2->report.termination) << " rms " << fmt17(res.step2->final_rms_px)
      << " px\nstep3 " << to_string(res.solution->report.termination) << " rms "
      << fmt17(res.solution->final_rms_px) << " px\n";
  if (!res.converged()) {
    const bool s2 = converged(res.step2->report.termination);
    err << "pipeline failed at " << (s2 ? "step3" : "step2") << ": optimizer did not converge ("
        << to_string(s2 ? res.solution->report.termination : res.step2->report.termination) << ")\n";
    return kPipelineFailure;
  }
  return kOk;
}

std::vector<SequenceInput> load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw ValidationError("bench: no manifest.json in " + dir.string());
  const Json m = read_json_file(mpath);
  if (!m.is_object() || !m.contains("sequences") || !m["sequences"].is_array() || m["sequences"].empty())
    throw ValidationError("bench: manifest has no sequences");
  std::vector<SequenceInput> seqs;
  for (const Json& s : m["sequences"]) {
    if (!s.is_object() || !s.contains("name") || !s.contains("tracks") || !s.contains("truth") ||
        !s.contains("seed"))
      throw ValidationError("bench: malformed manifest entry");
    SequenceInput in;
    in.name = s["name"].get<std::string>();
    in.seed = s["seed"].get<std::uint64_t>();
    in.tracks = read_tracks(dir / s["tracks"].get<std::string>());
    in.truth = read_truth(dir / s["truth"].get<std::string>());
    seqs.push_back(std::move(in));
  }
  return seqs;
}

std::vector<Variant> parse_variants(const std::string& s) {
  std::vector<Variant> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(variant_from_string(item));
  if (v.empty()) throw ValidationError("no variant given (valid: proposed, ha-baseline)");
  return v;
}

int cmd_bench(const Options& o, std::ostream& out) {
  Options base = o;
  base.variant.clear();
  const PipelineConfig cfg = load_pipeline(base);
  const std::vector<Variant> names = parse_variants(o.variant.empty() ? "proposed,ha-baseline" : o.variant);
  const std::vector<SequenceInput> seqs = load_dataset(o.input);
  std::vector<PipelineConfig> variants;
  for (Variant v : names) {
    PipelineConfig c = cfg;
    c.variant = v;
    variants.push_back(resolve_variant(c));
  }
  BenchmarkOptions bo;
  bo.jobs = o.jobs;
  bo.timing_repeats = o.repeats;
  const std::vector<BenchmarkSummary> sums = run_benchmark(seqs, variants, bo);
  fs::create_directories(o.out);
  for (const BenchmarkSummary& s : sums) {
    write_text_file(fs::path(o.out) / (to_string(s.variant) + ".csv"), format_results_csv(s));
    write_text_file(fs::path(o.out) / (to_string(s.variant) + "_timing.csv"), format_timing_csv(s));
  }
  const std::string json = format_summary_json(sums);
  write_text_file(fs::path(o.out) / "summary.json", json);
  out << render_report(json);
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  out << render_report(read_text_file(o.input));
  return kOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-from-small-motion initialization: scene generation, pipeline runs, benchmarks"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Generate synthetic sequences with ground truth");
  gen->add_option("--config", o.config, "Generation config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Master seed (overrides the config)");
  gen->add_option("--sequences", o.sequences, "Number of sequences (overrides the config)");

  auto* run = app.add_subcommand("run", "Run the three-step initialization on a track file");
  run->add_option("tracks", o.input, "Track file")->required();
  run->add_option("--config", o.config, "Pipeline config (JSON)");
  run->add_option("--out", o.out, "Solution file")->required();
  run->add_option("--variant", o.variant, "proposed | ha-baseline");
  run->add_option("--seed", o.seed, "RANSAC seed");

  auto* bench = app.add_subcommand("bench", "Benchmark pipeline variants on a generated dataset");
  bench->add_option("dataset", o.input, "Dataset directory with manifest.json")->required();
  bench->add_option("--config", o.config, "Pipeline config (JSON)");
  bench->add_option("--out", o.out, "Output directory")->required();
  bench->add_option("--variant", o.variant, "Comma-separated variants (default: proposed,ha-baseline)");
  bench->add_option("--seed", o.seed, "RANSAC seed");
  bench->add_option("--jobs", o.jobs, "Parallel sequences (0 = all cores)")->check(CLI::NonNegativeNumber);
  bench->add_option("--repeats", o.repeats, "Timing repeats; per-step time is the median")
      ->check(CLI::PositiveNumber);
  bench->add_option("--thresholds", o.thresholds, "Success thresholds ate,are_deg,depth");

  auto* report = app.add_subcommand("report", "Render a benchmark summary as a table");
  report->add_option("summary", o.input, "summary.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(o, out);
    if (*run) return cmd_run(o, out, err);
    if (*bench) return cmd_bench(o, out);
    if (*report) return cmd_report(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace sfsm::cli
