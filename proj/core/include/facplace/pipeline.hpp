#pragma once

// Config-driven orchestration: synth/ingest -> snapshots -> features ->
// model grid -> optional rewiring grid -> metrics, all inside one run
// directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "facplace/models.hpp"
#include "facplace/synth.hpp"

namespace facplace {

struct RewireConfig {
  std::vector<int> p;  // empty: no rewiring grid
  int replicates = 10;
  int runs = 1;        // trainings per (p, replicate, model)
  double threshold = 10.0;
  std::vector<ModelSpec> models;
  double max_attempt_factor = 100.0;
  bool forbid_cumulative = true;
  bool random_orientation = true;

  bool enabled() const { return !p.empty() && !models.empty(); }
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";
  int t0 = 2010;
  int tf = 2020;
  std::vector<double> thresholds = {10, 20, 30, 40, 50};
  int n_repeats = 10;
  int test_years = 3;
  double p_train = 0.8;
  std::size_t workers = 1;

  bool use_synth = false;
  SynthConfig synth;
  std::filesystem::path publications;
  std::filesystem::path faculty;
  std::filesystem::path rankings;
  std::filesystem::path aliases;  // optional

  std::vector<ModelSpec> grid;    // seeds are assigned per run
  RewireConfig rewire;
  std::string source_text;        // config as read, kept in the manifest

  int first_test_year() const { return tf - test_years + 1; }
  void validate() const;
};

// INI text with sections [run], [data], [synth], [training], [model.<kind>],
// [grid] and [rewire]. Relative paths resolve against `base_dir`. A seed
// override replaces [run] seed before any stream seed is derived from it.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = ".",
                           std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);

// "PhD+Bib+Co-author" -> {kPhd, kBib}; "Co-author" alone -> {kOnes}.
std::vector<FeatureKind> parse_feature_set(const std::string& label, ModelKind kind);

nlohmann::json to_json(const ModelSpec& spec);

// One training (or heuristic evaluation) and the directory its outputs go to.
struct Cell {
  std::string id;
  ModelSpec spec;
  double k = 10.0;
  int run = 0;
  int p = -1;          // rewiring level; -1 on the original graph
  int replicate = -1;
  std::filesystem::path dir;  // relative to the run directory
};

std::vector<Cell> plan_cells(const RunConfig& config);
std::vector<Cell> plan_rewire_cells(const RunConfig& config);

// Worker count: FACPLACE_WORKERS when set, else the config value.
std::size_t worker_count(const RunConfig& config);

// Stages. Each reads its inputs from, and writes its outputs to, config.out.
void stage_synth(const RunConfig& config);
void stage_ingest(const RunConfig& config);
void stage_build(const RunConfig& config);
void stage_featurize(const RunConfig& config);
void stage_train(const RunConfig& config);
void stage_rewire(const RunConfig& config);
void stage_evaluate(const RunConfig& config);
void write_manifest(const RunConfig& config);

// Every stage in order, then the report.
void run_pipeline(const RunConfig& config);

}  // namespace facplace
