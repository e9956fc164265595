#pragma once

// Run reports re-derived from the per-cell scores files of a run directory.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facplace/evalstat.hpp"
#include "facplace/featurize.hpp"
#include "facplace/models.hpp"

namespace facplace {

struct ScoreRow {
  NodeId node = 0;
  double probability = 0.0;
  std::uint8_t predicted = 0;  // label at the 0.5 threshold
};

// Columns node_id,probability,label@0.5.
void write_scores_csv(const ScoreSet& scores, const std::filesystem::path& path);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

// features/labels.csv: node_id,hire_year,faculty_rank,high_K<k>... Returns
// the per-node labels for each K.
void write_labels_csv(const LinkedDataset& dataset, const std::vector<double>& thresholds,
                      const std::filesystem::path& path);
std::map<double, std::vector<std::uint8_t>> read_labels_csv(const std::filesystem::path& path);

// Metrics of one scored cell against per-node labels.
MetricRow score_metrics(const std::vector<ScoreRow>& scores, const std::vector<std::uint8_t>& high,
                        const std::string& model, const std::string& feature_set, int run, double k);

struct CellSummary {
  std::string model;
  std::string feature_set;
  double k = 0.0;
  std::size_t runs = 0;
  double precision_mean = 0.0, precision_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  double pr_auc_mean = 0.0, pr_auc_std = 0.0;
  bool heuristic = false;
};

struct BestRow {
  CellSummary best;                     // highest mean PR-AUC for the feature set
  std::optional<double> vs_phd;         // % improvement over the PhD-rank heuristic
  std::optional<double> vs_avg_coauthor;
};

struct LmmBlock {
  double k = 0.0;
  std::string reference;
  std::optional<LmmFit> fit;
  std::string error;  // set when the model is not estimable
};

struct RewireSummary {
  std::string model;
  std::string feature_set;
  double k = 0.0;
  int p = 0;
  std::size_t n = 0;
  double median_pr_auc = 0.0;
  double mean_pr_auc = 0.0;
};

struct RunReport {
  std::vector<double> thresholds;
  std::vector<MetricRow> rows;
  std::vector<CellSummary> cells;
  std::vector<BestRow> best;
  std::vector<LmmBlock> lmm;
  std::vector<DeltaRow> deltas;
  std::vector<RewireSummary> rewiring;
  nlohmann::json manifest;
};

// Reads manifest.json, features/labels.csv and every cell's scores.csv. A
// missing scores file raises IncompleteRunError naming the cell.
RunReport build_report(const std::filesystem::path& run_dir);

std::string render_text(const RunReport& report);
nlohmann::json to_json(const RunReport& report);

// Writes report.json and report.txt into the run directory.
RunReport write_report(const std::filesystem::path& run_dir);

// Feature sets used as LMM references, and the with/without Co-author pairs
// of the delta tables.
const std::vector<std::string>& lmm_references();
const std::vector<std::pair<std::string, std::string>>& coauthor_pairs();

}  // namespace facplace
