#pragma once

// Shared test fixtures: tiny hand-written datasets, a synthetic market with
// every derived artefact, and brute-force metric oracles.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "facplace/featurize.hpp"
#include "facplace/ingest.hpp"
#include "facplace/models.hpp"
#include "facplace/synth.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace::testing {

// CSV bodies without headers; the headers are added here.
LinkedDataset make_dataset(const std::string& publications, const std::string& faculty,
                           const std::string& rankings, const std::string& aliases = "");

struct RawMarket {
  std::vector<PublicationRecord> publications;
  std::vector<FacultyRecord> faculty;
  RankTable ranks;
};

RawMarket raw_market(const SynthConfig& config);

struct Market {
  int t0 = 2010;
  int tf = 2020;
  LinkedDataset dataset;
  SnapshotSequence sequence;
  NodePartition partition;
  FeatureTensor phd, bib, ones;
  SplitMasks splits;
  std::map<double, LabelVector> labels;

  ModelInputs inputs(double k) const;
};

Market build_market(const RawMarket& raw, int t0, int tf, std::uint64_t split_seed,
                    const std::vector<double>& thresholds = {10.0});
Market build_market(const SynthConfig& config, std::uint64_t split_seed,
                    const std::vector<double>& thresholds = {10.0});

// Average precision by enumerating every distinct threshold.
double ap_oracle(std::span<const double> scores, std::span<const std::uint8_t> labels);

// PR-AUC of a score set against per-node labels.
double score_pr_auc(const ScoreSet& scores, const std::vector<std::uint8_t>& high);

// Small, fast model spec for tests.
ModelSpec quick_spec(ModelKind kind, std::vector<FeatureKind> features, std::uint64_t seed,
                     int epochs = 60);

// A finished run directory at K=10 holding one run per cell. Each cell
// scores its own block of 1000 nodes with one tied probability, so its
// PR-AUC is exactly positives / 1000.
struct TiedCell {
  std::string model;
  std::string feature_set;
  int positives = 0;
};

void write_tied_run(const std::filesystem::path& dir, const std::vector<TiedCell>& cells);

}  // namespace facplace::testing
