#pragma once

// Heuristic baselines, tabular learners, static GNNs and the temporal
// GConvGRU, all trained and evaluated under the temporal node masks.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "facplace/diffcore.hpp"
#include "facplace/featurize.hpp"
#include "facplace/graph_ops.hpp"
#include "facplace/ingest.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace {

enum class ModelKind { kRandom, kPhdRank, kAvgCoauthorRank, kLogReg, kMlp, kGcn, kGat, kSage, kGConvGru };

const char* model_kind_name(ModelKind kind);  // "random", "phd_rank", ..., "gconvgru"
ModelKind parse_model_kind(const std::string& name);
bool is_heuristic(ModelKind kind);
bool is_tabular(ModelKind kind);
bool is_static_gnn(ModelKind kind);
bool uses_graph(ModelKind kind);  // static GNNs and gconvgru

struct ModelSpec {
  ModelKind kind = ModelKind::kLogReg;
  std::vector<FeatureKind> features;
  int layers = 2;
  std::size_t hidden_dim = 16;
  double dropout = 0.0;
  int attention_heads = 2;
  int window = 2;        // gconvgru only
  int cheb_order = 1;    // highest Chebyshev degree in gconvgru
  int epochs = 500;
  double learning_rate = 1e-3;
  int patience = 50;
  bool use_weights = false;  // gcn edge weights
  std::uint64_t seed = 0;

  // Throws ConfigError on an invalid combination.
  void validate() const;
};

// Human-readable feature-set label ("PhD", "Bib+Co-author", ...). Graph
// models add "Co-author"; X_ONES contributes no label of its own.
std::string feature_set_label(const ModelSpec& spec);

struct ScoreSet {
  std::string run_id;
  std::vector<NodeId> nodes;         // ascending
  std::vector<double> probability;   // P(High), aligned with nodes

  std::size_t size() const { return nodes.size(); }
  static std::uint8_t label_at(double p) { return p >= 0.5 ? 1 : 0; }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Per-column z-score fitted on training rows; zero-variance columns are left
// untouched.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<std::uint8_t> active;

  void apply(Tensor& x) const;
};

class Network;

struct TrainedModel {
  std::string stage;  // "all" or the test year for per-year static models
  std::vector<Parameter> parameters;
  Standardizer standardizer;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

struct TrainResult {
  ModelSpec spec;
  std::vector<TrainedModel> models;  // empty for heuristics
  ScoreSet scores;
};

// Everything a model may read. Feature tensors are looked up by kind.
struct ModelInputs {
  const LinkedDataset* dataset = nullptr;
  const SnapshotSequence* sequence = nullptr;
  const FeatureTensor* phd = nullptr;
  const FeatureTensor* bib = nullptr;
  const FeatureTensor* ones = nullptr;
  const LabelVector* labels = nullptr;
  const SplitMasks* splits = nullptr;
};

ScoreSet heuristic_random(const SplitMasks& splits, std::uint64_t seed);
ScoreSet heuristic_phd(const LinkedDataset& dataset, const SplitMasks& splits, double k);
ScoreSet heuristic_avg_coauthor(const LinkedDataset& dataset, const SnapshotSequence& seq,
                                const SplitMasks& splits, double k);

TrainResult train_tabular(const ModelSpec& spec, const ModelInputs& in);
TrainResult train_static_gnn(const ModelSpec& spec, const ModelInputs& in);
TrainResult train_gconvgru(const ModelSpec& spec, const ModelInputs& in);

// Dispatches on spec.kind (heuristics included).
TrainResult train_model(const ModelSpec& spec, const ModelInputs& in);

// Re-scores the test nodes with the selected parameters (dropout off).
ScoreSet predict(const TrainResult& result, const ModelInputs& in);

// One model input step: node features plus the propagation structure of a
// snapshot. Tabular models use only `x`.
struct GraphStep {
  Tensor x;
  SparseMatrix propagate;  // gcn: normalised adjacency, sage: mean, gconvgru: scaled Laplacian
  EdgeIndex edges;         // gat
};

GraphStep make_step(const ModelSpec& spec, const Snapshot& g, Tensor x);

// Architecture with parameters held outside the tape so the same forward
// pass serves training, scoring and gradient checks.
class Network {
 public:
  virtual ~Network() = default;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  // Logits (n x 2) after each step. Static architectures read only the last
  // step; gconvgru unrolls over all of them from a zero hidden state.
  virtual std::vector<Var> forward(Tape& tape, std::span<const Var> params,
                                   std::span<const GraphStep* const> steps, bool training,
                                   Rng& dropout_rng) const = 0;

 protected:
  std::vector<Parameter> params_;
};

std::unique_ptr<Network> make_network(const ModelSpec& spec, std::size_t in_dim, Rng& init_rng);

// Binds every parameter of `net` to `tape`.
std::vector<Var> bind_parameters(Tape& tape, Network& net);

}  // namespace facplace
