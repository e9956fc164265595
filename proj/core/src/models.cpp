#include "facplace/models.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "facplace/error.hpp"

namespace facplace {

// ---- kinds and specs --------------------------------------------------------

namespace {

constexpr std::pair<ModelKind, const char*> kKindNames[] = {
    {ModelKind::kRandom, "random"},   {ModelKind::kPhdRank, "phd_rank"},
    {ModelKind::kAvgCoauthorRank, "avg_coauthor_rank"},
    {ModelKind::kLogReg, "logreg"},   {ModelKind::kMlp, "mlp"},
    {ModelKind::kGcn, "gcn"},         {ModelKind::kGat, "gat"},
    {ModelKind::kSage, "sage"},       {ModelKind::kGConvGru, "gconvgru"},
};

bool has_feature(const ModelSpec& spec, FeatureKind kind) {
  return std::find(spec.features.begin(), spec.features.end(), kind) != spec.features.end();
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw ConfigError(fmt::format("unknown model kind '{}'", name));
}

bool is_heuristic(ModelKind kind) {
  return kind == ModelKind::kRandom || kind == ModelKind::kPhdRank ||
         kind == ModelKind::kAvgCoauthorRank;
}

bool is_tabular(ModelKind kind) { return kind == ModelKind::kLogReg || kind == ModelKind::kMlp; }

bool is_static_gnn(ModelKind kind) {
  return kind == ModelKind::kGcn || kind == ModelKind::kGat || kind == ModelKind::kSage;
}

bool uses_graph(ModelKind kind) { return is_static_gnn(kind) || kind == ModelKind::kGConvGru; }

void ModelSpec::validate() const {
  const char* name = model_kind_name(kind);
  if (is_heuristic(kind)) return;
  if (features.empty()) throw ConfigError(fmt::format("{}: no feature tensor selected", name));
  if (is_tabular(kind) && has_feature(*this, FeatureKind::kOnes)) {
    throw ConfigError(fmt::format("{}: tabular models take only X_PhD and X_Bib", name));
  }
  if (kind == ModelKind::kGConvGru && (window < 1 || window > 3)) {
    throw ConfigError(fmt::format("gconvgru: window {} outside {{1, 2, 3}}", window));
  }
  if (layers < 1 || hidden_dim < 1 || attention_heads < 1 || cheb_order < 0) {
    throw ConfigError(fmt::format("{}: layers, hidden_dim and heads must be positive", name));
  }
  if (epochs < 0 || !(learning_rate > 0.0) || patience < 1) {
    throw ConfigError(fmt::format("{}: invalid epochs/learning_rate/patience", name));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError(fmt::format("{}: dropout {} outside [0, 1)", name, dropout));
  }
}

std::string feature_set_label(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::kRandom:
      return "Random";
    case ModelKind::kPhdRank:
      return "PhD";
    case ModelKind::kAvgCoauthorRank:
      return "Co-author";
    default:
      break;
  }
  std::vector<std::string> parts;
  if (has_feature(spec, FeatureKind::kPhd)) parts.push_back("PhD");
  if (has_feature(spec, FeatureKind::kBib)) parts.push_back("Bib");
  if (uses_graph(spec.kind)) parts.push_back("Co-author");
  std::string label;
  for (const auto& p : parts) label += (label.empty() ? "" : "+") + p;
  return label;
}

void Standardizer::apply(Tensor& x) const {
  if (x.cols() != mean.size()) {
    throw DataError(fmt::format("standardizer fitted on {} columns, got {}", mean.size(), x.cols()));
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (active[c]) row[c] = (row[c] - mean[c]) / scale[c];
    }
  }
}

// ---- heuristics -------------------------------------------------------------

ScoreSet heuristic_random(const SplitMasks& splits, std::uint64_t seed) {
  ScoreSet s;
  s.run_id = "random";
  Rng rng = make_stream(seed, "sampling");
  s.nodes = splits.nodes(Split::kTest);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) s.probability.push_back(rng.uniform());
  return s;
}

ScoreSet heuristic_phd(const LinkedDataset& dataset, const SplitMasks& splits, double k) {
  ScoreSet s;
  s.run_id = "phd_rank";
  s.nodes = splits.nodes(Split::kTest);
  for (NodeId n : s.nodes) s.probability.push_back(phd_rank_of(dataset.researchers.at(n)) <= k ? 1.0 : 0.0);
  return s;
}

ScoreSet heuristic_avg_coauthor(const LinkedDataset& dataset, const SnapshotSequence& seq,
                                const SplitMasks& splits, double k) {
  ScoreSet s;
  s.run_id = "avg_coauthor_rank";
  s.nodes = splits.nodes(Split::kTest);
  for (NodeId n : s.nodes) {
    const int prior = dataset.researchers.at(n).hire_year - 1;
    double total = 0.0;
    std::size_t count = 0;
    if (seq.contains_year(prior)) {
      for (const auto& nb : seq.at(prior).neighbors(n)) {
        const Researcher& co = dataset.researchers.at(nb.node);
        if (co.hire_year > prior) continue;
        total += faculty_rank_of(co);
        ++count;
      }
    }
    s.probability.push_back(count > 0 && total / static_cast<double>(count) <= k ? 1.0 : 0.0);
  }
  return s;
}

// ---- networks ---------------------------------------------------------------

namespace {

Parameter glorot(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  Parameter p(name, Tensor(rows, cols));
  glorot_uniform(p.value, rng);
  return p;
}

Parameter zeros(const std::string& name, std::size_t rows, std::size_t cols) {
  return Parameter(name, Tensor(rows, cols));
}

const GraphStep& last(std::span<const GraphStep* const> steps) {
  if (steps.empty()) throw DataError("forward: no input steps");
  return *steps.back();
}

class LogReg final : public Network {
 public:
  explicit LogReg(std::size_t in_dim) {
    // Zero start: untrained scores are exactly 0.5.
    params_.push_back(zeros("w", in_dim, 2));
    params_.push_back(zeros("b", 1, 2));
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool, Rng&) const override {
    const Var x = tape.constant(last(steps).x);
    return {add_row(matmul(x, p[0]), p[1])};
  }
};

// Dense stack shared by the MLP and, via `propagate`, the graph layers.
std::vector<std::size_t> layer_dims(std::size_t in_dim, const ModelSpec& spec) {
  std::vector<std::size_t> dims{in_dim};
  for (int l = 1; l < spec.layers; ++l) dims.push_back(spec.hidden_dim);
  dims.push_back(2);
  return dims;
}

class Mlp final : public Network {
 public:
  Mlp(std::size_t in_dim, const ModelSpec& spec, Rng& rng) : dropout_(spec.dropout) {
    const auto dims = layer_dims(in_dim, spec);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      params_.push_back(glorot(fmt::format("w{}", l), dims[l], dims[l + 1], rng));
      params_.push_back(zeros(fmt::format("b{}", l), 1, dims[l + 1]));
    }
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool training, Rng& rng) const override {
    Var h = tape.constant(last(steps).x);
    const std::size_t n_layers = p.size() / 2;
    for (std::size_t l = 0; l < n_layers; ++l) {
      h = add_row(matmul(h, p[2 * l]), p[2 * l + 1]);
      if (l + 1 < n_layers) h = dropout(relu(h), dropout_, rng, training);
    }
    return {h};
  }

 private:
  double dropout_;
};

class Gcn final : public Network {
 public:
  Gcn(std::size_t in_dim, const ModelSpec& spec, Rng& rng) : dropout_(spec.dropout) {
    const auto dims = layer_dims(in_dim, spec);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      params_.push_back(glorot(fmt::format("w{}", l), dims[l], dims[l + 1], rng));
      params_.push_back(zeros(fmt::format("b{}", l), 1, dims[l + 1]));
    }
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool training, Rng& rng) const override {
    const GraphStep& step = last(steps);
    Var h = tape.constant(step.x);
    const std::size_t n_layers = p.size() / 2;
    for (std::size_t l = 0; l < n_layers; ++l) {
      h = add_row(sparse_matmul(step.propagate, matmul(h, p[2 * l])), p[2 * l + 1]);
      if (l + 1 < n_layers) h = dropout(relu(h), dropout_, rng, training);
    }
    return {h};
  }

 private:
  double dropout_;
};

class Sage final : public Network {
 public:
  Sage(std::size_t in_dim, const ModelSpec& spec, Rng& rng) : dropout_(spec.dropout) {
    const auto dims = layer_dims(in_dim, spec);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      params_.push_back(glorot(fmt::format("w_self{}", l), dims[l], dims[l + 1], rng));
      params_.push_back(glorot(fmt::format("w_neigh{}", l), dims[l], dims[l + 1], rng));
      params_.push_back(zeros(fmt::format("b{}", l), 1, dims[l + 1]));
    }
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool training, Rng& rng) const override {
    const GraphStep& step = last(steps);
    Var h = tape.constant(step.x);
    const std::size_t n_layers = p.size() / 3;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Var self = matmul(h, p[3 * l]);
      const Var neigh = matmul(sparse_matmul(step.propagate, h), p[3 * l + 1]);
      h = add_row(add(self, neigh), p[3 * l + 2]);
      if (l + 1 < n_layers) h = dropout(relu(h), dropout_, rng, training);
    }
    return {h};
  }

 private:
  double dropout_;
};

class Gat final : public Network {
 public:
  Gat(std::size_t in_dim, const ModelSpec& spec, Rng& rng) : dropout_(spec.dropout) {
    std::size_t dim = in_dim;
    for (int l = 0; l < spec.layers; ++l) {
      const bool final_layer = l + 1 == spec.layers;
      const int heads = final_layer ? 1 : spec.attention_heads;
      const std::size_t out = final_layer ? 2 : spec.hidden_dim;
      for (int k = 0; k < heads; ++k) {
        params_.push_back(glorot(fmt::format("w{}_{}", l, k), dim, out, rng));
        params_.push_back(glorot(fmt::format("a_src{}_{}", l, k), out, 1, rng));
        params_.push_back(glorot(fmt::format("a_dst{}_{}", l, k), out, 1, rng));
      }
      params_.push_back(zeros(fmt::format("b{}", l), 1, out * static_cast<std::size_t>(heads)));
      heads_.push_back(heads);
      dim = out * static_cast<std::size_t>(heads);
    }
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool training, Rng& rng) const override {
    const GraphStep& step = last(steps);
    const EdgeIndex& e = step.edges;
    Var h = tape.constant(step.x);
    std::size_t cursor = 0;
    for (std::size_t l = 0; l < heads_.size(); ++l) {
      std::vector<Var> outs;
      for (int k = 0; k < heads_[l]; ++k) {
        const Var wh = matmul(h, p[cursor]);
        const Var s_src = matmul(wh, p[cursor + 1]);
        const Var s_dst = matmul(wh, p[cursor + 2]);
        cursor += 3;
        const Var logits = leaky_relu(add(gather_rows(s_src, e.src), gather_rows(s_dst, e.dst)), 0.2);
        const Var alpha = segment_softmax(logits, e.dst, e.node_count);
        outs.push_back(scatter_add_rows(mul_rows(gather_rows(wh, e.src), alpha), e.dst, e.node_count));
      }
      h = add_row(outs.size() == 1 ? outs.front() : concat_cols(outs), p[cursor++]);
      if (l + 1 < heads_.size()) h = dropout(relu(h), dropout_, rng, training);
    }
    return {h};
  }

 private:
  double dropout_;
  std::vector<int> heads_;
};

class GConvGruNet final : public Network {
 public:
  GConvGruNet(std::size_t in_dim, const ModelSpec& spec, Rng& rng)
      : order_(spec.cheb_order), hidden_(spec.hidden_dim), dropout_(spec.dropout) {
    GruParams gru(in_dim, spec.hidden_dim, spec.cheb_order, rng, "gru.");
    for (Parameter* q : gru.all()) params_.push_back(std::move(*q));
    params_.push_back(glorot("head.w", spec.hidden_dim, 2, rng));
    params_.push_back(zeros("head.b", 1, 2));
  }

  std::vector<Var> forward(Tape& tape, std::span<const Var> p, std::span<const GraphStep* const> steps,
                           bool training, Rng& rng) const override {
    if (steps.empty()) throw DataError("gconvgru: no input steps");
    const GruVars g{p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
    Var h = tape.constant(Tensor(steps.front()->x.rows(), hidden_));
    std::vector<Var> logits;
    for (const GraphStep* step : steps) {
      h = gru_cell(step->propagate, h, tape.constant(step->x), g, order_);
      logits.push_back(add_row(matmul(dropout(relu(h), dropout_, rng, training), p[9]), p[10]));
    }
    return logits;
  }

 private:
  int order_;
  std::size_t hidden_;
  double dropout_;
};

}  // namespace

std::unique_ptr<Network> make_network(const ModelSpec& spec, std::size_t in_dim, Rng& init_rng) {
  switch (spec.kind) {
    case ModelKind::kLogReg:
      return std::make_unique<LogReg>(in_dim);
    case ModelKind::kMlp:
      return std::make_unique<Mlp>(in_dim, spec, init_rng);
    case ModelKind::kGcn:
      return std::make_unique<Gcn>(in_dim, spec, init_rng);
    case ModelKind::kGat:
      return std::make_unique<Gat>(in_dim, spec, init_rng);
    case ModelKind::kSage:
      return std::make_unique<Sage>(in_dim, spec, init_rng);
    case ModelKind::kGConvGru:
      return std::make_unique<GConvGruNet>(in_dim, spec, init_rng);
    default:
      throw ConfigError(fmt::format("{} has no trainable network", model_kind_name(spec.kind)));
  }
}

std::vector<Var> bind_parameters(Tape& tape, Network& net) {
  std::vector<Var> vars;
  for (auto& p : net.parameters()) vars.push_back(tape.param(p));
  return vars;
}

GraphStep make_step(const ModelSpec& spec, const Snapshot& g, Tensor x) {
  GraphStep step;
  step.x = std::move(x);
  switch (spec.kind) {
    case ModelKind::kGcn:
      step.propagate = gcn_operator(g, spec.use_weights);
      break;
    case ModelKind::kSage:
      step.propagate = mean_operator(g);
      break;
    case ModelKind::kGat:
      step.edges = attention_edges(g);
      break;
    case ModelKind::kGConvGru:
      step.propagate = scaled_laplacian(g);
      break;
    default:
      break;
  }
  return step;
}

// ---- problem assembly -------------------------------------------------------

namespace {

// Training/scoring layout of one model fit. Row r of every step's x is node
// row_node[r].
struct Problem {
  struct Target {
    std::vector<std::size_t> steps;
    std::vector<std::uint8_t> train;
    std::vector<std::uint8_t> val;
  };
  struct Scoring {
    std::vector<std::size_t> steps;
    std::vector<std::vector<std::uint8_t>> masks;  // per step position
  };

  std::vector<GraphStep> steps;
  std::vector<Target> targets;
  Scoring scoring;
  std::vector<NodeId> row_node;
  std::vector<std::uint8_t> labels;  // per row
};

std::vector<const FeatureTensor*> selected_tensors(const ModelSpec& spec, const ModelInputs& in) {
  std::vector<const FeatureTensor*> out;
  for (FeatureKind k : spec.features) {
    const FeatureTensor* t = k == FeatureKind::kPhd ? in.phd : k == FeatureKind::kBib ? in.bib : in.ones;
    if (!t) throw ConfigError(fmt::format("feature tensor {} not provided", feature_kind_name(k)));
    out.push_back(t);
  }
  return out;
}

std::size_t feature_width(const std::vector<const FeatureTensor*>& tensors) {
  std::size_t d = 0;
  for (const auto* t : tensors) d += t->feature_count();
  return d;
}

// All nodes' features at one year.
Tensor features_at(const std::vector<const FeatureTensor*>& tensors, std::size_t n, int year) {
  Tensor x(n, feature_width(tensors));
  for (NodeId i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (const auto* t : tensors) {
      for (std::size_t f = 0; f < t->feature_count(); ++f) x(i, c++) = t->at(i, f, year);
    }
  }
  return x;
}

void require_inputs(const ModelInputs& in, bool graph) {
  if (!in.dataset || !in.labels || !in.splits) throw ConfigError("model inputs incomplete");
  if (graph && !in.sequence) throw ConfigError("graph models require a snapshot sequence");
}

Problem tabular_problem(const ModelSpec& spec, const ModelInputs& in) {
  require_inputs(in, false);
  const auto tensors = selected_tensors(spec, in);
  const SplitMasks& splits = *in.splits;
  Problem pb;
  for (NodeId i = 0; i < splits.assignment.size(); ++i) {
    if (splits.assignment[i] != Split::kNone) pb.row_node.push_back(i);
  }
  const std::size_t m = pb.row_node.size();
  Tensor x(m, feature_width(tensors));
  std::optional<BibliometricIndex> index;
  std::vector<double> bib_row(kBibFeatures);
  Problem::Target target;
  target.steps = {0};
  target.train.assign(m, 0);
  target.val.assign(m, 0);
  std::vector<std::uint8_t> test(m, 0);
  for (std::size_t r = 0; r < m; ++r) {
    const NodeId node = pb.row_node[r];
    // Final pre-hire year only.
    const int year = splits.hire_year[node] - 1;
    std::size_t c = 0;
    for (const auto* t : tensors) {
      if (t->contains_year(year)) {
        for (std::size_t f = 0; f < t->feature_count(); ++f) x(r, c++) = t->at(node, f, year);
      } else if (t->kind() == FeatureKind::kBib) {
        if (!index) index.emplace(*in.dataset);
        index->row(node, year, bib_row);
        for (double v : bib_row) x(r, c++) = v;
      } else if (t->kind() == FeatureKind::kPhd) {
        x(r, c++) = phd_rank_of(in.dataset->researchers.at(node));
      } else {
        x(r, c++) = 1.0;
      }
    }
    pb.labels.push_back(in.labels->high.at(node));
    target.train[r] = splits.assignment[node] == Split::kTrain;
    target.val[r] = splits.assignment[node] == Split::kVal;
    test[r] = splits.assignment[node] == Split::kTest;
  }
  pb.steps.push_back(GraphStep{std::move(x), {}, {}});
  pb.targets.push_back(std::move(target));
  pb.scoring.steps = {0};
  pb.scoring.masks = {std::move(test)};
  return pb;
}

Problem static_problem(const ModelSpec& spec, const ModelInputs& in, int test_year) {
  require_inputs(in, true);
  const auto tensors = selected_tensors(spec, in);
  const SplitMasks& splits = *in.splits;
  const std::size_t n = splits.assignment.size();
  Problem pb;
  for (NodeId i = 0; i < n; ++i) pb.row_node.push_back(i);
  pb.labels = in.labels->high;
  const int year = test_year - 1;
  pb.steps.push_back(make_step(spec, in.sequence->at(year), features_at(tensors, n, year)));
  // Every earlier hire year feeds training and validation.
  YearMasks masks = year_masks(splits, test_year, test_year - splits.t0);
  pb.targets.push_back({{0}, std::move(masks.train), std::move(masks.val)});
  pb.scoring.steps = {0};
  pb.scoring.masks = {std::move(masks.test)};
  return pb;
}

Problem temporal_problem(const ModelSpec& spec, const ModelInputs& in) {
  require_inputs(in, true);
  const auto tensors = selected_tensors(spec, in);
  const SplitMasks& splits = *in.splits;
  const std::size_t n = splits.assignment.size();
  const int w = spec.window;
  if (splits.t0 + w > splits.first_test_year - 1) {
    throw ConfigError(fmt::format("gconvgru: window {} leaves no training year in [{}, {}]", w,
                                  splits.t0, splits.first_test_year - 1));
  }
  Problem pb;
  for (NodeId i = 0; i < n; ++i) pb.row_node.push_back(i);
  pb.labels = in.labels->high;
  for (int y = splits.t0; y < splits.tf; ++y) {
    pb.steps.push_back(make_step(spec, in.sequence->at(y), features_at(tensors, n, y)));
  }
  auto step_of = [&](int y) { return static_cast<std::size_t>(y - splits.t0); };
  for (int t = splits.t0 + w; t < splits.first_test_year; ++t) {
    Problem::Target target;
    for (int y = t - w; y < t; ++y) target.steps.push_back(step_of(y));
    YearMasks masks = year_masks(splits, t, w);
    target.train = std::move(masks.train);
    target.val = std::move(masks.val);
    pb.targets.push_back(std::move(target));
  }
  for (int t = splits.first_test_year; t <= splits.tf; ++t) {
    pb.scoring.steps.push_back(step_of(t - 1));
    pb.scoring.masks.push_back(year_masks(splits, t, w).test);
  }
  return pb;
}

Standardizer fit_standardizer(const Problem& pb) {
  const std::size_t d = pb.steps.front().x.cols();
  std::vector<double> sum(d, 0.0);
  std::vector<double> sq(d, 0.0);
  double count = 0.0;
  for (const auto& target : pb.targets) {
    for (std::size_t s : target.steps) {
      const Tensor& x = pb.steps[s].x;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!target.train[r]) continue;
        count += 1.0;
        for (std::size_t c = 0; c < d; ++c) sum[c] += x(r, c);
      }
    }
  }
  if (count == 0.0) throw DataError("empty train set");
  Standardizer st;
  st.mean.resize(d);
  for (std::size_t c = 0; c < d; ++c) st.mean[c] = sum[c] / count;
  for (const auto& target : pb.targets) {
    for (std::size_t s : target.steps) {
      const Tensor& x = pb.steps[s].x;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!target.train[r]) continue;
        for (std::size_t c = 0; c < d; ++c) sq[c] += (x(r, c) - st.mean[c]) * (x(r, c) - st.mean[c]);
      }
    }
  }
  st.scale.resize(d);
  st.active.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    st.scale[c] = std::sqrt(sq[c] / count);
    st.active[c] = st.scale[c] > 1e-12 * std::max(1.0, std::abs(st.mean[c]));
    if (!st.active[c]) st.scale[c] = 1.0;
  }
  return st;
}

void standardize(Problem& pb, const Standardizer& st) {
  for (auto& step : pb.steps) st.apply(step.x);
}

std::vector<const GraphStep*> step_ptrs(const Problem& pb, const std::vector<std::size_t>& idx) {
  std::vector<const GraphStep*> out;
  for (std::size_t i : idx) out.push_back(&pb.steps[i]);
  return out;
}

struct Losses {
  double train = 0.0;
  double val = 0.0;
};

Losses evaluate(const Network& net, const Problem& pb) {
  Tape tape;
  std::vector<Var> p;
  for (const auto& q : net.parameters()) p.push_back(tape.constant(q.value));
  Rng unused(0);
  Losses out;
  for (const auto& target : pb.targets) {
    const bool has_train = mask_count(target.train) > 0;
    const bool has_val = mask_count(target.val) > 0;
    if (!has_train && !has_val) continue;
    const Var logits = net.forward(tape, p, step_ptrs(pb, target.steps), false, unused).back();
    if (has_train) out.train += softmax_cross_entropy(logits, pb.labels, target.train).value()[0];
    if (has_val) out.val += softmax_cross_entropy(logits, pb.labels, target.val).value()[0];
  }
  return out;
}

void train_epoch(Network& net, const Problem& pb, Adam& opt, Rng& dropout_rng) {
  Tape tape;
  const auto p = bind_parameters(tape, net);
  std::optional<Var> total;
  for (const auto& target : pb.targets) {
    if (mask_count(target.train) == 0) continue;
    const Var logits = net.forward(tape, p, step_ptrs(pb, target.steps), true, dropout_rng).back();
    const Var loss = softmax_cross_entropy(logits, pb.labels, target.train);
    total = total ? add(*total, loss) : loss;
  }
  opt.zero_grad();
  tape.backward(*total);
  opt.step();
}

TrainedModel fit(const ModelSpec& spec, Problem& pb, const std::string& stage, std::uint64_t stage_index) {
  TrainedModel model;
  model.stage = stage;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  for (const auto& t : pb.targets) {
    n_train += mask_count(t.train);
    n_val += mask_count(t.val);
  }
  if (n_train == 0) throw DataError(fmt::format("{} ({}): empty train set", model_kind_name(spec.kind), stage));
  if (n_val == 0) throw DataError(fmt::format("{} ({}): empty validation set", model_kind_name(spec.kind), stage));

  model.standardizer = fit_standardizer(pb);
  standardize(pb, model.standardizer);

  Rng init = make_stream(spec.seed, "init", stage_index);
  Rng drop = make_stream(spec.seed, "dropout", stage_index);
  auto net = make_network(spec, pb.steps.front().x.cols(), init);
  std::vector<Parameter*> ptrs;
  for (auto& q : net->parameters()) ptrs.push_back(&q);
  Adam opt(ptrs, spec.learning_rate);

  Losses l = evaluate(*net, pb);
  model.history.push_back({0, l.train, l.val});
  double best_val = l.val;
  std::vector<Parameter> best = net->parameters();
  for (int e = 1; e <= spec.epochs; ++e) {
    train_epoch(*net, pb, opt, drop);
    l = evaluate(*net, pb);
    model.history.push_back({e, l.train, l.val});
    if (l.val < best_val) {
      best_val = l.val;
      model.best_epoch = e;
      best = net->parameters();
    } else if (e - model.best_epoch >= spec.patience) {
      break;
    }
  }
  model.parameters = std::move(best);
  for (auto& q : model.parameters) q.zero_grad();
  return model;
}

void score_into(const ModelSpec& spec, const TrainedModel& model, const Problem& pb,
                std::map<NodeId, double>& out) {
  Rng init(0);
  auto net = make_network(spec, pb.steps.front().x.cols(), init);
  net->parameters() = model.parameters;
  Tape tape;
  std::vector<Var> p;
  for (const auto& q : net->parameters()) p.push_back(tape.constant(q.value));
  Rng unused(0);
  const auto logits = net->forward(tape, p, step_ptrs(pb, pb.scoring.steps), false, unused);
  for (std::size_t k = 0; k < pb.scoring.masks.size(); ++k) {
    const Tensor prob = softmax_rows(logits[k].value());
    const auto& mask = pb.scoring.masks[k];
    for (std::size_t r = 0; r < mask.size(); ++r) {
      if (mask[r]) out[pb.row_node[r]] = prob(r, 1);
    }
  }
}

ScoreSet to_score_set(const std::map<NodeId, double>& scores, std::string run_id) {
  ScoreSet s;
  s.run_id = std::move(run_id);
  for (const auto& [node, p] : scores) {
    s.nodes.push_back(node);
    s.probability.push_back(p);
  }
  return s;
}

std::string run_label(const ModelSpec& spec) {
  return fmt::format("{}:{}", model_kind_name(spec.kind), feature_set_label(spec));
}

Problem problem_for(const ModelSpec& spec, const ModelInputs& in, const std::string& stage) {
  if (is_tabular(spec.kind)) return tabular_problem(spec, in);
  if (spec.kind == ModelKind::kGConvGru) return temporal_problem(spec, in);
  return static_problem(spec, in, std::stoi(stage));
}

}  // namespace

TrainResult train_tabular(const ModelSpec& spec, const ModelInputs& in) {
  spec.validate();
  if (!is_tabular(spec.kind)) throw ConfigError("train_tabular: not a tabular model");
  TrainResult result{spec, {}, {}};
  Problem pb = tabular_problem(spec, in);
  result.models.push_back(fit(spec, pb, "all", 0));
  std::map<NodeId, double> scores;
  score_into(spec, result.models.back(), pb, scores);
  result.scores = to_score_set(scores, run_label(spec));
  return result;
}

TrainResult train_static_gnn(const ModelSpec& spec, const ModelInputs& in) {
  spec.validate();
  if (!is_static_gnn(spec.kind)) throw ConfigError("train_static_gnn: not a static GNN");
  require_inputs(in, true);
  TrainResult result{spec, {}, {}};
  std::map<NodeId, double> scores;
  for (int t = in.splits->first_test_year; t <= in.splits->tf; ++t) {
    Problem pb = static_problem(spec, in, t);
    result.models.push_back(fit(spec, pb, std::to_string(t), static_cast<std::uint64_t>(t)));
    score_into(spec, result.models.back(), pb, scores);
  }
  result.scores = to_score_set(scores, run_label(spec));
  return result;
}

TrainResult train_gconvgru(const ModelSpec& spec, const ModelInputs& in) {
  spec.validate();
  if (spec.kind != ModelKind::kGConvGru) throw ConfigError("train_gconvgru: wrong model kind");
  TrainResult result{spec, {}, {}};
  Problem pb = temporal_problem(spec, in);
  result.models.push_back(fit(spec, pb, "all", 0));
  std::map<NodeId, double> scores;
  score_into(spec, result.models.back(), pb, scores);
  result.scores = to_score_set(scores, run_label(spec));
  return result;
}

TrainResult train_model(const ModelSpec& spec, const ModelInputs& in) {
  switch (spec.kind) {
    case ModelKind::kRandom:
      require_inputs(in, false);
      return {spec, {}, heuristic_random(*in.splits, spec.seed)};
    case ModelKind::kPhdRank:
      require_inputs(in, false);
      return {spec, {}, heuristic_phd(*in.dataset, *in.splits, in.labels->threshold)};
    case ModelKind::kAvgCoauthorRank:
      require_inputs(in, true);
      return {spec, {}, heuristic_avg_coauthor(*in.dataset, *in.sequence, *in.splits, in.labels->threshold)};
    case ModelKind::kLogReg:
    case ModelKind::kMlp:
      return train_tabular(spec, in);
    case ModelKind::kGConvGru:
      return train_gconvgru(spec, in);
    default:
      return train_static_gnn(spec, in);
  }
}

ScoreSet predict(const TrainResult& result, const ModelInputs& in) {
  if (is_heuristic(result.spec.kind)) return train_model(result.spec, in).scores;
  std::map<NodeId, double> scores;
  for (const auto& model : result.models) {
    Problem pb = problem_for(result.spec, in, model.stage);
    standardize(pb, model.standardizer);
    score_into(result.spec, model, pb, scores);
  }
  return to_score_set(scores, run_label(result.spec));
}

}  // namespace facplace
