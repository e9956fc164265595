#include "support/gradcases.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include "facplace/graph_ops.hpp"

namespace facplace::testing {

Snapshot random_snapshot(std::size_t n, double mean_degree, Rng& rng) {
  std::set<Edge> edges;
  const double p = std::min(1.0, mean_degree / std::max<double>(1.0, static_cast<double>(n - 1)));
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.insert(Edge{i, j});
    }
  }
  std::vector<WeightedEdge> weighted;
  for (const auto& e : edges) weighted.push_back({e.u, e.v, static_cast<std::uint32_t>(1 + rng.below(3))});
  return Snapshot(n, std::move(weighted));
}

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

namespace {

// Reduces a matrix to a scalar with fixed random weights so no coordinate's
// gradient cancels by symmetry.
Var project(Tape& tape, Var v, const Tensor& w) { return sum(mul(v, tape.constant(w))); }

std::vector<std::uint8_t> random_bits(std::size_t n, Rng& rng, double p) {
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = rng.bernoulli(p) ? 1 : 0;
  return out;
}

}  // namespace

std::vector<GradCase> op_cases(std::uint64_t seed, std::size_t nodes) {
  Rng rng = make_stream(seed, "gradcases");
  const std::size_t n = nodes;
  const std::size_t c = 3;
  const Snapshot g = random_snapshot(n, 3.0, rng);
  const SparseMatrix a_hat = gcn_operator(g);
  const SparseMatrix lhat = scaled_laplacian(g);
  const EdgeIndex ei = attention_edges(g);
  const Tensor w_nc = random_tensor(n, c, rng);
  const Tensor w_n1 = random_tensor(n, 1, rng);
  const Tensor w_e1 = random_tensor(ei.src.size(), 1, rng);

  std::vector<std::uint32_t> gather(n + 4);
  for (auto& k : gather) k = static_cast<std::uint32_t>(rng.below(n));
  const Tensor w_g = random_tensor(gather.size(), c, rng);

  std::vector<std::uint8_t> labels = random_bits(n, rng, 0.4);
  labels[0] = 0;
  labels[1] = 1;
  std::vector<std::uint8_t> mask = random_bits(n, rng, 0.6);
  mask[0] = mask[1] = 1;

  std::vector<GradCase> cases;
  auto x = [&] { return random_tensor(n, c, rng); };
  cases.push_back({"add", [=](Tape& t, const std::vector<Var>& v) { return project(t, add(v[0], v[1]), w_nc); }, {x(), x()}});
  cases.push_back({"sub", [=](Tape& t, const std::vector<Var>& v) { return project(t, sub(v[0], v[1]), w_nc); }, {x(), x()}});
  cases.push_back({"mul", [=](Tape& t, const std::vector<Var>& v) { return project(t, mul(v[0], v[1]), w_nc); }, {x(), x()}});
  cases.push_back({"add_row",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, add_row(v[0], v[1]), w_nc); },
                   {x(), random_tensor(1, c, rng)}});
  cases.push_back({"affine",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, affine(v[0], -1.7, 0.3), w_nc); },
                   {x()}});
  cases.push_back({"matmul",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, matmul(v[0], v[1]), w_nc); },
                   {random_tensor(n, 4, rng), random_tensor(4, c, rng)}});
  cases.push_back({"sparse_matmul",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, sparse_matmul(a_hat, v[0]), w_nc); },
                   {x()}});
  cases.push_back({"concat_cols",
                   [=](Tape& t, const std::vector<Var>& v) {
                     return project(t, concat_cols({v[0], v[1]}), [&] {
                       Tensor w(n, 2 * c);
                       for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
                       return w;
                     }());
                   },
                   {x(), x()}});
  cases.push_back({"gather_rows",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, gather_rows(v[0], gather), w_g); },
                   {x()}});
  cases.push_back({"scatter_add_rows",
                   [=](Tape& t, const std::vector<Var>& v) {
                     return project(t, scatter_add_rows(v[0], gather, n), w_nc);
                   },
                   {random_tensor(gather.size(), c, rng)}});
  cases.push_back({"mul_rows",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, mul_rows(v[0], v[1]), w_nc); },
                   {x(), random_tensor(n, 1, rng)}});
  cases.push_back({"segment_softmax",
                   [=](Tape& t, const std::vector<Var>& v) {
                     return project(t, segment_softmax(v[0], ei.dst, n), w_e1);
                   },
                   {random_tensor(ei.src.size(), 1, rng)}});
  cases.push_back({"relu", [=](Tape& t, const std::vector<Var>& v) { return project(t, relu(v[0]), w_nc); }, {x()}});
  cases.push_back({"leaky_relu",
                   [=](Tape& t, const std::vector<Var>& v) { return project(t, leaky_relu(v[0], 0.2), w_nc); },
                   {x()}});
  cases.push_back({"tanh", [=](Tape& t, const std::vector<Var>& v) { return project(t, tanh(v[0]), w_nc); }, {x()}});
  cases.push_back({"sigmoid", [=](Tape& t, const std::vector<Var>& v) { return project(t, sigmoid(v[0]), w_nc); }, {x()}});
  cases.push_back({"dropout",
                   [=](Tape& t, const std::vector<Var>& v) {
                     Rng mask_rng(seed);
                     return project(t, dropout(v[0], 0.3, mask_rng, true), w_nc);
                   },
                   {x()}});
  cases.push_back({"sum", [=](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, {x()}});
  cases.push_back({"softmax_cross_entropy",
                   [=](Tape&, const std::vector<Var>& v) { return softmax_cross_entropy(v[0], labels, mask); },
                   {random_tensor(n, 2, rng)}});
  for (int order : {0, 1, 2, 3}) {
    cases.push_back({"chebyshev_filter_k" + std::to_string(order),
                     [=](Tape& t, const std::vector<Var>& v) {
                       Tensor w(n, c * static_cast<std::size_t>(order + 1));
                       for (std::size_t i = 0; i < w.size(); ++i) w[i] = w_nc[i % w_nc.size()] + 0.01 * static_cast<double>(i % 5);
                       return project(t, chebyshev_filter(lhat, v[0], order), w);
                     },
                     {x()}});
  }
  {
    const std::size_t hidden = 4;
    Rng init = make_stream(seed, "gru");
    auto params = std::make_shared<GruParams>(c, hidden, 1, init, "gru");
    std::vector<Tensor> inputs{random_tensor(n, hidden, rng, 0.5), x()};
    for (Parameter* p : params->all()) inputs.push_back(p->value);
    const Tensor w_h = random_tensor(n, hidden, rng);
    cases.push_back({"gru_cell",
                     [=](Tape& t, const std::vector<Var>& v) {
                       const GruVars g{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
                       return project(t, gru_cell(lhat, v[0], v[1], g, 1), w_h);
                     },
                     std::move(inputs)});
  }
  (void)w_n1;
  return cases;
}

GradCase network_case(ModelKind kind, std::uint64_t seed, std::size_t nodes) {
  Rng rng = make_stream(seed, "network_case", static_cast<std::uint64_t>(kind));
  ModelSpec spec;
  spec.kind = kind;
  spec.features = {FeatureKind::kPhd};
  spec.hidden_dim = 4;
  spec.layers = 2;
  spec.window = 2;
  spec.attention_heads = 2;
  spec.dropout = 0.0;
  const std::size_t in_dim = 3;

  const Snapshot g1 = random_snapshot(nodes, 2.0, rng);
  std::vector<WeightedEdge> more = g1.edges();
  const Snapshot extra = random_snapshot(nodes, 1.5, rng);
  for (const auto& e : extra.edges()) {
    if (g1.weight(e.u, e.v) == 0) more.push_back(e);
  }
  std::sort(more.begin(), more.end());
  const Snapshot g2(nodes, std::move(more));

  auto steps = std::make_shared<std::vector<GraphStep>>();
  steps->push_back(make_step(spec, g1, random_tensor(nodes, in_dim, rng)));
  if (kind == ModelKind::kGConvGru) steps->push_back(make_step(spec, g2, random_tensor(nodes, in_dim, rng)));

  std::vector<std::uint8_t> labels(nodes);
  std::vector<std::uint8_t> mask(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    mask[i] = rng.bernoulli(0.7) ? 1 : 0;
  }
  labels[0] = 0;
  labels[1] = 1;
  mask[0] = mask[1] = 1;

  Rng init = make_stream(seed, "network_init", static_cast<std::uint64_t>(kind));
  std::shared_ptr<Network> net = make_network(spec, in_dim, init);
  std::vector<Tensor> inputs;
  for (const auto& p : net->parameters()) {
    Tensor v = p.value;
    // Move biases off zero so ReLU kinks are not hit at initialisation.
    for (auto& x : v.data()) x += 0.05 * rng.normal();
    inputs.push_back(std::move(v));
  }
  GradCase out;
  out.name = model_kind_name(kind);
  out.inputs = std::move(inputs);
  out.fn = [=](Tape& tape, const std::vector<Var>& v) {
    std::vector<const GraphStep*> ptrs;
    for (const auto& s : *steps) ptrs.push_back(&s);
    Rng unused(0);
    const auto logits = net->forward(tape, v, ptrs, false, unused);
    return softmax_cross_entropy(logits.back(), labels, mask);
  };
  return out;
}

}  // namespace facplace::testing
