#include <benchmark/benchmark.h>

#include <set>
#include <vector>

#include "facplace/diffcore.hpp"
#include "facplace/evalstat.hpp"
#include "facplace/featurize.hpp"
#include "facplace/graph_ops.hpp"
#include "facplace/ingest.hpp"
#include "facplace/models.hpp"
#include "facplace/rewire.hpp"
#include "facplace/rng.hpp"
#include "facplace/synth.hpp"
#include "facplace/tempgraph.hpp"

using namespace facplace;

namespace {

std::vector<Edge> random_edges(std::size_t nodes, std::size_t count, Rng& rng) {
  std::set<Edge> edges;
  while (edges.size() < count) {
    const auto a = static_cast<NodeId>(rng.below(nodes));
    const auto b = static_cast<NodeId>(rng.below(nodes));
    if (a != b) edges.insert(make_edge(a, b));
  }
  return {edges.begin(), edges.end()};
}

Snapshot random_snapshot(std::size_t nodes, std::size_t count, Rng& rng) {
  std::vector<WeightedEdge> w;
  for (const auto& e : random_edges(nodes, count, rng)) w.push_back({e.u, e.v, 1});
  return Snapshot(nodes, std::move(w));
}

void BM_PrAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.bernoulli(0.2);
  }
  y[0] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(pr_auc(s, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_PrAuc)->RangeMultiplier(10)->Range(1000, 100000);

void BM_SparseMatmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const SparseMatrix a = gcn_operator(random_snapshot(n, 4 * n, rng));
  Tensor x(n, 16);
  for (auto& v : x.data()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(sparse_matmul(a, tape.constant(x)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.entries.size()));
}
BENCHMARK(BM_SparseMatmul)->RangeMultiplier(4)->Range(1000, 64000);

struct Market {
  LinkedDataset dataset;
  SnapshotSequence sequence;
  FeatureTensor phd, bib, ones;
  SplitMasks splits;
  LabelVector labels;

  explicit Market(std::size_t researchers) {
    SynthConfig c;
    c.n_researchers = researchers;
    const SynthOutput out = generate(c);
    dataset = link_and_impute(parse_publications(out.publications_csv), parse_faculty(out.faculty_csv),
                              parse_rankings(out.rankings_csv), {});
    sequence = build_sequence(dataset, c.t0, c.tf);
    phd = phd_tensor(dataset, c.t0, c.tf);
    bib = bib_tensor(dataset, c.t0, c.tf);
    ones = ones_tensor(dataset.node_count(), c.t0, c.tf);
    splits = temporal_split(partition_nodes(dataset, c.t0, c.tf), 1);
    labels = assign_labels(dataset, 10);
  }
  ModelInputs inputs() const { return {&dataset, &sequence, &phd, &bib, &ones, &labels, &splits}; }
};

// Ten epochs of a two-layer GCN on a synthetic market.
void BM_GcnTenEpochs(benchmark::State& state) {
  const Market m(static_cast<std::size_t>(state.range(0)));
  ModelSpec spec;
  spec.kind = ModelKind::kGcn;
  spec.features = {FeatureKind::kPhd, FeatureKind::kBib};
  spec.epochs = 10;
  spec.patience = 10;
  for (auto _ : state) benchmark::DoNotOptimize(train_model(spec, m.inputs()).scores.size());
}
BENCHMARK(BM_GcnTenEpochs)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_DoubleEdgeSwap(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  Rng gen(3);
  const auto edges = random_edges(m / 2, m, gen);
  const EdgeSet forbidden;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng rng(seed++);
    benchmark::DoNotOptimize(double_edge_swap_set(edges, m, forbidden, rng).rewired);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m));
}
BENCHMARK(BM_DoubleEdgeSwap)->RangeMultiplier(10)->Range(1000, 100000);

}  // namespace

BENCHMARK_MAIN();
