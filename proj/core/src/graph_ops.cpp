#include "facplace/graph_ops.hpp"

#include <cmath>

namespace facplace {

SparseMatrix gcn_operator(const Snapshot& g, bool use_weights) {
  const std::size_t n = g.node_count();
  std::vector<double> degree(n, 1.0);  // self loop
  for (NodeId i = 0; i < n; ++i) {
    for (const auto& nb : g.neighbors(i)) degree[i] += use_weights ? nb.weight : 1.0;
  }
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(n + 2 * g.edges().size());
  for (NodeId i = 0; i < n; ++i) {
    entries.push_back({i, i, 1.0 / degree[i]});
    for (const auto& nb : g.neighbors(i)) {
      const double w = use_weights ? nb.weight : 1.0;
      entries.push_back({i, nb.node, w / std::sqrt(degree[i] * degree[nb.node])});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SparseMatrix mean_operator(const Snapshot& g) {
  const std::size_t n = g.node_count();
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(2 * g.edges().size());
  for (NodeId i = 0; i < n; ++i) {
    const auto row = g.neighbors(i);
    for (const auto& nb : row) entries.push_back({i, nb.node, 1.0 / static_cast<double>(row.size())});
  }
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

SparseMatrix scaled_laplacian(const Snapshot& g) {
  const std::size_t n = g.node_count();
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(2 * g.edges().size());
  for (NodeId i = 0; i < n; ++i) {
    const double di = static_cast<double>(g.degree(i));
    for (const auto& nb : g.neighbors(i)) {
      const double dj = static_cast<double>(g.degree(nb.node));
      entries.push_back({i, nb.node, -1.0 / std::sqrt(di * dj)});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

EdgeIndex attention_edges(const Snapshot& g) {
  EdgeIndex index;
  index.node_count = g.node_count();
  for (NodeId i = 0; i < g.node_count(); ++i) {
    bool self_done = false;
    for (const auto& nb : g.neighbors(i)) {
      if (!self_done && nb.node > i) {
        index.src.push_back(i);
        index.dst.push_back(i);
        self_done = true;
      }
      index.src.push_back(nb.node);
      index.dst.push_back(i);
    }
    if (!self_done) {
      index.src.push_back(i);
      index.dst.push_back(i);
    }
  }
  return index;
}

}  // namespace facplace
