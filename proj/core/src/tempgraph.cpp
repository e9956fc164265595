#include "facplace/tempgraph.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"

namespace facplace {
namespace {

std::vector<WeightedEdge> merge_sorted(const std::vector<WeightedEdge>& a,
                                       const std::vector<WeightedEdge>& b) {
  std::vector<WeightedEdge> out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && std::tie(a[i].u, a[i].v) < std::tie(b[j].u, b[j].v))) {
      out.push_back(a[i++]);
    } else if (i == a.size() || std::tie(b[j].u, b[j].v) < std::tie(a[i].u, a[i].v)) {
      out.push_back(b[j++]);
    } else {
      out.push_back({a[i].u, a[i].v, a[i].weight + b[j].weight});
      ++i;
      ++j;
    }
  }
  return out;
}

// Sorts and merges duplicate pairs.
std::vector<WeightedEdge> canonicalize(std::vector<WeightedEdge> edges) {
  std::sort(edges.begin(), edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return std::tie(a.u, a.v) < std::tie(b.u, b.v);
  });
  std::vector<WeightedEdge> out;
  for (const auto& e : edges) {
    if (!out.empty() && out.back().u == e.u && out.back().v == e.v) {
      out.back().weight += e.weight;
    } else {
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace

Snapshot::Snapshot(std::size_t node_count, std::vector<WeightedEdge> edges)
    : edges_(std::move(edges)) {
  std::vector<std::size_t> degree(node_count, 0);
  for (const auto& e : edges_) {
    if (e.u >= e.v || e.v >= node_count || e.weight == 0) {
      throw DataError(fmt::format("snapshot: invalid edge ({},{},{})", e.u, e.v, e.weight));
    }
    ++degree[e.u];
    ++degree[e.v];
  }
  offsets_.assign(node_count + 1, 0);
  for (std::size_t i = 0; i < node_count; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
  adjacency_.resize(offsets_.back());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  // Edges are sorted by (u, v). The first pass fills each row's smaller
  // neighbours, the second its larger ones, both ascending.
  for (const auto& e : edges_) adjacency_[cursor[e.v]++] = {e.u, e.weight};
  for (const auto& e : edges_) adjacency_[cursor[e.u]++] = {e.v, e.weight};
}

std::span<const Snapshot::Neighbor> Snapshot::neighbors(NodeId i) const {
  if (i + 1 >= offsets_.size()) {
    throw DataError(fmt::format("snapshot: node {} out of range", i));
  }
  return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

std::uint32_t Snapshot::weight(NodeId i, NodeId j) const {
  const auto row = neighbors(i);
  const auto it = std::lower_bound(row.begin(), row.end(), j,
                                   [](const Neighbor& n, NodeId key) { return n.node < key; });
  return (it != row.end() && it->node == j) ? it->weight : 0;
}

std::uint64_t Snapshot::total_weight() const {
  std::uint64_t total = 0;
  for (const auto& e : edges_) total += e.weight;
  return total;
}

SnapshotSequence SnapshotSequence::from_contributions(
    int t0, int tf, std::size_t node_count, std::vector<std::vector<WeightedEdge>> per_year) {
  if (t0 > tf) throw DataError(fmt::format("sequence: t0 {} > tf {}", t0, tf));
  const std::size_t years = static_cast<std::size_t>(tf - t0 + 1);
  if (per_year.size() != years) {
    throw DataError(fmt::format("sequence: expected {} yearly increments, got {}", years,
                                per_year.size()));
  }
  SnapshotSequence seq;
  seq.t0_ = t0;
  seq.tf_ = tf;
  seq.node_count_ = node_count;
  std::vector<WeightedEdge> cumulative;
  for (std::size_t k = 0; k < years; ++k) {
    for (const auto& e : per_year[k]) {
      if (e.u >= e.v || e.v >= node_count || e.weight == 0) {
        throw DataError(fmt::format("sequence: invalid contribution ({},{},{}) in {}", e.u, e.v,
                                    e.weight, t0 + static_cast<int>(k)));
      }
    }
    YearIncrement inc;
    inc.year = t0 + static_cast<int>(k);
    inc.contributions = canonicalize(std::move(per_year[k]));
    for (const auto& e : inc.contributions) {
      const auto it = std::lower_bound(
          cumulative.begin(), cumulative.end(), e, [](const WeightedEdge& a, const WeightedEdge& b) {
            return std::tie(a.u, a.v) < std::tie(b.u, b.v);
          });
      if (it == cumulative.end() || it->u != e.u || it->v != e.v) {
        inc.first_occurrence.push_back({e.u, e.v});
      }
    }
    cumulative = merge_sorted(cumulative, inc.contributions);
    seq.snapshots_.emplace_back(node_count, cumulative);
    seq.increments_.push_back(std::move(inc));
  }
  return seq;
}

const Snapshot& SnapshotSequence::at(int t) const {
  if (!contains_year(t)) {
    throw DataError(fmt::format("sequence: year {} outside [{}, {}]", t, t0_, tf_));
  }
  return snapshots_[static_cast<std::size_t>(t - t0_)];
}

const YearIncrement& SnapshotSequence::increment(int t) const {
  if (!contains_year(t)) {
    throw DataError(fmt::format("sequence: year {} outside [{}, {}]", t, t0_, tf_));
  }
  return increments_[static_cast<std::size_t>(t - t0_)];
}

SnapshotSequence build_sequence(const LinkedDataset& dataset, int t0, int tf, HistoryMode history) {
  if (t0 > tf) throw DataError(fmt::format("build: t0 {} > tf {}", t0, tf));
  for (const auto& r : dataset.researchers) {
    if (r.hire_year > tf) {
      throw DataError(fmt::format("build: researcher '{}' hired in {} after tf {}",
                                  r.canonical_name, r.hire_year, tf));
    }
  }
  const std::size_t years = static_cast<std::size_t>(tf - t0 + 1);
  std::vector<std::vector<WeightedEdge>> per_year(years);
  std::vector<NodeId> cohort;
  for (const auto& pub : dataset.publications) {
    if (pub.year > tf) continue;
    if (pub.year < t0 && history == HistoryMode::kDrop) continue;
    cohort.clear();
    for (const auto& slot : pub.authors) {
      if (slot.node) cohort.push_back(*slot.node);
    }
    std::sort(cohort.begin(), cohort.end());
    cohort.erase(std::unique(cohort.begin(), cohort.end()), cohort.end());
    auto& bucket = per_year[static_cast<std::size_t>(std::max(pub.year, t0) - t0)];
    for (std::size_t a = 0; a < cohort.size(); ++a) {
      for (std::size_t b = a + 1; b < cohort.size(); ++b) {
        bucket.push_back({cohort[a], cohort[b], 1});
      }
    }
  }
  return SnapshotSequence::from_contributions(t0, tf, dataset.node_count(), std::move(per_year));
}

NodePartition partition_nodes(const LinkedDataset& dataset, int t0, int tf) {
  if (t0 > tf) throw DataError(fmt::format("partition: t0 {} > tf {}", t0, tf));
  NodePartition part;
  part.t0 = t0;
  part.tf = tf;
  part.hire_year.reserve(dataset.node_count());
  for (const auto& r : dataset.researchers) {
    if (r.hire_year > tf) {
      throw DataError(fmt::format("partition: researcher '{}' hired in {} after tf {}",
                                  r.canonical_name, r.hire_year, tf));
    }
    part.hire_year.push_back(r.hire_year);
    if (r.hire_year >= t0) part.v_hire.push_back(r.node_id);
    else part.v_faculty.push_back(r.node_id);
  }
  return part;
}

std::vector<WeightedNeighbor> neighbors(const SnapshotSequence& seq, int t, NodeId i) {
  if (i >= seq.node_count()) {
    throw DataError(fmt::format("neighbors: node {} out of range", i));
  }
  std::vector<WeightedNeighbor> out;
  for (const auto& n : seq.at(t).neighbors(i)) out.push_back({n.node, n.weight});
  return out;
}

void write_sequence(const SnapshotSequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int t = seq.t0(); t <= seq.tf(); ++t) {
    std::ofstream out(dir / fmt::format("snapshot_{}.csv", t), std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write snapshots under '{}'", dir.string()));
    out << "i,j,weight\n";
    for (const auto& e : seq.at(t).edges()) out << e.u << ',' << e.v << ',' << e.weight << '\n';
  }
  std::ofstream inc(dir / "increments.csv", std::ios::binary);
  inc << "year,i,j\n";
  for (const auto& increment : seq.increments()) {
    for (const auto& e : increment.contributions) {
      for (std::uint32_t k = 0; k < e.weight; ++k) {
        inc << increment.year << ',' << e.u << ',' << e.v << '\n';
      }
    }
  }
  std::ofstream meta(dir / "sequence.json", std::ios::binary);
  meta << nlohmann::json{{"t0", seq.t0()}, {"tf", seq.tf()}, {"node_count", seq.node_count()}}.dump(1)
       << '\n';
}

SnapshotSequence read_sequence(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "sequence.json");
  if (!meta_in) throw DataError(fmt::format("missing '{}'", (dir / "sequence.json").string()));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("sequence.json: {}", e.what()));
  }
  const int t0 = meta.at("t0").get<int>();
  const int tf = meta.at("tf").get<int>();
  const auto node_count = meta.at("node_count").get<std::size_t>();
  const csv::Table table = csv::read_file(dir / "increments.csv");
  csv::require_header(table, {"year", "i", "j"}, "increments.csv");
  std::vector<std::vector<WeightedEdge>> per_year(static_cast<std::size_t>(tf - t0 + 1));
  for (const auto& row : table.rows) {
    try {
      const int year = std::stoi(row.fields[0]);
      const auto i = static_cast<NodeId>(std::stoul(row.fields[1]));
      const auto j = static_cast<NodeId>(std::stoul(row.fields[2]));
      if (year < t0 || year > tf || i == j) throw std::invalid_argument("range");
      per_year[static_cast<std::size_t>(year - t0)].push_back({std::min(i, j), std::max(i, j), 1});
    } catch (const std::exception&) {
      throw DataError(fmt::format("increments.csv:{}: malformed row", row.line));
    }
  }
  return SnapshotSequence::from_contributions(t0, tf, node_count, std::move(per_year));
}

}  // namespace facplace
