#pragma once

// Cumulative annual co-authorship snapshots over a fixed node set, and the
// hire/faculty partition of that node set.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "facplace/ingest.hpp"

namespace facplace {

struct Edge {
  NodeId u = 0;  // u < v
  NodeId v = 0;

  auto operator<=>(const Edge&) const = default;
};

struct WeightedEdge {
  NodeId u = 0;  // u < v
  NodeId v = 0;
  std::uint32_t weight = 0;

  auto operator<=>(const WeightedEdge&) const = default;
};

inline Edge make_edge(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Edges added in one year: `contributions` is the multiset of co-authorship
// incidences (pair, count) dated that year; `first_occurrence` is the subset
// of pairs absent from every earlier snapshot.
struct YearIncrement {
  int year = 0;
  std::vector<WeightedEdge> contributions;  // sorted, unique pairs, weight >= 1
  std::vector<Edge> first_occurrence;       // sorted

  bool operator==(const YearIncrement&) const = default;
};

// One cumulative snapshot G_t stored as a symmetric CSR adjacency.
class Snapshot {
 public:
  struct Neighbor {
    NodeId node;
    std::uint32_t weight;
  };

  Snapshot() = default;
  Snapshot(std::size_t node_count, std::vector<WeightedEdge> edges);

  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const Neighbor> neighbors(NodeId i) const;
  std::size_t degree(NodeId i) const { return neighbors(i).size(); }
  std::uint32_t weight(NodeId i, NodeId j) const;
  const std::vector<WeightedEdge>& edges() const { return edges_; }  // u < v, sorted
  std::uint64_t total_weight() const;

  bool operator==(const Snapshot& other) const { return edges_ == other.edges_ && offsets_ == other.offsets_; }

 private:
  std::vector<WeightedEdge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
};

enum class HistoryMode { kFold, kDrop };

class SnapshotSequence {
 public:
  SnapshotSequence() = default;

  // Aggregates per-year contribution lists (indexed by year - t0) into
  // cumulative snapshots and derives first-occurrence edges.
  static SnapshotSequence from_contributions(int t0, int tf, std::size_t node_count,
                                             std::vector<std::vector<WeightedEdge>> per_year);

  int t0() const { return t0_; }
  int tf() const { return tf_; }
  std::size_t node_count() const { return node_count_; }
  std::size_t year_count() const { return static_cast<std::size_t>(tf_ - t0_ + 1); }
  bool contains_year(int t) const { return t >= t0_ && t <= tf_; }

  // Throws DataError when t is outside [t0, tf].
  const Snapshot& at(int t) const;
  const YearIncrement& increment(int t) const;
  const std::vector<YearIncrement>& increments() const { return increments_; }

  bool operator==(const SnapshotSequence&) const = default;

 private:
  int t0_ = 0;
  int tf_ = -1;
  std::size_t node_count_ = 0;
  std::vector<Snapshot> snapshots_;
  std::vector<YearIncrement> increments_;
};

struct NodePartition {
  int t0 = 0;
  int tf = 0;
  std::vector<NodeId> v_hire;     // sorted
  std::vector<NodeId> v_faculty;  // sorted
  std::vector<int> hire_year;     // per node (all nodes)

  bool is_hire(NodeId i) const { return hire_year[i] >= t0 && hire_year[i] <= tf; }
};

// Papers dated before t0 fold into G_{t0} (kFold) or are ignored (kDrop).
SnapshotSequence build_sequence(const LinkedDataset& dataset, int t0, int tf,
                                HistoryMode history = HistoryMode::kFold);

NodePartition partition_nodes(const LinkedDataset& dataset, int t0, int tf);

struct WeightedNeighbor {
  NodeId node;
  std::uint32_t weight;

  bool operator==(const WeightedNeighbor&) const = default;
};

// All j with w_ij(t) > 0, sorted by node id.
std::vector<WeightedNeighbor> neighbors(const SnapshotSequence& seq, int t, NodeId i);

// Snapshot export: snapshot_<year>.csv (i,j,weight with i<j), increments.csv
// (year,i,j, one row per co-authorship incidence) and sequence.json.
void write_sequence(const SnapshotSequence& seq, const std::filesystem::path& dir);
SnapshotSequence read_sequence(const std::filesystem::path& dir);

}  // namespace facplace
