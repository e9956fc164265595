#pragma once

// Degree-preserving randomisation of a snapshot sequence: double-edge swaps
// applied to each year's first-occurrence edges.

#include <cstdint>
#include <filesystem>
#include <unordered_set>
#include <vector>

#include "facplace/rng.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace {

struct EdgeHash {
  std::size_t operator()(const Edge& e) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(e.u) << 32) | e.v);
  }
};

using EdgeSet = std::unordered_set<Edge, EdgeHash>;

struct SwapOptions {
  double max_attempt_factor = 100.0;
  // Pick each edge's endpoint order at random. When false, edges are used
  // as stored: (v1,v2),(v3,v4) -> (v1,v3),(v2,v4).
  bool random_orientation = true;
};

struct SwapResult {
  std::vector<Edge> edges;  // slot k holds the current pair of input edge k
  std::size_t target = 0;
  std::size_t rewired = 0;  // edge slots changed, 2 per swap
  std::size_t attempts = 0;
  std::size_t unresolved_conflicts = 0;  // slots still in `forbidden`
  bool shortfall() const { return rewired < target; }
};

// Input edges must be simple. Edges that already appear in `forbidden` are
// swapped first so the output avoids it wherever possible.
SwapResult double_edge_swap_set(const std::vector<Edge>& edges, std::size_t n_rewired_target,
                                const EdgeSet& forbidden, Rng& rng, const SwapOptions& options = {});

struct RewirePlan {
  int p = 0;  // percent of each increment's edges to rewire
  std::uint64_t seed = 0;
  int replicate = 0;
  double max_attempt_factor = 100.0;
  bool forbid_cumulative = true;  // false: forbid only within the increment
  bool random_orientation = true;

  void validate() const;
};

struct YearRewireReport {
  int year = 0;
  std::size_t increment_edges = 0;
  std::size_t target = 0;
  std::size_t rewired = 0;
  std::size_t attempts = 0;
  std::size_t unresolved_conflicts = 0;
};

struct RewireResult {
  SnapshotSequence sequence;
  std::vector<YearRewireReport> years;
};

// Repeat collaborations follow their pair's rewired first-occurrence edge.
RewireResult rewire_sequence(const SnapshotSequence& seq, const RewirePlan& plan);

std::filesystem::path rewired_dir(const std::filesystem::path& root, int p, int replicate);

// Writes the sequence (tempgraph formats) plus rewire_report.json.
void write_rewired(const RewireResult& result, const RewirePlan& plan, const std::filesystem::path& dir);

}  // namespace facplace
