#pragma once

// Constant propagation operators derived from a co-authorship snapshot.

#include <cstdint>
#include <vector>

#include "facplace/diffcore.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace {

// D^-1/2 (A + I) D^-1/2 with A binary (or weighted when use_weights).
SparseMatrix gcn_operator(const Snapshot& g, bool use_weights = false);

// Row-normalised binary adjacency without self loops; isolated rows are zero.
SparseMatrix mean_operator(const Snapshot& g);

// Scaled Laplacian 2L/lambda_max - I with lambda_max = 2 and the symmetric
// normalised L, i.e. -D^-1/2 A D^-1/2 on the binary adjacency.
SparseMatrix scaled_laplacian(const Snapshot& g);

// Directed message edges j -> i for every neighbour pair plus self loops,
// sorted by target.
struct EdgeIndex {
  std::size_t node_count = 0;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
};

EdgeIndex attention_edges(const Snapshot& g);

}  // namespace facplace
