#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "facplace/error.hpp"
#include "facplace/tempgraph.hpp"
#include "support/fixtures.hpp"

using namespace facplace;
using facplace::testing::make_dataset;

namespace {

const char* kRanks = "U1,1\nU2,2\nU3,3\n";

// Nodes (sorted by canonical name): 0 ann, 1 bob, 2 cara, 3 dan.
const char* kFaculty =
    "Ann Lee,U1,2015,U2,\n"
    "Bob Ray,U2,2005,U1,\n"
    "Cara Moss,U3,2016,U1,\n"
    "Dan Fox,U1,2012,U3,\n";

}  // namespace

TEST_CASE("cumulative weights fold earlier history into the first snapshot") {
  const LinkedDataset ds = make_dataset("p1,2009,Ann Lee|Bob Ray\np2,2011,Ann Lee|Bob Ray\n", kFaculty, kRanks);
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);
  CHECK(seq.at(2010).weight(0, 1) == 1);
  CHECK(seq.at(2011).weight(0, 1) == 2);
  CHECK(seq.at(2011).weight(1, 0) == 2);
  CHECK(seq.at(2020).weight(0, 1) == 2);

  const SnapshotSequence dropped = build_sequence(ds, 2010, 2020, HistoryMode::kDrop);
  CHECK(dropped.at(2010).weight(0, 1) == 0);
  CHECK(dropped.at(2011).weight(0, 1) == 1);
}

TEST_CASE("a three-author paper yields a weight-one triangle") {
  const LinkedDataset ds = make_dataset("p1,2012,Ann Lee|Bob Ray|Cara Moss\n", kFaculty, kRanks);
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);
  const auto& edges = seq.at(2012).edges();
  REQUIRE(edges.size() == 3);
  for (const auto& e : edges) CHECK(e.weight == 1);
  CHECK(neighbors(seq, 2012, 0).size() == 2);
  CHECK(neighbors(seq, 2012, 1).size() == 2);
  CHECK(neighbors(seq, 2012, 2).size() == 2);
  CHECK(neighbors(seq, 2012, 3).empty());
  CHECK(neighbors(seq, 2011, 0).empty());
}

TEST_CASE("external co-authors add no edges") {
  const LinkedDataset ds = make_dataset("p1,2012,Ann Lee|Someone Else\n", kFaculty, kRanks);
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);
  CHECK(seq.at(2020).edges().empty());
  CHECK(seq.at(2020).node_count() == 4);
}

TEST_CASE("partition by hire year") {
  const LinkedDataset ds = make_dataset("", kFaculty, kRanks);
  const NodePartition part = partition_nodes(ds, 2010, 2020);
  CHECK(part.v_hire == std::vector<NodeId>{0, 2, 3});
  CHECK(part.v_faculty == std::vector<NodeId>{1});
  CHECK(part.is_hire(0));
  CHECK_FALSE(part.is_hire(1));
  CHECK_THROWS_AS(partition_nodes(ds, 2010, 2014), DataError);
}

TEST_CASE("snapshot lookups outside the range fail") {
  const LinkedDataset ds = make_dataset("", kFaculty, kRanks);
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);
  CHECK_THROWS_AS(seq.at(2009), DataError);
  CHECK_THROWS_AS(seq.at(2021), DataError);
}

TEST_CASE("sequence invariants on a synthetic market") {
  SynthConfig cfg;
  cfg.n_researchers = 150;
  cfg.seed = 21;
  const auto raw = facplace::testing::raw_market(cfg);
  const LinkedDataset ds = link_and_impute(raw.publications, raw.faculty, raw.ranks, {});
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);

  // Total weight at tf equals the number of within-cohort co-author incidences.
  std::uint64_t incidences = 0;
  for (const auto& p : ds.publications) {
    std::vector<NodeId> nodes;
    for (const auto& a : p.authors) {
      if (a.node) nodes.push_back(*a.node);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    incidences += nodes.size() * (nodes.size() - 1) / 2;
  }
  CHECK(seq.at(2020).total_weight() == incidences);

  // Increments sum back to the cumulative weights.
  std::map<Edge, std::uint64_t> acc;
  for (int t = 2010; t <= 2020; ++t) {
    for (const auto& c : seq.increment(t).contributions) acc[Edge{c.u, c.v}] += c.weight;
    std::map<Edge, std::uint64_t> snap;
    for (const auto& e : seq.at(t).edges()) snap[Edge{e.u, e.v}] = e.weight;
    CHECK(acc == snap);
    for (const auto& e : seq.increment(t).first_occurrence) {
      if (t > 2010) CHECK(seq.at(t - 1).weight(e.u, e.v) == 0);
      CHECK(seq.at(t).weight(e.u, e.v) > 0);
    }
  }

  // Symmetric adjacency and monotone neighbourhoods.
  for (int t = 2010; t <= 2020; ++t) {
    const Snapshot& g = seq.at(t);
    for (NodeId i = 0; i < g.node_count(); ++i) {
      for (const auto& nb : g.neighbors(i)) {
        CHECK(nb.node != i);
        CHECK(g.weight(nb.node, i) == nb.weight);
      }
      if (t > 2010) {
        for (const auto& nb : neighbors(seq, t - 1, i)) CHECK(g.weight(i, nb.node) >= nb.weight);
      }
    }
  }
}

TEST_CASE("sequence files round trip") {
  const LinkedDataset ds = make_dataset("p1,2009,Ann Lee|Bob Ray\np2,2013,Ann Lee|Cara Moss|Dan Fox\n", kFaculty,
                                        kRanks);
  const SnapshotSequence seq = build_sequence(ds, 2010, 2020);
  const auto dir = std::filesystem::temp_directory_path() / "facplace_tempgraph_roundtrip";
  std::filesystem::remove_all(dir);
  write_sequence(seq, dir);
  CHECK(read_sequence(dir) == seq);
  std::filesystem::remove_all(dir);
}
