#include "facplace/rewire.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "facplace/error.hpp"

namespace facplace {

SwapResult double_edge_swap_set(const std::vector<Edge>& edges, std::size_t n_rewired_target,
                                const EdgeSet& forbidden, Rng& rng, const SwapOptions& options) {
  SwapResult result;
  result.edges = edges;
  result.target = n_rewired_target;
  EdgeSet present;
  for (const auto& e : edges) {
    if (e.u >= e.v) throw DataError(fmt::format("swap: edge ({}, {}) is not canonical", e.u, e.v));
    if (!present.insert(e).second) throw DataError(fmt::format("swap: duplicate edge ({}, {})", e.u, e.v));
  }
  std::vector<std::size_t> conflicts;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (forbidden.count(edges[k])) conflicts.push_back(k);
  }
  if (edges.size() < 2 || (n_rewired_target == 0 && conflicts.empty())) {
    result.unresolved_conflicts = conflicts.size();
    return result;
  }
  const auto budget = static_cast<std::size_t>(
      std::ceil(options.max_attempt_factor * static_cast<double>(n_rewired_target + 2 * conflicts.size())));
  auto& slots = result.edges;
  while ((result.rewired < n_rewired_target || !conflicts.empty()) && result.attempts < budget) {
    ++result.attempts;
    std::size_t ci = 0;
    std::size_t a;
    if (!conflicts.empty()) {
      ci = static_cast<std::size_t>(rng.below(conflicts.size()));
      a = conflicts[ci];
    } else {
      a = static_cast<std::size_t>(rng.below(slots.size()));
    }
    std::size_t b = static_cast<std::size_t>(rng.below(slots.size() - 1));
    if (b >= a) ++b;
    NodeId v1 = slots[a].u, v2 = slots[a].v, v3 = slots[b].u, v4 = slots[b].v;
    if (options.random_orientation) {
      if (rng.bernoulli(0.5)) std::swap(v1, v2);
      if (rng.bernoulli(0.5)) std::swap(v3, v4);
    }
    if (v1 == v3 || v1 == v4 || v2 == v3 || v2 == v4) continue;
    const Edge e1 = make_edge(v1, v3);
    const Edge e2 = make_edge(v2, v4);
    if (present.count(e1) || present.count(e2) || forbidden.count(e1) || forbidden.count(e2)) continue;
    present.erase(slots[a]);
    present.erase(slots[b]);
    present.insert(e1);
    present.insert(e2);
    slots[a] = e1;
    slots[b] = e2;
    result.rewired += 2;
    conflicts.erase(std::remove_if(conflicts.begin(), conflicts.end(),
                                   [&](std::size_t k) { return k == a || k == b; }),
                    conflicts.end());
  }
  result.unresolved_conflicts = conflicts.size();
  return result;
}

void RewirePlan::validate() const {
  if (p < 0 || p > 100) throw ConfigError(fmt::format("rewire: p {} outside [0, 100]", p));
  if (!(max_attempt_factor > 0.0)) throw ConfigError("rewire: max_attempt_factor must be positive");
}

RewireResult rewire_sequence(const SnapshotSequence& seq, const RewirePlan& plan) {
  plan.validate();
  Rng rng = make_stream(plan.seed, "rewire",
                        (static_cast<std::uint64_t>(plan.p) << 32) | static_cast<std::uint32_t>(plan.replicate));
  const SwapOptions options{plan.max_attempt_factor, plan.random_orientation};
  RewireResult result;
  std::map<Edge, Edge> mapped;  // original pair -> rewired pair
  EdgeSet cumulative;
  std::vector<std::vector<WeightedEdge>> per_year;
  const EdgeSet none;
  for (const auto& inc : seq.increments()) {
    const std::size_t m = inc.first_occurrence.size();
    const std::size_t target = (static_cast<std::size_t>(plan.p) * m + 99) / 100;
    const SwapResult swap =
        double_edge_swap_set(inc.first_occurrence, target, plan.forbid_cumulative ? cumulative : none, rng, options);
    for (std::size_t k = 0; k < m; ++k) mapped.emplace(inc.first_occurrence[k], swap.edges[k]);
    result.years.push_back({inc.year, m, target, swap.rewired, swap.attempts, swap.unresolved_conflicts});

    std::vector<WeightedEdge> contributions;
    contributions.reserve(inc.contributions.size());
    for (const auto& c : inc.contributions) {
      const Edge to = mapped.at(Edge{c.u, c.v});
      contributions.push_back({to.u, to.v, c.weight});
    }
    for (const auto& e : swap.edges) cumulative.insert(e);
    per_year.push_back(std::move(contributions));
  }
  result.sequence = SnapshotSequence::from_contributions(seq.t0(), seq.tf(), seq.node_count(), std::move(per_year));
  return result;
}

std::filesystem::path rewired_dir(const std::filesystem::path& root, int p, int replicate) {
  return root / "rewired" / fmt::format("p={}", p) / fmt::format("rep={}", replicate);
}

void write_rewired(const RewireResult& result, const RewirePlan& plan, const std::filesystem::path& dir) {
  write_sequence(result.sequence, dir);
  nlohmann::json years = nlohmann::json::array();
  for (const auto& y : result.years) {
    years.push_back({{"year", y.year},
                     {"increment_edges", y.increment_edges},
                     {"target", y.target},
                     {"rewired", y.rewired},
                     {"attempts", y.attempts},
                     {"shortfall", y.rewired < y.target},
                     {"unresolved_conflicts", y.unresolved_conflicts}});
  }
  nlohmann::json doc{{"p", plan.p},
                     {"replicate", plan.replicate},
                     {"seed", plan.seed},
                     {"forbid_cumulative", plan.forbid_cumulative},
                     {"years", years}};
  std::ofstream out(dir / "rewire_report.json", std::ios::binary);
  out << doc.dump(1) << '\n';
}

}  // namespace facplace
