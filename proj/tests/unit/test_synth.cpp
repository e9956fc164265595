#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "facplace/error.hpp"
#include "facplace/models.hpp"
#include "facplace/synth.hpp"
#include "support/fixtures.hpp"

using namespace facplace;
using facplace::testing::build_market;
using facplace::testing::score_pr_auc;

namespace {

SynthConfig weights(double w_phd, double w_bib, double w_net, double noise, std::uint64_t seed) {
  SynthConfig c;
  c.n_researchers = 400;
  c.w_phd = w_phd;
  c.w_bib = w_bib;
  c.w_net = w_net;
  c.noise = noise;
  c.seed = seed;
  return c;
}

bool has_coauthor(const std::string& set) { return set.find("Co-author") != std::string::npos; }

}  // namespace

TEST_CASE("a pure PhD-rank market is solved by the PhD heuristic at every K") {
  const std::vector<double> ks{10, 20, 30, 40, 50};
  const auto m = build_market(weights(1.0, 0.0, 0.0, 0.0, 2), 1, ks);
  for (double k : ks) {
    CAPTURE(k);
    CHECK(score_pr_auc(heuristic_phd(m.dataset, m.splits, k), m.labels.at(k).high) == 1.0);
  }
}

TEST_CASE("a network-driven market favours the co-author heuristic") {
  std::vector<double> diff;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = build_market(weights(0.0, 0.0, 1.0, 0.1, 50 + seed), 1);
    const auto& y = m.labels.at(10).high;
    diff.push_back(score_pr_auc(heuristic_avg_coauthor(m.dataset, m.sequence, m.splits, 10), y) -
                   score_pr_auc(heuristic_phd(m.dataset, m.splits, 10), y));
  }
  std::sort(diff.begin(), diff.end());
  CHECK(0.5 * (diff[4] + diff[5]) > 0.0);
}

TEST_CASE("generation is deterministic in the seed") {
  const SynthOutput a = generate(weights(0.5, 0.3, 1.0, 0.2, 9));
  const SynthOutput b = generate(weights(0.5, 0.3, 1.0, 0.2, 9));
  CHECK(a.publications_csv == b.publications_csv);
  CHECK(a.faculty_csv == b.faculty_csv);
  CHECK(a.rankings_csv == b.rankings_csv);
  CHECK(a.truth_json == b.truth_json);
  CHECK(generate(weights(0.5, 0.3, 1.0, 0.2, 10)).publications_csv != a.publications_csv);
  const auto truth = nlohmann::json::parse(a.truth_json);
  CHECK(truth.contains("config"));
}

TEST_CASE("planted truth orders feature sets by hiring weight") {
  const PlantedTruth net = planted_truth(weights(0.1, 0.1, 1.0, 0.2, 1));
  REQUIRE(net.reliable);
  for (std::size_t i = 0; i < 4; ++i) CHECK(has_coauthor(net.ranking[i]));
  CHECK(std::find(net.better_than.begin(), net.better_than.end(),
                  std::pair<std::string, std::string>{"Co-author", "PhD+Bib"}) != net.better_than.end());

  const PlantedTruth equal = planted_truth(weights(1.0, 1.0, 1.0, 0.2, 1));
  CHECK(equal.ranking.front() == "PhD+Bib+Co-author");
  CHECK(std::find(equal.better_than.begin(), equal.better_than.end(),
                  std::pair<std::string, std::string>{"PhD", "Bib"}) == equal.better_than.end());

  const PlantedTruth noisy = planted_truth(weights(1.0, 1.0, 1.0, 0.95, 1));
  CHECK_FALSE(noisy.reliable);
  CHECK(noisy.better_than.empty());
}

TEST_CASE("generated markets link cleanly at the calibrated prevalence") {
  SynthConfig c = weights(0.5, 0.3, 1.0, 0.2, 4);
  c.n_researchers = 1200;
  const auto m = build_market(c, 1);
  CHECK(m.dataset.link_report.publications_dropped == 0);
  CHECK(m.dataset.link_report.faculty_excluded_no_hire_year == 0);
  CHECK(m.dataset.link_report.faculty_rank_missing == 0);
  CHECK(m.dataset.link_report.phd_rank_missing == 0);
  CHECK(m.dataset.node_count() == 1200);
  const double prevalence =
      static_cast<double>(m.labels.at(10).positives_among(m.partition.v_hire)) / m.partition.v_hire.size();
  CAPTURE(prevalence);
  CHECK(std::abs(prevalence - 0.22) <= 0.02);
}

TEST_CASE("invalid configurations") {
  SynthConfig tight = weights(0.5, 0.3, 1.0, 0.2, 1);
  tight.n_researchers = 2000;
  tight.n_departments = 5;
  tight.calibration_k = 2;
  tight.department_capacity = 1;
  CHECK_THROWS_AS(generate(tight), ConfigError);
  CHECK_THROWS_AS(generate(weights(0.0, 0.0, 0.0, 0.2, 1)), ConfigError);
  CHECK_THROWS_AS(generate(weights(1.0, 0.0, 0.0, 1.0, 1)), ConfigError);
}
