#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "facplace/error.hpp"
#include "facplace/evalstat.hpp"
#include "facplace/rng.hpp"
#include "support/fixtures.hpp"

using namespace facplace;
using facplace::testing::ap_oracle;

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

// Last `n` whitespace-separated tokens of the first line starting with `term`.
std::vector<std::string> row_tail(const std::string& text, const std::string& term, std::size_t n) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(term + " ", 0) != 0) continue;
    auto t = tokens(line);
    return {t.end() - static_cast<std::ptrdiff_t>(n), t.end()};
  }
  return {};
}

}  // namespace

TEST_CASE("precision and recall at 0.5") {
  const std::vector<double> s{0.9, 0.6, 0.4};
  const std::vector<std::uint8_t> y{1, 0, 1};
  const auto pr = precision_recall(s, y);
  CHECK(pr.precision == 0.5);
  CHECK(pr.recall == 0.5);
  CHECK_FALSE(pr.no_predicted_positive);

  const std::vector<double> low{0.1, 0.2, 0.3};
  const auto none = precision_recall(low, y);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.no_predicted_positive);

  const std::vector<std::uint8_t> negatives{0, 0, 0};
  CHECK_THROWS_AS(precision_recall(s, negatives), DataError);
}

TEST_CASE("average precision examples") {
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 0}) == 1.0);
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<std::uint8_t>{0, 1, 0, 1}) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pr_auc(std::vector<double>{0.3, 0.2}, std::vector<std::uint8_t>{1, 1}) == 1.0);
  // Tied scores form one step: AP equals prevalence.
  CHECK(pr_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<std::uint8_t>{1, 0, 0, 1}) == 0.5);
  CHECK_THROWS_AS(pr_auc(std::vector<double>{0.3}, std::vector<std::uint8_t>{0}), DataError);
  CHECK_THROWS_AS(pr_auc(std::vector<double>{}, std::vector<std::uint8_t>{}), DataError);
}

TEST_CASE("average precision matches the brute-force oracle and monotone transforms") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 10.0) / 10.0;  // plenty of ties
      y[i] = rng.bernoulli(0.3);
    }
    y[rng.below(n)] = 1;
    const double ap = pr_auc(s, y);
    CHECK(std::abs(ap - ap_oracle(s, y)) <= 1e-12);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(pr_auc(t, y) == ap);

    // The point at threshold 0.5 lies on the stepwise curve.
    const auto pr = precision_recall(s, y);
    double tp = 0, pred = 0, pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pos += y[i];
      if (s[i] >= 0.5) {
        pred += 1;
        tp += y[i];
      }
    }
    CHECK(pr.recall == tp / pos);
    CHECK(pr.precision == (pred > 0 ? tp / pred : 0.0));
  }
}

TEST_CASE("percent improvement") {
  CHECK(pct_improvement(0.4, 0.4) == 0.0);
  CHECK(std::round(pct_improvement(0.458, 0.317) * 100.0) / 100.0 == 44.48);
  CHECK(std::round(pct_improvement(0.414, 0.263) * 100.0) / 100.0 == 57.41);
  CHECK_THROWS_AS(pct_improvement(0.4, 0.0), DataError);
  CHECK_THROWS_AS(pct_improvement(0.4, -0.1), DataError);
}

TEST_CASE("Wald summary") {
  const Coefficient c = wald("x", 0.0288456, 0.0102);
  CHECK(c.z == doctest::Approx(2.828).epsilon(1e-4));
  CHECK(c.p == doctest::Approx(std::erfc(c.z / std::sqrt(2.0))).epsilon(1e-14));
  CHECK(c.ci_lower == doctest::Approx(0.0288456 - 1.96 * 0.0102));
  CHECK(c.ci_upper == doctest::Approx(0.0288456 + 1.96 * 0.0102));
}

TEST_CASE("random intercept model at the boundary equals OLS") {
  // Residuals of the OLS fit sum to zero within every group, so the REML
  // optimum of the group variance is zero.
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<std::size_t> g;
  const double e[4] = {0.011, -0.004, -0.011, 0.004};
  for (std::size_t grp = 0; grp < 5; ++grp) {
    for (int rep = 0; rep < 4; ++rep) {
      const double d = rep % 2;
      x.push_back({1.0, d});
      y.push_back(0.3 + 0.05 * d + e[rep] * (1.0 + 0.3 * static_cast<double>(grp)));
      g.push_back(grp);
    }
  }
  const RemlResult r = fit_random_intercept(x, y, g);
  CHECK(r.ratio == 0.0);

  double m0 = 0, m1 = 0, n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (x[i][1] == 1.0) {
      m1 += y[i];
      n1 += 1;
    } else {
      m0 += y[i];
      n0 += 1;
    }
  }
  m0 /= n0;
  m1 /= n1;
  CHECK(std::abs(r.beta[0] - m0) < 1e-8);
  CHECK(std::abs(r.beta[1] - (m1 - m0)) < 1e-8);
}

TEST_CASE("single-group mixed model degenerates to OLS") {
  std::vector<MetricRow> rows;
  for (int run = 0; run < 6; ++run) {
    rows.push_back({"gcn", "PhD+Co-author", run, 10, 0, 0, 0.40 + 0.01 * run});
    rows.push_back({"gcn", "Co-author", run, 10, 0, 0, 0.30 + 0.02 * run});
  }
  const LmmFit fit = fit_lmm(rows, "Co-author");
  CHECK(fit.n_groups == 1);
  CHECK(fit.boundary);
  CHECK(fit.sigma_u2 == 0.0);
  CHECK(fit.intercept.estimate == doctest::Approx(0.35));
  CHECK(fit.beta("PhD+Co-author").estimate == doctest::Approx(0.425 - 0.35));
  CHECK_THROWS_AS(fit_lmm(rows, "Bib"), DataError);
}

TEST_CASE("Monte Carlo coverage of the co-authorship coefficient") {
  const double mu = 0.342, beta = 0.029, sigma_u = 0.02, sigma = 0.033;
  int covered = 0;
  const int sims = 200;
  for (int s = 0; s < sims; ++s) {
    Rng rng = make_stream(20240501, "lmm_coverage", static_cast<std::uint64_t>(s));
    std::vector<MetricRow> rows;
    for (int grp = 0; grp < 10; ++grp) {
      const double u = sigma_u * rng.normal();
      for (int rep = 0; rep < 10; ++rep) {
        const std::string model = "arch" + std::to_string(grp);
        rows.push_back({model, "PhD", rep, 10, 0, 0, mu + u + sigma * rng.normal()});
        rows.push_back({model, "PhD+Co-author", rep, 10, 0, 0, mu + beta + u + sigma * rng.normal()});
      }
    }
    const LmmFit fit = fit_lmm(rows, "PhD");
    const Coefficient& b = fit.beta("PhD+Co-author");
    CHECK(fit.sigma_u2 >= 0.0);
    CHECK(fit.sigma2 > 0.0);
    covered += (b.ci_lower <= beta && beta <= b.ci_upper);
  }
  const double coverage = static_cast<double>(covered) / sims;
  CAPTURE(coverage);
  CHECK(coverage >= 0.93);
  CHECK(coverage <= 0.97);
}

TEST_CASE("stored table fixture formats to the expected cells") {
  std::ifstream in(std::string(FACPLACE_TEST_DATA_DIR) + "/lmm_top10_fixture.json");
  REQUIRE(in);
  const auto doc = nlohmann::json::parse(in);
  for (const auto& block : doc["blocks"]) {
    LmmFit fit;
    fit.reference = block["reference"];
    for (const auto& row : block["rows"]) {
      const Coefficient c = wald(row["term"], row["estimate"], row["se"]);
      if (row["term"] == "Intercept") {
        fit.intercept = c;
      } else {
        fit.betas.push_back(c);
      }
    }
    fit.sigma_u2 = block["sigma_u2"];
    fit.sigma_u2_se = block["sigma_u2_se"];
    const std::string text = format_lmm(fit);
    for (const auto& row : block["rows"]) {
      CAPTURE(text);
      CHECK(row_tail(text, row["term"], 6) == row["expected"].get<std::vector<std::string>>());
    }
    CHECK(row_tail(text, "Group Variance", 2) == std::vector<std::string>{"0.000", "0.003"});
  }
}

TEST_CASE("delta table") {
  std::vector<MetricRow> rows;
  for (const char* model : {"gcn", "sage"}) {
    for (int run = 0; run < 3; ++run) {
      rows.push_back({model, "PhD+Co-author", run, 10, 0, 0, 0.5 + 0.01 * run});
      rows.push_back({model, "PhD", run, 10, 0, 0, 0.5 + 0.01 * run});
    }
  }
  const std::vector<std::pair<std::string, std::string>> pairs{{"PhD+Co-author", "PhD"}};
  const auto same = delta_table(rows, pairs, {10});
  REQUIRE(same.size() == 1);
  CHECK(same[0].mean_delta == 0.0);
  CHECK(same[0].ci_lower == 0.0);
  CHECK(same[0].ci_upper == 0.0);

  // Group means: tabular rows without, graph rows with (no shared models).
  std::vector<MetricRow> split;
  for (int run = 0; run < 4; ++run) {
    split.push_back({"logreg", "PhD", run, 10, 0, 0, 0.30 + 0.01 * run});
    split.push_back({"gcn", "PhD+Co-author", run, 10, 0, 0, 0.40 + 0.02 * run});
  }
  const auto d = delta_table(split, pairs, {10});
  REQUIRE(d.size() == 1);
  CHECK(d[0].mean_delta == doctest::Approx(0.43 - 0.315));
  CHECK_FALSE(d[0].paired);
  CHECK(d[0].ci_lower < d[0].mean_delta);
  CHECK(d[0].ci_upper > d[0].mean_delta);
  CHECK_THROWS_AS(delta_table(split, pairs, {10, 20}), DataError);
}

TEST_CASE("metrics CSV round trip") {
  const std::vector<MetricRow> rows{{"gcn", "PhD+Co-author", 0, 10, 0.5, 0.25, 0.4125},
                                    {"random", "none", 1, 50, 0.0, 0.0, 0.2}};
  const auto path = std::filesystem::temp_directory_path() / "facplace_metrics.csv";
  write_metrics_csv(rows, path);
  CHECK(read_metrics_csv(path) == rows);
  std::filesystem::remove(path);
}
