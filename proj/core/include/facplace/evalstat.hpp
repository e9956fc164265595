#pragma once

// Classification metrics and the random-intercept mixed model used to
// compare feature sets across architectures.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace facplace {

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool no_predicted_positive = false;  // precision set to 0 by convention
};

// Predicted positive iff score >= threshold. Throws DataError when the
// labels hold no positive or the inputs are empty.
PrecisionRecall precision_recall(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 double threshold = 0.5);

// Average precision: descending-score thresholds, ties grouped into one step,
// sum of (R_n - R_{n-1}) * P_n.
double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// 100 * (a - b) / b; b must be positive.
double pct_improvement(double a, double b);

struct MetricRow {
  std::string model;
  std::string feature_set;
  int run = 0;
  double k = 10.0;
  double precision = 0.0;
  double recall = 0.0;
  double pr_auc = 0.0;

  bool operator==(const MetricRow&) const = default;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct Coefficient {
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

// Wald summary: z = estimate / se, two-sided normal p, 95% interval.
Coefficient wald(std::string term, double estimate, double se);

struct LmmFit {
  std::string reference;
  Coefficient intercept;
  std::vector<Coefficient> betas;  // one per non-reference feature set, sorted by name
  double sigma_u2 = 0.0;           // group variance
  double sigma_u2_se = 0.0;
  double sigma2 = 0.0;             // residual variance (scale)
  double variance_ratio = 0.0;     // sigma_u2 / sigma2
  bool boundary = false;           // ratio at its lower bound 0
  bool converged = false;
  double log_likelihood = 0.0;     // REML
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
  std::size_t min_group = 0;
  std::size_t max_group = 0;
  double mean_group = 0.0;

  const Coefficient& beta(const std::string& feature_set) const;
};

// PR-AUC ~ feature set (fixed) + random intercept per model architecture,
// fitted by REML profiled over the variance ratio in [0, 1e4].
LmmFit fit_lmm(const std::vector<MetricRow>& rows, const std::string& reference);

// REML fit on raw data: y ~ X beta + group intercept. Column 0 of X is
// expected to be the intercept. Exposed for testing.
struct RemlResult {
  std::vector<double> beta;
  std::vector<std::vector<double>> beta_cov;
  double ratio = 0.0;
  double sigma2 = 0.0;
  double sigma_u2_se = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
};

RemlResult fit_random_intercept(const std::vector<std::vector<double>>& x, std::span<const double> y,
                                std::span<const std::size_t> group);

struct DeltaRow {
  std::string with_set;
  std::string without_set;
  double k = 0.0;
  double mean_delta = 0.0;
  double ci_lower = 0.0;  // 90%
  double ci_upper = 0.0;
  std::size_t n = 0;
  bool paired = false;
  double lmm_p = 1.0;     // NaN when the model could not be fitted
  std::string stars;
};

// Mean PR-AUC difference (with - without) per K. Pairs rows by (model, run)
// when possible, otherwise compares group means.
std::vector<DeltaRow> delta_table(const std::vector<MetricRow>& rows,
                                  const std::vector<std::pair<std::string, std::string>>& pairs,
                                  const std::vector<double>& thresholds);

std::string significance_stars(double p);

nlohmann::json to_json(const LmmFit& fit);
nlohmann::json to_json(const DeltaRow& row);

// Text table with columns Term, Coef., Std. Err., z, P>|z|, CI Lower, CI Upper.
std::string format_lmm(const LmmFit& fit);
std::string format_coefficient_row(const Coefficient& c);

}  // namespace facplace
