#include "facplace/evalstat.hpp"

#include <fmt/core.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"

namespace facplace {

namespace {

constexpr double kZ95 = 1.96;
constexpr double kZ90 = 1.645;
constexpr double kMaxRatio = 1e4;
constexpr double kRatioTol = 1e-10;

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DataError(fmt::format("{} scores for {} labels", scores.size(), labels.size()));
  }
  if (scores.empty()) throw DataError("no scores to evaluate");
  if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; })) {
    throw DataError("labels contain no positive example");
  }
}

}  // namespace

PrecisionRecall precision_recall(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 double threshold) {
  check_inputs(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i]) ++tp;
    else if (predicted) ++fp;
    else if (labels[i]) ++fn;
  }
  PrecisionRecall pr;
  pr.no_predicted_positive = tp + fp == 0;
  pr.precision = pr.no_predicted_positive ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  pr.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double positives =
      static_cast<double>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == s; ++k) {
      if (labels[order[k]]) tp += 1.0;
      else fp += 1.0;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

double pct_improvement(double a, double b) {
  if (!(b > 0.0)) throw DataError(fmt::format("percent improvement over non-positive baseline {}", b));
  return 100.0 * (a - b) / b;
}

// ---- metrics.csv ------------------------------------------------------------

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << "model,feature_set,run,K,precision,recall,pr_auc\n";
  for (const auto& r : rows) {
    out << csv::join_row({r.model, r.feature_set, std::to_string(r.run), fmt::format("{:g}", r.k),
                          fmt::format("{:.17g}", r.precision), fmt::format("{:.17g}", r.recall),
                          fmt::format("{:.17g}", r.pr_auc)})
        << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  csv::require_header(table, {"model", "feature_set", "run", "K", "precision", "recall", "pr_auc"},
                      path.string());
  std::vector<MetricRow> rows;
  for (const auto& row : table.rows) {
    try {
      rows.push_back({row.fields[0], row.fields[1], std::stoi(row.fields[2]), std::stod(row.fields[3]),
                      std::stod(row.fields[4]), std::stod(row.fields[5]), std::stod(row.fields[6])});
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("{}:{}: malformed metric row", path.string(), row.line));
    }
  }
  return rows;
}

// ---- mixed model ------------------------------------------------------------

Coefficient wald(std::string term, double estimate, double se) {
  Coefficient c;
  c.term = std::move(term);
  c.estimate = estimate;
  c.se = se;
  c.z = estimate / se;
  c.p = std::erfc(std::abs(c.z) / std::sqrt(2.0));
  c.ci_lower = estimate - kZ95 * se;
  c.ci_upper = estimate + kZ95 * se;
  return c;
}

const Coefficient& LmmFit::beta(const std::string& feature_set) const {
  for (const auto& b : betas) {
    if (b.term == feature_set) return b;
  }
  throw DataError(fmt::format("no coefficient for feature set '{}'", feature_set));
}

namespace {

struct RemlData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::vector<Eigen::Index>> groups;
};

struct RemlEval {
  double log_likelihood = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
  Eigen::MatrixXd a_inv;  // (X' H^-1 X)^-1
  double sigma2 = 0.0;
  double q = 0.0;         // r' H^-1 r
  double log_det_h = 0.0;
  double log_det_a = 0.0;
};

// Profiled REML at variance ratio gamma, with H_j = I + gamma * 1 1'.
RemlEval reml_at(const RemlData& d, double gamma) {
  const Eigen::Index n = d.x.rows();
  const Eigen::Index p = d.x.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  RemlEval ev;
  for (const auto& g : d.groups) {
    const double nj = static_cast<double>(g.size());
    const double c = gamma / (1.0 + gamma * nj);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
    double t = 0.0;
    for (Eigen::Index i : g) {
      a.noalias() += d.x.row(i).transpose() * d.x.row(i);
      b.noalias() += d.x.row(i).transpose() * d.y(i);
      s += d.x.row(i).transpose();
      t += d.y(i);
    }
    a.noalias() -= c * s * s.transpose();
    b.noalias() -= c * s * t;
    ev.log_det_h += std::log1p(gamma * nj);
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
    throw DataError("mixed model: singular fixed-effect design");
  }
  ev.beta = ldlt.solve(b);
  ev.a_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  ev.log_det_a = ldlt.vectorD().array().log().sum();
  const Eigen::VectorXd r = d.y - d.x * ev.beta;
  for (const auto& g : d.groups) {
    const double nj = static_cast<double>(g.size());
    const double c = gamma / (1.0 + gamma * nj);
    double sum = 0.0;
    for (Eigen::Index i : g) {
      ev.q += r(i) * r(i);
      sum += r(i);
    }
    ev.q -= c * sum * sum;
  }
  const double dof = static_cast<double>(n - p);
  if (!(ev.q > 0.0)) throw NumericError("mixed model: residuals vanish, variance not identifiable");
  ev.sigma2 = ev.q / dof;
  ev.log_likelihood =
      -0.5 * (dof * (std::log(2.0 * M_PI) + std::log(ev.sigma2) + 1.0) + ev.log_det_h + ev.log_det_a);
  return ev;
}

// Unprofiled REML log-likelihood in (sigma_u2, sigma2).
double reml_full(const RemlData& d, double su2, double s2) {
  if (!(s2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double gamma = su2 / s2;
  for (const auto& g : d.groups) {
    if (1.0 + gamma * static_cast<double>(g.size()) <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  }
  const RemlEval ev = reml_at(d, gamma);
  const double n = static_cast<double>(d.x.rows());
  const double p = static_cast<double>(d.x.cols());
  return -0.5 * ((n - p) * std::log(2.0 * M_PI) + (n - p) * std::log(s2) + ev.log_det_h + ev.log_det_a +
                 ev.q / s2);
}

// Standard error of sigma_u2 from the inverse observed information of the
// unprofiled REML likelihood (central differences).
double sigma_u2_se(const RemlData& d, double su2, double s2) {
  const double hu = std::max(1e-7, 1e-3 * su2);
  const double hs = 1e-3 * s2;
  auto f = [&](double a, double b) { return reml_full(d, a, b); };
  const double f0 = f(su2, s2);
  const double fuu = (f(su2 + hu, s2) - 2.0 * f0 + f(su2 - hu, s2)) / (hu * hu);
  const double fss = (f(su2, s2 + hs) - 2.0 * f0 + f(su2, s2 - hs)) / (hs * hs);
  const double fus = (f(su2 + hu, s2 + hs) - f(su2 + hu, s2 - hs) - f(su2 - hu, s2 + hs) +
                      f(su2 - hu, s2 - hs)) /
                     (4.0 * hu * hs);
  const double det = fuu * fss - fus * fus;
  const double var = -fss / det;  // [(-Hessian)^-1]_uu
  return std::isfinite(var) && var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

RemlResult fit_random_intercept(const std::vector<std::vector<double>>& x, std::span<const double> y,
                                std::span<const std::size_t> group) {
  const std::size_t n = y.size();
  if (x.size() != n || group.size() != n || n == 0) throw DataError("mixed model: inconsistent input sizes");
  const std::size_t p = x.front().size();
  if (n <= p) throw DataError(fmt::format("mixed model: {} observations for {} fixed effects", n, p));
  RemlData d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(n));
  std::map<std::size_t, std::size_t> group_index;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != p) throw DataError("mixed model: ragged design matrix");
    for (std::size_t j = 0; j < p; ++j) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
    d.y(static_cast<Eigen::Index>(i)) = y[i];
    const auto [it, inserted] = group_index.emplace(group[i], d.groups.size());
    if (inserted) d.groups.emplace_back();
    d.groups[it->second].push_back(static_cast<Eigen::Index>(i));
  }

  double gamma = 0.0;
  RemlEval best = reml_at(d, 0.0);
  bool converged = true;
  if (d.groups.size() > 1) {
    // Coarse log grid, then golden-section refinement inside the bracket
    // around the best grid point.
    std::vector<double> grid{0.0};
    for (int k = -32; k <= 16; ++k) grid.push_back(std::pow(10.0, k / 4.0));
    std::size_t arg = 0;
    double best_ll = best.log_likelihood;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double ll = reml_at(d, grid[i]).log_likelihood;
      if (ll > best_ll) {
        best_ll = ll;
        arg = i;
      }
    }
    double lo = grid[arg == 0 ? 0 : arg - 1];
    double hi = grid[std::min(arg + 1, grid.size() - 1)];
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - phi * (hi - lo);
    double e = lo + phi * (hi - lo);
    double fc = reml_at(d, c).log_likelihood;
    double fe = reml_at(d, e).log_likelihood;
    int iter = 0;
    while (hi - lo > kRatioTol && iter++ < 500) {
      if (fc >= fe) {
        hi = e;
        e = c;
        fe = fc;
        c = hi - phi * (hi - lo);
        fc = reml_at(d, c).log_likelihood;
      } else {
        lo = c;
        c = e;
        fc = fe;
        e = lo + phi * (hi - lo);
        fe = reml_at(d, e).log_likelihood;
      }
    }
    converged = hi - lo <= kRatioTol;
    const double candidate = std::clamp(0.5 * (lo + hi), 0.0, kMaxRatio);
    const RemlEval ev = reml_at(d, candidate);
    if (ev.log_likelihood > best.log_likelihood) {
      best = ev;
      gamma = candidate;
    }
    if (arg != 0 && best_ll > best.log_likelihood) {
      gamma = grid[arg];
      best = reml_at(d, gamma);
    }
  }

  RemlResult res;
  res.ratio = gamma;
  res.sigma2 = best.sigma2;
  res.log_likelihood = best.log_likelihood;
  res.converged = converged;
  res.beta.assign(best.beta.data(), best.beta.data() + best.beta.size());
  res.beta_cov.assign(p, std::vector<double>(p));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      res.beta_cov[i][j] = best.sigma2 * best.a_inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  res.sigma_u2_se = d.groups.size() > 1 ? sigma_u2_se(d, gamma * best.sigma2, best.sigma2)
                                        : std::numeric_limits<double>::quiet_NaN();
  return res;
}

LmmFit fit_lmm(const std::vector<MetricRow>& rows, const std::string& reference) {
  std::set<std::string> sets;
  std::set<std::string> models;
  for (const auto& r : rows) {
    sets.insert(r.feature_set);
    models.insert(r.model);
  }
  if (!sets.count(reference)) {
    throw DataError(fmt::format("mixed model: reference feature set '{}' has no rows", reference));
  }
  if (sets.size() < 2) throw DataError("mixed model: need at least two feature sets");
  std::vector<std::string> others;
  for (const auto& s : sets) {
    if (s != reference) others.push_back(s);
  }
  const std::vector<std::string> model_list(models.begin(), models.end());

  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<std::size_t> group;
  for (const auto& r : rows) {
    std::vector<double> row{1.0};
    for (const auto& s : others) row.push_back(r.feature_set == s ? 1.0 : 0.0);
    x.push_back(std::move(row));
    y.push_back(r.pr_auc);
    group.push_back(static_cast<std::size_t>(
        std::lower_bound(model_list.begin(), model_list.end(), r.model) - model_list.begin()));
  }
  const RemlResult reml = fit_random_intercept(x, y, group);

  LmmFit fit;
  fit.reference = reference;
  fit.intercept = wald("Intercept", reml.beta[0], std::sqrt(reml.beta_cov[0][0]));
  for (std::size_t k = 0; k < others.size(); ++k) {
    fit.betas.push_back(wald(others[k], reml.beta[k + 1], std::sqrt(reml.beta_cov[k + 1][k + 1])));
  }
  fit.sigma2 = reml.sigma2;
  fit.variance_ratio = reml.ratio;
  fit.sigma_u2 = reml.ratio * reml.sigma2;
  fit.sigma_u2_se = reml.sigma_u2_se;
  fit.boundary = reml.ratio == 0.0;
  fit.converged = reml.converged;
  fit.log_likelihood = reml.log_likelihood;
  fit.n_obs = rows.size();
  fit.n_groups = model_list.size();
  std::vector<std::size_t> sizes(model_list.size(), 0);
  for (std::size_t g : group) ++sizes[g];
  fit.min_group = *std::min_element(sizes.begin(), sizes.end());
  fit.max_group = *std::max_element(sizes.begin(), sizes.end());
  fit.mean_group = static_cast<double>(rows.size()) / static_cast<double>(sizes.size());
  return fit;
}

// ---- delta table ------------------------------------------------------------

std::string significance_stars(double p) {
  if (!(p >= 0.0)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

std::vector<DeltaRow> delta_table(const std::vector<MetricRow>& rows,
                                  const std::vector<std::pair<std::string, std::string>>& pairs,
                                  const std::vector<double>& thresholds) {
  std::vector<DeltaRow> out;
  for (const auto& [with_set, without_set] : pairs) {
    for (double k : thresholds) {
      std::vector<MetricRow> at_k;
      std::map<std::pair<std::string, int>, double> with_rows;
      std::map<std::pair<std::string, int>, double> without_rows;
      for (const auto& r : rows) {
        if (std::abs(r.k - k) > 1e-9) continue;
        at_k.push_back(r);
        if (r.feature_set == with_set) with_rows[{r.model, r.run}] = r.pr_auc;
        if (r.feature_set == without_set) without_rows[{r.model, r.run}] = r.pr_auc;
      }
      if (with_rows.empty() || without_rows.empty()) {
        throw DataError(fmt::format("delta table: K={:g} lacks rows for '{}' or '{}'", k, with_set, without_set));
      }
      DeltaRow d;
      d.with_set = with_set;
      d.without_set = without_set;
      d.k = k;
      std::vector<double> diffs;
      for (const auto& [key, v] : with_rows) {
        const auto it = without_rows.find(key);
        if (it != without_rows.end()) diffs.push_back(v - it->second);
      }
      double se = 0.0;
      if (!diffs.empty()) {
        d.paired = true;
        d.n = diffs.size();
        d.mean_delta = mean_of(diffs);
        se = std::sqrt(sample_var(diffs) / static_cast<double>(diffs.size()));
      } else {
        std::vector<double> a, b;
        for (const auto& [key, v] : with_rows) a.push_back(v);
        for (const auto& [key, v] : without_rows) b.push_back(v);
        d.n = a.size() + b.size();
        d.mean_delta = mean_of(a) - mean_of(b);
        se = std::sqrt(sample_var(a) / static_cast<double>(a.size()) +
                       sample_var(b) / static_cast<double>(b.size()));
      }
      d.ci_lower = d.mean_delta - kZ90 * se;
      d.ci_upper = d.mean_delta + kZ90 * se;
      try {
        d.lmm_p = fit_lmm(at_k, without_set).beta(with_set).p;
      } catch (const Error&) {
        d.lmm_p = std::numeric_limits<double>::quiet_NaN();
      }
      d.stars = significance_stars(d.lmm_p);
      out.push_back(std::move(d));
    }
  }
  return out;
}

// ---- rendering --------------------------------------------------------------

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

nlohmann::json coefficient_json(const Coefficient& c) {
  return {{"term", c.term},         {"coef", number_or_null(c.estimate)}, {"std_err", number_or_null(c.se)},
          {"z", number_or_null(c.z)}, {"p", number_or_null(c.p)},          {"ci_lower", number_or_null(c.ci_lower)},
          {"ci_upper", number_or_null(c.ci_upper)}};
}

std::string fixed3(double v) { return std::isfinite(v) ? fmt::format("{:.3f}", v) : "nan"; }

}  // namespace

nlohmann::json to_json(const LmmFit& fit) {
  nlohmann::json betas = nlohmann::json::array();
  for (const auto& b : fit.betas) betas.push_back(coefficient_json(b));
  return {{"reference", fit.reference},
          {"intercept", coefficient_json(fit.intercept)},
          {"betas", betas},
          {"group_variance", number_or_null(fit.sigma_u2)},
          {"group_variance_std_err", number_or_null(fit.sigma_u2_se)},
          {"scale", number_or_null(fit.sigma2)},
          {"variance_ratio", number_or_null(fit.variance_ratio)},
          {"boundary", fit.boundary},
          {"converged", fit.converged},
          {"log_likelihood", number_or_null(fit.log_likelihood)},
          {"n_obs", fit.n_obs},
          {"n_groups", fit.n_groups},
          {"min_group_size", fit.min_group},
          {"max_group_size", fit.max_group},
          {"mean_group_size", fit.mean_group}};
}

nlohmann::json to_json(const DeltaRow& row) {
  return {{"with", row.with_set},
          {"without", row.without_set},
          {"K", row.k},
          {"mean_delta", row.mean_delta},
          {"ci90_lower", row.ci_lower},
          {"ci90_upper", row.ci_upper},
          {"n", row.n},
          {"paired", row.paired},
          {"lmm_p", number_or_null(row.lmm_p)},
          {"stars", row.stars}};
}

std::string format_coefficient_row(const Coefficient& c) {
  return fmt::format("{:<28} {:>8} {:>10} {:>9} {:>7} {:>9} {:>9}", c.term, fixed3(c.estimate), fixed3(c.se),
                     fixed3(c.z), fixed3(c.p), fixed3(c.ci_lower), fixed3(c.ci_upper));
}

std::string format_lmm(const LmmFit& fit) {
  std::string out;
  out += fmt::format("Model: MixedLM    Dependent Variable: PR-AUC    Method: REML\n");
  out += fmt::format("Scale: {:.4f}    Log-Likelihood: {:.4f}    Converged: {}\n", fit.sigma2,
                     fit.log_likelihood, fit.converged ? "Yes" : "No");
  out += fmt::format("No. Observations: {}    No. Groups: {}    Min. group size: {}\n", fit.n_obs, fit.n_groups,
                     fit.min_group);
  out += fmt::format("Max. group size: {}    Mean group size: {:.1f}\n", fit.max_group, fit.mean_group);
  out += fmt::format("Reference = {}\n", fit.reference);
  out += fmt::format("{:<28} {:>8} {:>10} {:>9} {:>7} {:>9} {:>9}\n", "Term", "Coef.", "Std. Err.", "z", "P>|z|",
                     "CI Lower", "CI Upper");
  out += format_coefficient_row(fit.intercept) + '\n';
  for (const auto& b : fit.betas) out += format_coefficient_row(b) + '\n';
  out += fmt::format("{:<28} {:>8} {:>10}{}\n", "Group Variance", fixed3(fit.sigma_u2), fixed3(fit.sigma_u2_se),
                     fit.boundary ? "    (boundary)" : "");
  return out;
}

}  // namespace facplace
