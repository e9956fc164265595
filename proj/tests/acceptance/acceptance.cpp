// Acceptance run: one PASS/FAIL line per criterion. Names given on the
// command line restrict the run to those criteria.

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facplace/evalstat.hpp"
#include "facplace/featurize.hpp"
#include "facplace/ingest.hpp"
#include "facplace/models.hpp"
#include "facplace/pipeline.hpp"
#include "facplace/report.hpp"
#include "facplace/rewire.hpp"
#include "facplace/rng.hpp"
#include "support/fixtures.hpp"
#include "support/gradcases.hpp"

using namespace facplace;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("facplace_accept_{}_{}", name, ::getpid());
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- PR-AUC oracle ----------------------------------------------------------

Outcome pr_auc_oracle() {
  const auto start = Clock::now();
  Rng rng(20240417);
  double worst = 0.0;
  int instances = 0;
  while (instances < 100) {
    const std::size_t n = 1 + rng.below(200);
    const double prevalence = 0.02 + 0.9 * rng.uniform();
    // A third of the instances draw from a few score levels to force ties.
    const std::uint64_t levels = instances % 3 == 0 ? 2 + rng.below(6) : 0;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels ? static_cast<double>(rng.below(levels)) / static_cast<double>(levels) : rng.uniform();
      y[i] = rng.bernoulli(prevalence);
    }
    if (std::none_of(y.begin(), y.end(), [](auto v) { return v == 1; })) continue;
    worst = std::max(worst, std::abs(pr_auc(s, y) - testing::ap_oracle(s, y)));
    ++instances;
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-12 && secs < 5.0, fmt::format("{} instances, max |diff| {:.3g}, {:.2f} s", instances, worst, secs)};
}

// ---- gradient checks --------------------------------------------------------

Outcome gradients() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0, checked = 0;
  const ModelKind nets[] = {ModelKind::kLogReg, ModelKind::kMlp, ModelKind::kGcn,
                            ModelKind::kGat,    ModelKind::kSage, ModelKind::kGConvGru};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t nodes = 10 + 2 * seed;  // 10..48
    auto all = testing::op_cases(seed, nodes);
    for (ModelKind k : nets) all.push_back(testing::network_case(k, seed, nodes));
    for (const auto& c : all) {
      const GradCheckResult r = grad_check(c.fn, c.inputs);
      ++cases;
      checked += r.checked;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_name = fmt::format("{} seed {}", c.name, seed);
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-5 && secs < 120.0,
          fmt::format("{} cases, {} coordinates, max rel error {:.3g} ({}), {:.1f} s", cases, checked, worst,
                      worst_name, secs)};
}

// ---- leakage ------------------------------------------------------------------

std::vector<ModelSpec> leakage_models() {
  std::vector<ModelSpec> out;
  auto add = [&](ModelKind kind, std::vector<FeatureKind> f) {
    ModelSpec s = testing::quick_spec(kind, std::move(f), 17, 8);
    s.hidden_dim = 4;
    out.push_back(s);
  };
  add(ModelKind::kRandom, {});
  add(ModelKind::kPhdRank, {});
  add(ModelKind::kAvgCoauthorRank, {});
  add(ModelKind::kLogReg, {FeatureKind::kBib});
  add(ModelKind::kMlp, {FeatureKind::kPhd, FeatureKind::kBib});
  add(ModelKind::kGcn, {FeatureKind::kBib});
  add(ModelKind::kSage, {FeatureKind::kPhd});
  add(ModelKind::kGat, {FeatureKind::kPhd});
  add(ModelKind::kGConvGru, {FeatureKind::kPhd});
  return out;
}

std::vector<ScoreSet> score_all(const testing::Market& m, const std::vector<ModelSpec>& specs) {
  std::vector<ScoreSet> out;
  for (const auto& s : specs) out.push_back(train_model(s, m.inputs(10)).scores);
  return out;
}

const double* score_of(const ScoreSet& s, NodeId i) {
  const auto it = std::lower_bound(s.nodes.begin(), s.nodes.end(), i);
  if (it == s.nodes.end() || *it != i) return nullptr;
  return &s.probability[static_cast<std::size_t>(it - s.nodes.begin())];
}

// Applies one random change to records dated at or after t_i. Returns a
// description of the change.
std::string perturb(testing::RawMarket& raw, const std::string& name_i, int ti, int tf, int trial, Rng& rng) {
  std::vector<std::size_t> hired;  // faculty hired at or after t_i
  std::vector<std::size_t> later;  // faculty other than i hired after t_i
  for (std::size_t f = 0; f < raw.faculty.size(); ++f) {
    const auto& h = raw.faculty[f].hire_year;
    if (h && *h >= ti) hired.push_back(f);
    if (h && *h > ti && raw.faculty[f].full_name != name_i) later.push_back(f);
  }
  std::vector<std::size_t> papers;
  for (std::size_t p = 0; p < raw.publications.size(); ++p) {
    if (raw.publications[p].year >= ti) papers.push_back(p);
  }
  auto random_name = [&] { return raw.faculty[rng.below(raw.faculty.size())].full_name; };
  auto year_from = [&](int lo) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(tf - lo + 1))); };

  int kind = static_cast<int>(rng.below(5));
  if ((kind == 1 || kind == 2) && papers.empty()) kind = 0;
  if (kind == 4 && (later.empty() || ti + 1 >= tf)) kind = 3;

  switch (kind) {
    case 0: {
      std::vector<std::string> authors{name_i};
      const std::string other = random_name();
      if (other != name_i) authors.push_back(other);
      if (rng.bernoulli(0.5)) authors.push_back("Outside Collaborator");
      const int year = year_from(ti);
      raw.publications.push_back({fmt::format("LEAK{}", trial), year, authors});
      return fmt::format("add paper {} with {} authors", year, authors.size());
    }
    case 1: {
      const std::size_t p = papers[rng.below(papers.size())];
      const std::string id = raw.publications[p].paper_id;
      raw.publications.erase(raw.publications.begin() + static_cast<std::ptrdiff_t>(p));
      return "remove paper " + id;
    }
    case 2: {
      auto& pub = raw.publications[papers[rng.below(papers.size())]];
      pub.year = year_from(ti);
      auto& authors = pub.authors;
      const std::string add = rng.bernoulli(0.5) ? name_i : random_name();
      if (std::find(authors.begin(), authors.end(), add) == authors.end()) {
        if (authors.size() > 1 && rng.bernoulli(0.5)) {
          authors[rng.below(authors.size())] = add;
        } else {
          authors.push_back(add);
        }
      }
      return "modify paper " + pub.paper_id;
    }
    case 3: {
      auto& f = raw.faculty[hired[rng.below(hired.size())]];
      std::vector<std::string> unis;
      for (const auto& [uni, rank] : raw.ranks.entries) {
        if (uni != f.university) unis.push_back(uni);
      }
      f.university = unis[rng.below(unis.size())];
      return fmt::format("move {} to {}", f.full_name, f.university);
    }
    default: {
      auto& f = raw.faculty[later[rng.below(later.size())]];
      int year = *f.hire_year;
      while (year == *f.hire_year) year = year_from(ti + 1);
      f.hire_year = year;
      return fmt::format("rehire {} in {}", f.full_name, year);
    }
  }
}

Outcome leakage() {
  const auto start = Clock::now();
  SynthConfig cfg;
  cfg.n_researchers = 300;
  cfg.seed = 2718;
  const auto raw = testing::raw_market(cfg);
  const auto base = testing::build_market(raw, cfg.t0, cfg.tf, 9);
  const BibliometricIndex base_index(base.dataset);
  const auto specs = leakage_models();
  const auto base_scores = score_all(base, specs);
  const auto test_nodes = base.splits.nodes(Split::kTest);

  Rng rng(99);
  std::vector<std::string> failures;
  std::size_t model_checks = 0, trials_with_models = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const NodeId i = trial % 2 == 0 ? test_nodes[rng.below(test_nodes.size())]
                                    : base.partition.v_hire[rng.below(base.partition.v_hire.size())];
    const std::string name_i = base.dataset.researchers[i].full_name;
    const int ti = base.partition.hire_year[i];
    auto changed = raw;
    const std::string what = perturb(changed, name_i, ti, cfg.tf, trial, rng);
    const auto m = testing::build_market(changed, cfg.t0, cfg.tf, 9);

    std::vector<std::string> diff;
    if (m.dataset.researchers.at(i).full_name != name_i) diff.push_back("node id");
    for (int t = cfg.t0; t < ti; ++t) {
      if (!(m.sequence.at(t) == base.sequence.at(t))) diff.push_back(fmt::format("snapshot {}", t));
      if (m.phd.at(i, 0, t) != base.phd.at(i, 0, t)) diff.push_back(fmt::format("X_PhD {}", t));
      for (std::size_t f = 0; f < kBibFeatures; ++f) {
        if (m.bib.at(i, f, t) != base.bib.at(i, f, t)) diff.push_back(fmt::format("X_Bib {} f{}", t, f));
      }
    }
    std::vector<double> before(kBibFeatures), after(kBibFeatures);
    base_index.row(i, ti - 1, before);
    BibliometricIndex(m.dataset).row(i, ti - 1, after);
    if (before != after) diff.push_back("bibliometric row at t_i - 1");
    if (m.splits.assignment[i] != base.splits.assignment[i]) diff.push_back("split");
    for (int w = 1; w <= 3; ++w) {
      for (int t = cfg.t0; t <= cfg.tf; ++t) {
        const YearMasks a = year_masks(base.splits, t, w);
        const YearMasks b = year_masks(m.splits, t, w);
        if (a.train[i] != b.train[i] || a.val[i] != b.val[i] || a.test[i] != b.test[i]) {
          diff.push_back(fmt::format("mask w={} t={}", w, t));
        }
      }
    }
    if (base.splits.assignment[i] == Split::kTest) {
      ++trials_with_models;
      const auto scores = score_all(m, specs);
      for (std::size_t s = 0; s < specs.size(); ++s) {
        const double* a = score_of(base_scores[s], i);
        const double* b = score_of(scores[s], i);
        ++model_checks;
        if (!a || !b || *a != *b) diff.push_back(std::string("score ") + model_kind_name(specs[s].kind));
      }
    }
    if (!diff.empty()) failures.push_back(fmt::format("trial {} ({}): {}", trial, what, diff.front()));
  }
  const double secs = seconds_since(start);
  std::string detail = fmt::format("50 perturbations, {} with model retraining ({} score checks), {} failing, {:.1f} s",
                                   trials_with_models, model_checks, failures.size(), secs);
  if (!failures.empty()) detail += "; first: " + failures.front();
  return {failures.empty(), detail};
}

// ---- splits and masks ---------------------------------------------------------

Outcome splits_and_masks() {
  const auto start = Clock::now();
  std::vector<std::string> problems;
  std::size_t nodes_checked = 0;
  for (std::size_t n : {500, 1000, 1500, 2000}) {
    SynthConfig cfg;
    cfg.n_researchers = n;
    cfg.seed = 1000 + n;
    const auto raw = testing::raw_market(cfg);
    const auto ds = link_and_impute(raw.publications, raw.faculty, raw.ranks, {});
    const auto part = partition_nodes(ds, cfg.t0, cfg.tf);
    const auto splits = temporal_split(part, 77);
    auto fail = [&](const std::string& what) { problems.push_back(fmt::format("n={}: {}", n, what)); };

    std::set<NodeId> seen;
    std::size_t total = 0;
    for (Split which : {Split::kTrain, Split::kVal, Split::kTest}) {
      const auto nodes = splits.nodes(which);
      total += nodes.size();
      seen.insert(nodes.begin(), nodes.end());
    }
    if (seen.size() != total) fail("splits overlap");
    if (std::vector<NodeId>(seen.begin(), seen.end()) != part.v_hire) fail("union differs from V_hire");
    for (NodeId v = 0; v < ds.node_count(); ++v) {
      ++nodes_checked;
      const int h = part.hire_year[v];
      const Split s = splits.assignment[v];
      if (!part.is_hire(v) && s != Split::kNone) fail(fmt::format("node {} outside V_hire is assigned", v));
      if (part.is_hire(v) && (h >= splits.first_test_year) != (s == Split::kTest)) {
        fail(fmt::format("node {} hired {} has the wrong test status", v, h));
      }
    }
    for (int year = cfg.t0; year < splits.first_test_year; ++year) {
      std::size_t pool = 0, train = 0;
      for (NodeId v : part.v_hire) {
        if (part.hire_year[v] != year) continue;
        ++pool;
        train += splits.assignment[v] == Split::kTrain;
      }
      if (std::abs(static_cast<double>(train) - 0.8 * static_cast<double>(pool)) > 1.0) {
        fail(fmt::format("year {}: {} of {} in train", year, train, pool));
      }
    }
    for (int w = 1; w <= 3; ++w) {
      for (int t = cfg.t0; t <= cfg.tf; ++t) {
        const YearMasks m = year_masks(splits, t, w);
        for (NodeId v = 0; v < ds.node_count(); ++v) {
          const int h = part.hire_year[v];
          const Split s = splits.assignment[v];
          const bool window = h >= t - w && h <= t - 1;
          const bool train = s == Split::kTrain && window;
          const bool val = s == Split::kVal && window;
          const bool test = s == Split::kTest && h == t;
          if (m.train[v] != train || m.val[v] != val || m.test[v] != test) {
            fail(fmt::format("mask w={} t={} node {}", w, t, v));
          }
          if (m.train[v] + m.val[v] + m.test[v] > 1) fail(fmt::format("masks overlap w={} t={} node {}", w, t, v));
        }
      }
    }
  }
  const double secs = seconds_since(start);
  std::string detail = fmt::format("cohorts 500/1000/1500/2000, {} nodes, {} problems, {:.1f} s", nodes_checked,
                                   problems.size(), secs);
  if (!problems.empty()) detail += "; first: " + problems.front();
  return {problems.empty(), detail};
}

// ---- rewiring -------------------------------------------------------------------

std::map<NodeId, std::size_t> degrees(const std::vector<Edge>& edges) {
  std::map<NodeId, std::size_t> d;
  for (const auto& e : edges) {
    ++d[e.u];
    ++d[e.v];
  }
  return d;
}

bool simple(const std::vector<Edge>& edges) {
  std::set<Edge> seen;
  for (const auto& e : edges) {
    if (e.u == e.v || !seen.insert(make_edge(e.u, e.v)).second) return false;
  }
  return true;
}

bool simple(const Snapshot& s) {
  const auto& e = s.edges();
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (e[k].u >= e[k].v) return false;
    if (k > 0 && !(std::tie(e[k - 1].u, e[k - 1].v) < std::tie(e[k].u, e[k].v))) return false;
  }
  return true;
}

Outcome rewiring() {
  const auto start = Clock::now();
  std::vector<std::string> problems;

  SynthConfig cfg;
  cfg.n_researchers = 800;
  cfg.seed = 4242;
  const auto market = testing::build_market(cfg, 1);
  const SnapshotSequence& seq = market.sequence;
  std::size_t sequences = 0;
  for (int p = 0; p <= 100; p += 10) {
    for (int rep = 0; rep < 3; ++rep) {
      RewirePlan plan;
      plan.p = p;
      plan.seed = 31;
      plan.replicate = rep;
      const RewireResult r = rewire_sequence(seq, plan);
      ++sequences;
      if (p == 0) {
        if (!(r.sequence == seq)) problems.push_back(fmt::format("p=0 rep {} is not the identity", rep));
        continue;
      }
      for (int t = seq.t0(); t <= seq.tf(); ++t) {
        const auto& before = seq.increment(t).first_occurrence;
        const auto& after = r.sequence.increment(t).first_occurrence;
        if (degrees(before) != degrees(after)) problems.push_back(fmt::format("p={} year {}: degrees", p, t));
        if (!simple(after)) problems.push_back(fmt::format("p={} year {}: increment not simple", p, t));
        if (!simple(r.sequence.at(t))) problems.push_back(fmt::format("p={} year {}: snapshot not simple", p, t));
      }
    }
  }

  // Planted network signal: hiring depends on co-author prestige alone.
  SynthConfig net;
  net.n_researchers = 600;
  net.w_phd = 0.0;
  net.w_bib = 0.0;
  net.w_net = 1.0;
  net.noise = 0.1;
  net.seed = 5;
  const auto m = testing::build_market(net, 3);
  const auto& y = m.labels.at(10).high;
  std::map<int, double> med;
  for (int p : {0, 50, 100}) {
    std::vector<double> values;
    for (int rep = 0; rep < 10; ++rep) {
      RewirePlan plan;
      plan.p = p;
      plan.seed = 8;
      plan.replicate = rep;
      const SnapshotSequence rewired = rewire_sequence(m.sequence, plan).sequence;
      ModelInputs in = m.inputs(10);
      in.sequence = &rewired;
      const auto spec = testing::quick_spec(ModelKind::kGcn, {FeatureKind::kPhd}, static_cast<std::uint64_t>(rep), 200);
      values.push_back(testing::score_pr_auc(train_model(spec, in).scores, y));
    }
    med[p] = median(values);
  }
  if (!(med[0] >= med[50] && med[50] >= med[100])) problems.push_back("median PR-AUC increases with p");
  const double secs = seconds_since(start);
  std::string detail =
      fmt::format("{} rewired sequences, GCN median PR-AUC p=0 {:.3f}, p=50 {:.3f}, p=100 {:.3f}, {:.1f} s",
                  sequences, med[0], med[50], med[100], secs);
  if (!problems.empty()) detail += "; first: " + problems.front();
  return {problems.empty(), detail};
}

// ---- mixed model ------------------------------------------------------------------

// The last `n` whitespace-separated cells of the row starting with `term`.
std::vector<std::string> row_tail(const std::string& text, const std::string& term, std::size_t n) {
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind(term + " ", 0) != 0) continue;
    std::istringstream cells(line.substr(term.size()));
    std::vector<std::string> out;
    for (std::string c; cells >> c;) out.push_back(c);
    if (out.size() < n) return out;
    return {out.end() - static_cast<std::ptrdiff_t>(n), out.end()};
  }
  return {};
}

Outcome mixed_model() {
  const auto start = Clock::now();
  std::vector<std::string> problems;

  // Residuals that sum to zero inside every group put the variance at 0.
  std::vector<MetricRow> rows;
  const double e[4] = {0.011, -0.004, -0.011, 0.004};
  double sums[2] = {0, 0}, counts[2] = {0, 0};
  for (int grp = 0; grp < 5; ++grp) {
    for (int rep = 0; rep < 4; ++rep) {
      const int d = rep % 2;
      const double v = 0.3 + 0.05 * d + e[rep] * (1.0 + 0.3 * grp);
      rows.push_back({fmt::format("arch{}", grp), d ? "PhD+Co-author" : "PhD", rep, 10, 0, 0, v});
      sums[d] += v;
      counts[d] += 1;
    }
  }
  const LmmFit boundary = fit_lmm(rows, "PhD");
  const double ols0 = sums[0] / counts[0];
  const double ols1 = sums[1] / counts[1] - ols0;
  const double boundary_err = std::max(std::abs(boundary.intercept.estimate - ols0),
                                       std::abs(boundary.beta("PhD+Co-author").estimate - ols1));
  if (!boundary.boundary || boundary_err > 1e-8) problems.push_back("boundary fit differs from OLS");

  const double mu = 0.342, beta = 0.029, sigma_u = 0.02, sigma = 0.033;
  int covered = 0;
  const int sims = 200;
  for (int s = 0; s < sims; ++s) {
    Rng rng = make_stream(20240501, "lmm_coverage", static_cast<std::uint64_t>(s));
    std::vector<MetricRow> sim;
    for (int grp = 0; grp < 10; ++grp) {
      const double u = sigma_u * rng.normal();
      const std::string model = fmt::format("arch{}", grp);
      for (int rep = 0; rep < 10; ++rep) {
        sim.push_back({model, "PhD", rep, 10, 0, 0, mu + u + sigma * rng.normal()});
        sim.push_back({model, "PhD+Co-author", rep, 10, 0, 0, mu + beta + u + sigma * rng.normal()});
      }
    }
    const Coefficient& b = fit_lmm(sim, "PhD").beta("PhD+Co-author");
    covered += b.ci_lower <= beta && beta <= b.ci_upper;
  }
  const double coverage = static_cast<double>(covered) / sims;
  if (coverage < 0.93 || coverage > 0.97) problems.push_back(fmt::format("coverage {:.3f}", coverage));

  std::ifstream in(std::string(FACPLACE_TEST_DATA_DIR) + "/lmm_top10_fixture.json");
  const auto doc = nlohmann::json::parse(in);
  std::size_t cells = 0;
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
      ++cells;
      if (row_tail(text, row["term"], 6) != row["expected"].get<std::vector<std::string>>()) {
        problems.push_back(fmt::format("fixture row {} / {}", block["reference"].get<std::string>(),
                                       row["term"].get<std::string>()));
      }
    }
  }
  const double secs = seconds_since(start);
  if (secs >= 60.0) problems.push_back("over one minute");
  std::string detail = fmt::format("boundary |diff| {:.2g}, coverage {:.3f} over {} sims, {} fixture rows, {:.1f} s",
                                   boundary_err, coverage, sims, cells, secs);
  if (!problems.empty()) detail += "; first: " + problems.front();
  return {problems.empty(), detail};
}

// ---- directional reproduction -----------------------------------------------------

std::string directional_config(const fs::path& out) {
  return fmt::format(R"(
[run]
seed = 7
out = {}
thresholds = 10, 50
n_repeats = 10

[data]
source = synth

[synth]
n_researchers = 1200
w_net = 2.0

[training]
epochs = 200
learning_rate = 0.01
patience = 30

[grid]
heuristics = phd_rank, avg_coauthor_rank
tabular = logreg, mlp
tabular_features = PhD, Bib, PhD+Bib
graph = gcn, sage
graph_features = PhD+Co-author, Bib+Co-author, PhD+Bib+Co-author
)",
                     out.string());
}

Outcome directional() {
  const auto start = Clock::now();
  const fs::path dir = scratch("directional");
  const RunConfig config = parse_run_config(directional_config(dir));
  run_pipeline(config);
  const RunReport rep = build_report(dir);

  std::vector<MetricRow> learned;
  std::set<std::string> architectures;
  for (const auto& r : rep.rows) {
    if (is_heuristic(parse_model_kind(r.model))) continue;
    learned.push_back(r);
    architectures.insert(r.model);
  }
  std::vector<std::string> problems;
  if (config.n_repeats < 10 || architectures.size() < 4) problems.push_back("grid below 10 runs x 4 architectures");

  std::map<double, double> mean_delta;
  std::string cells;
  for (double k : {10.0, 50.0}) {
    std::vector<MetricRow> at_k;
    for (const auto& r : learned) {
      if (r.k == k) at_k.push_back(r);
    }
    for (const auto& [with, without] : coauthor_pairs()) {
      const auto it = std::find_if(rep.deltas.begin(), rep.deltas.end(), [&](const DeltaRow& d) {
        return d.with_set == with && d.without_set == without && d.k == k;
      });
      if (it == rep.deltas.end()) {
        problems.push_back(fmt::format("no delta row {} K={:g}", with, k));
        continue;
      }
      mean_delta[k] += it->mean_delta / static_cast<double>(coauthor_pairs().size());
      if (k != 10.0) continue;
      const Coefficient& b = fit_lmm(at_k, without).beta(with);
      cells += fmt::format(" {} {:+.3f} (p={:.3f});", with, it->mean_delta, b.p);
      if (it->mean_delta <= 0.0 || b.estimate <= 0.0 || b.p >= 0.05) {
        problems.push_back(fmt::format("{} vs {} at K=10: delta {:.3f}, coef {:.3f}, p {:.3f}", with, without,
                                       it->mean_delta, b.estimate, b.p));
      }
    }
  }
  if (!(mean_delta[50.0] < mean_delta[10.0])) problems.push_back("advantage does not shrink from K=10 to K=50");
  const double secs = seconds_since(start);
  if (secs >= 1800.0) problems.push_back("over 30 minutes");
  fs::remove_all(dir);
  std::string detail = fmt::format("K=10:{} mean delta K=10 {:.3f} > K=50 {:.3f}; {} runs x {} architectures, {:.0f} s",
                                   cells, mean_delta[10.0], mean_delta[50.0], config.n_repeats, architectures.size(),
                                   secs);
  if (!problems.empty()) detail += "; first: " + problems.front();
  return {problems.empty(), detail};
}

// ---- report arithmetic ----------------------------------------------------------------

Outcome report_arithmetic() {
  const std::string gat = fmt::format("{:.2f}", pct_improvement(0.458, 0.317));
  const std::string gru = fmt::format("{:.2f}", pct_improvement(0.414, 0.263));
  const fs::path dir = scratch("arithmetic");
  testing::write_tied_run(dir, {{"gat", "PhD+Bib+Co-author", 458},
                                {"gconvgru", "PhD+Co-author", 414},
                                {"phd_rank", "PhD", 317},
                                {"avg_coauthor_rank", "Co-author", 263}});
  write_report(dir);
  const std::string text = slurp(dir / "report.txt");
  fs::remove_all(dir);
  const bool in_report = text.find("44.48%") != std::string::npos && text.find("57.41%") != std::string::npos;
  return {gat == "44.48" && gru == "57.41" && in_report,
          fmt::format("0.458 vs 0.317 -> {}%, 0.414 vs 0.263 -> {}%, report cells {}", gat, gru,
                      in_report ? "match" : "differ")};
}

Outcome statement() {
  return {true,
          "absolute PR-AUC values of the original real-data study (e.g. GAT 0.458 on the top-10 task) need the "
          "merged DBLP / CS-Professors / CSRankings snapshot and are NOT reproduced here; acceptance rests on the "
          "oracle and property suites plus directional synthetic replication"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"pr_auc_oracle", pr_auc_oracle},     {"gradient_checks", gradients}, {"leakage", leakage},
      {"splits_and_masks", splits_and_masks}, {"rewiring", rewiring},       {"mixed_model", mixed_model},
      {"directional", directional},         {"report_arithmetic", report_arithmetic},
      {"non_reproducibility", statement},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
