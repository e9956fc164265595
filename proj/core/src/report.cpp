#include "facplace/report.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"

namespace facplace {

namespace fs = std::filesystem;

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single run.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_k(double a, double b) { return std::abs(a - b) < 1e-9; }

bool heuristic_name(const std::string& model) {
  try {
    return is_heuristic(parse_model_kind(model));
  } catch (const Error&) {
    return false;
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IncompleteRunError(fmt::format("run directory lacks {}", path.string()));
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

struct CellRef {
  std::string id;
  std::string model;
  std::string feature_set;
  double k = 0.0;
  int run = 0;
  int p = -1;
  fs::path dir;
};

std::vector<CellRef> cells_of(const nlohmann::json& list) {
  std::vector<CellRef> out;
  for (const auto& c : list) {
    CellRef r;
    r.id = c.at("id").get<std::string>();
    r.model = c.at("model").get<std::string>();
    r.feature_set = c.at("feature_set").get<std::string>();
    r.k = c.at("K").get<double>();
    r.run = c.at("run").get<int>();
    if (c.contains("p")) r.p = c.at("p").get<int>();
    r.dir = c.at("dir").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

using LabelTable = std::map<double, std::vector<std::uint8_t>>;

MetricRow metrics_for(const fs::path& run_dir, const CellRef& cell, const LabelTable& labels) {
  const fs::path path = run_dir / cell.dir / "scores.csv";
  if (!fs::exists(path)) {
    throw IncompleteRunError(fmt::format("missing scores for cell {} ({})", cell.id, path.string()));
  }
  const auto it = labels.find(cell.k);
  if (it == labels.end()) throw IncompleteRunError(fmt::format("labels.csv has no column for K={:g}", cell.k));
  return score_metrics(read_scores_csv(path), it->second, cell.model, cell.feature_set, cell.run, cell.k);
}

std::vector<CellSummary> summarize(const std::vector<MetricRow>& rows) {
  std::vector<std::tuple<double, std::string, std::string>> order;
  std::map<std::tuple<double, std::string, std::string>, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.k, r.model, r.feature_set);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    std::vector<double> p, r, a;
    for (const MetricRow* m : g) {
      p.push_back(m->precision);
      r.push_back(m->recall);
      a.push_back(m->pr_auc);
    }
    CellSummary s;
    std::tie(s.k, s.model, s.feature_set) = key;
    s.runs = g.size();
    s.precision_mean = mean_of(p);
    s.precision_std = std_of(p);
    s.recall_mean = mean_of(r);
    s.recall_std = std_of(r);
    s.pr_auc_mean = mean_of(a);
    s.pr_auc_std = std_of(a);
    s.heuristic = heuristic_name(s.model);
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<double> improvement_over(const std::vector<CellSummary>& cells, double k, const std::string& model,
                                       double value) {
  for (const auto& c : cells) {
    if (same_k(c.k, k) && c.model == model && c.pr_auc_mean > 0.0) return pct_improvement(value, c.pr_auc_mean);
  }
  return std::nullopt;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json summary_json(const CellSummary& s) {
  return {{"model", s.model},
          {"feature_set", s.feature_set},
          {"K", s.k},
          {"runs", s.runs},
          {"precision_mean", s.precision_mean},
          {"precision_std", s.precision_std},
          {"recall_mean", s.recall_mean},
          {"recall_std", s.recall_std},
          {"pr_auc_mean", s.pr_auc_mean},
          {"pr_auc_std", s.pr_auc_std},
          {"heuristic", s.heuristic}};
}

std::string mean_std(double m, double s) { return fmt::format("{:.3f} ({:.3f})", m, s); }

std::string pct_text(const std::optional<double>& v) { return v ? fmt::format("{:.2f}%", *v) : "-"; }

}  // namespace

const std::vector<std::string>& lmm_references() {
  static const std::vector<std::string> refs = {"PhD", "Bib", "PhD+Bib", "PhD+Co-author"};
  return refs;
}

const std::vector<std::pair<std::string, std::string>>& coauthor_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"PhD+Co-author", "PhD"}, {"Bib+Co-author", "Bib"}, {"PhD+Bib+Co-author", "PhD+Bib"}};
  return pairs;
}

void write_scores_csv(const ScoreSet& scores, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write '{}'", path.string()));
  f << "node_id,probability,label@0.5\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    f << fmt::format("{},{:.17g},{}\n", scores.nodes[i], scores.probability[i],
                     ScoreSet::label_at(scores.probability[i]));
  }
}

std::vector<ScoreRow> read_scores_csv(const fs::path& path) {
  const csv::Table table = csv::read_file(path);
  csv::require_header(table, {"node_id", "probability", "label@0.5"}, path.string());
  std::vector<ScoreRow> out;
  for (const auto& row : table.rows) {
    try {
      ScoreRow r;
      r.node = static_cast<NodeId>(std::stoul(row.fields[0]));
      r.probability = std::stod(row.fields[1]);
      r.predicted = static_cast<std::uint8_t>(std::stoi(row.fields[2]));
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("{}:{}: malformed score row", path.string(), row.line));
    }
  }
  return out;
}

void write_labels_csv(const LinkedDataset& dataset, const std::vector<double>& thresholds, const fs::path& path) {
  std::vector<LabelVector> labels;
  std::string text = "node_id,hire_year,faculty_rank";
  for (double k : thresholds) {
    labels.push_back(assign_labels(dataset, k));
    text += fmt::format(",high_K{:g}", k);
  }
  text += '\n';
  for (const auto& r : dataset.researchers) {
    text += fmt::format("{},{},{:.17g}", r.node_id, r.hire_year, faculty_rank_of(r));
    for (const auto& lv : labels) text += fmt::format(",{}", lv.high[r.node_id]);
    text += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write '{}'", path.string()));
  f << text;
}

std::map<double, std::vector<std::uint8_t>> read_labels_csv(const fs::path& path) {
  if (!fs::exists(path)) throw IncompleteRunError(fmt::format("run directory lacks {}", path.string()));
  const csv::Table table = csv::read_file(path);
  std::map<double, std::vector<std::uint8_t>> out;
  std::vector<std::pair<std::size_t, double>> columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& h = table.header[c];
    if (h.rfind("high_K", 0) == 0) {
      try {
        columns.emplace_back(c, std::stod(h.substr(6)));
      } catch (const std::logic_error&) {
        throw DataError(fmt::format("{}: bad label column '{}'", path.string(), h));
      }
    }
  }
  const std::size_t id_col = table.column("node_id");
  for (const auto& [c, k] : columns) out[k].assign(table.rows.size(), 0);
  for (const auto& row : table.rows) {
    try {
      const std::size_t node = std::stoul(row.fields[id_col]);
      if (node >= table.rows.size()) throw std::out_of_range("node id");
      for (const auto& [c, k] : columns) out[k][node] = static_cast<std::uint8_t>(std::stoi(row.fields[c]));
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("{}:{}: malformed label row", path.string(), row.line));
    }
  }
  return out;
}

MetricRow score_metrics(const std::vector<ScoreRow>& scores, const std::vector<std::uint8_t>& high,
                        const std::string& model, const std::string& feature_set, int run, double k) {
  std::vector<double> p;
  std::vector<std::uint8_t> y;
  for (const auto& s : scores) {
    if (s.node >= high.size()) throw DataError(fmt::format("score for unknown node {}", s.node));
    p.push_back(s.probability);
    y.push_back(high[s.node]);
  }
  const PrecisionRecall pr = precision_recall(p, y, 0.5);
  return {model, feature_set, run, k, pr.precision, pr.recall, pr_auc(p, y)};
}

RunReport build_report(const fs::path& run_dir) {
  RunReport rep;
  rep.manifest = read_json(run_dir / "manifest.json");
  rep.thresholds = rep.manifest.at("thresholds").get<std::vector<double>>();
  const LabelTable labels = read_labels_csv(run_dir / "features" / "labels.csv");

  for (const auto& cell : cells_of(rep.manifest.at("cells"))) rep.rows.push_back(metrics_for(run_dir, cell, labels));
  rep.cells = summarize(rep.rows);

  std::vector<MetricRow> learned;
  for (const auto& r : rep.rows) {
    if (!heuristic_name(r.model)) learned.push_back(r);
  }

  for (double k : rep.thresholds) {
    std::vector<std::string> sets;
    std::map<std::string, const CellSummary*> best;
    for (const auto& c : rep.cells) {
      if (c.heuristic || !same_k(c.k, k)) continue;
      auto it = best.find(c.feature_set);
      if (it == best.end()) {
        sets.push_back(c.feature_set);
        best[c.feature_set] = &c;
      } else if (c.pr_auc_mean > it->second->pr_auc_mean) {
        it->second = &c;
      }
    }
    for (const auto& set : sets) {
      BestRow b;
      b.best = *best[set];
      b.vs_phd = improvement_over(rep.cells, k, "phd_rank", b.best.pr_auc_mean);
      b.vs_avg_coauthor = improvement_over(rep.cells, k, "avg_coauthor_rank", b.best.pr_auc_mean);
      rep.best.push_back(std::move(b));
    }

    std::vector<MetricRow> at_k;
    for (const auto& r : learned) {
      if (same_k(r.k, k)) at_k.push_back(r);
    }
    for (const auto& ref : lmm_references()) {
      if (std::none_of(at_k.begin(), at_k.end(), [&](const MetricRow& r) { return r.feature_set == ref; })) continue;
      LmmBlock block;
      block.k = k;
      block.reference = ref;
      try {
        block.fit = fit_lmm(at_k, ref);
      } catch (const Error& e) {
        block.error = e.what();
      }
      rep.lmm.push_back(std::move(block));
    }
  }

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& pair : coauthor_pairs()) {
    const bool everywhere = std::all_of(rep.thresholds.begin(), rep.thresholds.end(), [&](double k) {
      bool with = false, without = false;
      for (const auto& r : learned) {
        if (!same_k(r.k, k)) continue;
        with = with || r.feature_set == pair.first;
        without = without || r.feature_set == pair.second;
      }
      return with && without;
    });
    if (everywhere) pairs.push_back(pair);
  }
  if (!pairs.empty()) rep.deltas = delta_table(learned, pairs, rep.thresholds);

  if (rep.manifest.contains("rewire_cells")) {
    std::vector<std::tuple<std::string, std::string, double, int>> order;
    std::map<std::tuple<std::string, std::string, double, int>, std::vector<double>> groups;
    for (const auto& cell : cells_of(rep.manifest.at("rewire_cells"))) {
      const MetricRow m = metrics_for(run_dir, cell, labels);
      const auto key = std::make_tuple(cell.model, cell.feature_set, cell.k, cell.p);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(m.pr_auc);
    }
    for (const auto& key : order) {
      RewireSummary s;
      std::tie(s.model, s.feature_set, s.k, s.p) = key;
      s.n = groups[key].size();
      s.median_pr_auc = median_of(groups[key]);
      s.mean_pr_auc = mean_of(groups[key]);
      rep.rewiring.push_back(std::move(s));
    }
  }
  return rep;
}

nlohmann::json to_json(const RunReport& rep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : rep.cells) cells.push_back(summary_json(c));
  nlohmann::json best = nlohmann::json::array();
  for (const auto& b : rep.best) {
    nlohmann::json j = summary_json(b.best);
    j["improvement_vs_phd_rank"] = optional_json(b.vs_phd);
    j["improvement_vs_avg_coauthor_rank"] = optional_json(b.vs_avg_coauthor);
    best.push_back(std::move(j));
  }
  nlohmann::json lmm = nlohmann::json::array();
  for (const auto& b : rep.lmm) {
    nlohmann::json j{{"K", b.k}, {"reference", b.reference}};
    if (b.fit) j["fit"] = to_json(*b.fit);
    else j["error"] = b.error;
    lmm.push_back(std::move(j));
  }
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& d : rep.deltas) deltas.push_back(to_json(d));
  nlohmann::json rewiring = nlohmann::json::array();
  for (const auto& r : rep.rewiring) {
    rewiring.push_back({{"model", r.model},
                        {"feature_set", r.feature_set},
                        {"K", r.k},
                        {"p", r.p},
                        {"n", r.n},
                        {"median_pr_auc", r.median_pr_auc},
                        {"mean_pr_auc", r.mean_pr_auc}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"model", r.model},
                    {"feature_set", r.feature_set},
                    {"run", r.run},
                    {"K", r.k},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"pr_auc", r.pr_auc}});
  }
  return {{"thresholds", rep.thresholds},
          {"seed", rep.manifest.value("seed", nlohmann::json())},
          {"best_models", best},
          {"cells", cells},
          {"mixed_models", lmm},
          {"delta_tables", deltas},
          {"rewiring", rewiring},
          {"metrics", rows}};
}

std::string render_text(const RunReport& rep) {
  std::string out;
  const auto& m = rep.manifest;
  out += "Run summary\n";
  out += fmt::format("  seed {}  years {}-{}  test years {}-{}  repeats {}\n", m.value("seed", 0ULL), m.value("t0", 0),
                     m.value("tf", 0), m.value("first_test_year", 0), m.value("tf", 0), m.value("n_repeats", 0));
  out += fmt::format("  {} scored cells, {} rewiring cells\n\n", rep.rows.size(),
                     m.contains("rewire_cells") ? m.at("rewire_cells").size() : 0);

  const std::string row_fmt = "{:<20} {:<18} {:>15} {:>15} {:>15} {:>12} {:>14}\n";
  for (double k : rep.thresholds) {
    out += fmt::format("Best model per feature set (K={:g}; mean (std) over runs)\n", k);
    out += fmt::format(fmt::runtime(row_fmt), "Feature set", "Model", "Precision", "Recall", "PR-AUC", "vs PhD Rank",
                       "vs Avg Co-auth");
    for (const auto& c : rep.cells) {
      if (!c.heuristic || !same_k(c.k, k)) continue;
      out += fmt::format(fmt::runtime(row_fmt), "(heuristic)", c.model, mean_std(c.precision_mean, c.precision_std),
                         mean_std(c.recall_mean, c.recall_std), mean_std(c.pr_auc_mean, c.pr_auc_std), "", "");
    }
    for (const auto& b : rep.best) {
      if (!same_k(b.best.k, k)) continue;
      const auto& c = b.best;
      out += fmt::format(fmt::runtime(row_fmt), c.feature_set, c.model, mean_std(c.precision_mean, c.precision_std),
                         mean_std(c.recall_mean, c.recall_std), mean_std(c.pr_auc_mean, c.pr_auc_std),
                         pct_text(b.vs_phd), pct_text(b.vs_avg_coauthor));
    }
    out += '\n';
  }

  out += "All cells (mean PR-AUC (std))\n";
  for (double k : rep.thresholds) {
    out += fmt::format("  K={:g}\n", k);
    for (const auto& c : rep.cells) {
      if (!same_k(c.k, k)) continue;
      out += fmt::format("    {:<18} {:<20} {}  n={}\n", c.model, c.feature_set, mean_std(c.pr_auc_mean, c.pr_auc_std),
                         c.runs);
    }
  }
  out += '\n';

  for (const auto& b : rep.lmm) {
    out += fmt::format("Mixed linear model, K={:g}\n", b.k);
    if (b.fit) {
      out += format_lmm(*b.fit);
    } else {
      out += fmt::format("Reference = {}: not estimable ({})\n", b.reference, b.error);
    }
    out += '\n';
  }

  if (!rep.deltas.empty()) {
    out += "PR-AUC difference with vs without Co-author (90% CI; stars from mixed-model p)\n";
    out += fmt::format("{:<20} {:<10} {:>6} {:>9} {:>9} {:>9} {:>7} {:>5}\n", "With", "Without", "K", "Delta",
                       "CI Lower", "CI Upper", "p", "");
    for (const auto& d : rep.deltas) {
      out += fmt::format("{:<20} {:<10} {:>6g} {:>9.3f} {:>9.3f} {:>9.3f} {:>7} {:>5}\n", d.with_set, d.without_set,
                         d.k, d.mean_delta, d.ci_lower, d.ci_upper,
                         std::isfinite(d.lmm_p) ? fmt::format("{:.3f}", d.lmm_p) : "nan", d.stars);
    }
    out += '\n';
  }

  if (!rep.rewiring.empty()) {
    out += "Rewiring (PR-AUC over replicates)\n";
    out += fmt::format("{:<10} {:<20} {:>6} {:>5} {:>4} {:>8} {:>8}\n", "Model", "Feature set", "K", "p", "n", "Median",
                       "Mean");
    for (const auto& r : rep.rewiring) {
      out += fmt::format("{:<10} {:<20} {:>6g} {:>5} {:>4} {:>8.3f} {:>8.3f}\n", r.model, r.feature_set, r.k, r.p, r.n,
                         r.median_pr_auc, r.mean_pr_auc);
    }
    out += '\n';
  }
  return out;
}

RunReport write_report(const fs::path& run_dir) {
  RunReport rep = build_report(run_dir);
  const std::pair<const char*, std::string> files[] = {{"report.json", to_json(rep).dump(1) + "\n"},
                                                       {"report.txt", render_text(rep)}};
  for (const auto& [name, text] : files) {
    std::ofstream f(run_dir / name, std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot write '{}'", (run_dir / name).string()));
    f << text;
  }
  return rep;
}

}  // namespace facplace
