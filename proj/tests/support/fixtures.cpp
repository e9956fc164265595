#include "support/fixtures.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "facplace/evalstat.hpp"

namespace facplace::testing {

LinkedDataset make_dataset(const std::string& publications, const std::string& faculty,
                           const std::string& rankings, const std::string& aliases) {
  const auto pubs = parse_publications("paper_id,year,authors\n" + publications);
  const auto fac = parse_faculty("full_name,university,hire_year,phd_university,subfield\n" + faculty);
  const auto ranks = parse_rankings("institution,rank\n" + rankings);
  const auto alias = parse_aliases("raw,canonical\n" + aliases);
  return link_and_impute(pubs, fac, ranks, alias);
}

RawMarket raw_market(const SynthConfig& config) {
  const SynthOutput out = generate(config);
  return {parse_publications(out.publications_csv), parse_faculty(out.faculty_csv),
          parse_rankings(out.rankings_csv)};
}

Market build_market(const RawMarket& raw, int t0, int tf, std::uint64_t split_seed,
                    const std::vector<double>& thresholds) {
  Market m;
  m.t0 = t0;
  m.tf = tf;
  m.dataset = link_and_impute(raw.publications, raw.faculty, raw.ranks, {});
  m.sequence = build_sequence(m.dataset, t0, tf);
  m.partition = partition_nodes(m.dataset, t0, tf);
  m.phd = phd_tensor(m.dataset, t0, tf);
  m.bib = bib_tensor(m.dataset, t0, tf);
  m.ones = ones_tensor(m.dataset.node_count(), t0, tf);
  m.splits = temporal_split(m.partition, split_seed);
  for (double k : thresholds) m.labels.emplace(k, assign_labels(m.dataset, k));
  return m;
}

Market build_market(const SynthConfig& config, std::uint64_t split_seed,
                    const std::vector<double>& thresholds) {
  return build_market(raw_market(config), config.t0, config.tf, split_seed, thresholds);
}

ModelInputs Market::inputs(double k) const {
  return {&dataset, &sequence, &phd, &bib, &ones, &labels.at(k), &splits};
}

double ap_oracle(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  double positives = 0.0;
  for (auto l : labels) positives += l;
  std::set<double, std::greater<>> cuts(scores.begin(), scores.end());
  double ap = 0.0;
  double prev_recall = 0.0;
  for (double cut : cuts) {
    double tp = 0.0;
    double predicted = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= cut) {
        predicted += 1.0;
        tp += labels[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

double score_pr_auc(const ScoreSet& scores, const std::vector<std::uint8_t>& high) {
  std::vector<std::uint8_t> y;
  for (NodeId n : scores.nodes) y.push_back(high[n]);
  return pr_auc(scores.probability, y);
}

ModelSpec quick_spec(ModelKind kind, std::vector<FeatureKind> features, std::uint64_t seed, int epochs) {
  ModelSpec s;
  s.kind = kind;
  s.features = std::move(features);
  s.epochs = epochs;
  s.learning_rate = 0.01;
  s.patience = std::max(1, epochs);
  s.hidden_dim = 8;
  s.seed = seed;
  return s;
}

namespace {

void put(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

void write_tied_run(const std::filesystem::path& dir, const std::vector<TiedCell>& cells) {
  std::string labels = "node_id,hire_year,faculty_rank,high_K10\n";
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::string scores = "node_id,probability,label@0.5\n";
    for (int i = 0; i < 1000; ++i) {
      const std::size_t node = c * 1000 + static_cast<std::size_t>(i);
      const bool high = i < cells[c].positives;
      labels += fmt::format("{},2019,{},{}\n", node, high ? 5 : 80, high ? 1 : 0);
      scores += fmt::format("{},0.3,0\n", node);
    }
    const std::string id = fmt::format("{}__K10__r0", cells[c].model);
    const std::string cell_dir = "runs/" + id;
    put(dir / cell_dir / "scores.csv", scores);
    list.push_back({{"id", id},
                    {"model", cells[c].model},
                    {"feature_set", cells[c].feature_set},
                    {"K", 10.0},
                    {"run", 0},
                    {"dir", cell_dir}});
  }
  put(dir / "features" / "labels.csv", labels);
  const nlohmann::json manifest{{"seed", 1},         {"t0", 2010},      {"tf", 2020},
                                {"first_test_year", 2018}, {"n_repeats", 1}, {"thresholds", {10.0}},
                                {"cells", list}};
  put(dir / "manifest.json", manifest.dump(1));
}

}  // namespace facplace::testing
