#include "facplace/featurize.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"
#include "facplace/rng.hpp"

namespace facplace {

static_assert(std::endian::native == std::endian::little,
              "binary tensor files are written in host order and assumed little-endian");

namespace {

constexpr double kTop10 = 10.0;
constexpr double kTop50 = 50.0;

constexpr const char* kBibBaseNames[kBibBaseFeatures] = {
    "papers",
    "avg_authors",
    "first_authored",
    "prop_first_authored",
    "avg_author_position",
    "papers_with_faculty",
    "prop_with_faculty",
    "papers_with_top10_faculty",
    "prop_with_top10_faculty",
    "papers_with_top50_faculty",
    "prop_with_top50_faculty",
};

FeatureKind kind_from_name(const std::string& name) {
  if (name == "X_PhD") return FeatureKind::kPhd;
  if (name == "X_Bib") return FeatureKind::kBib;
  if (name == "X_ONES") return FeatureKind::kOnes;
  throw DataError(fmt::format("unknown tensor name '{}'", name));
}

}  // namespace

std::size_t LabelVector::positives_among(std::span<const NodeId> nodes) const {
  std::size_t count = 0;
  for (NodeId n : nodes) count += high.at(n);
  return count;
}

LabelVector assign_labels(const LinkedDataset& dataset, double threshold) {
  LabelVector labels;
  labels.threshold = threshold;
  labels.high.reserve(dataset.node_count());
  for (const auto& r : dataset.researchers) {
    labels.high.push_back(faculty_rank_of(r) <= threshold ? 1 : 0);
  }
  return labels;
}

const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kPhd:
      return "X_PhD";
    case FeatureKind::kBib:
      return "X_Bib";
    case FeatureKind::kOnes:
      return "X_ONES";
  }
  return "?";
}

FeatureTensor::FeatureTensor(FeatureKind kind, std::vector<std::string> feature_names,
                             int first_year, int last_year, std::size_t node_count)
    : kind_(kind),
      name_(feature_kind_name(kind)),
      feature_names_(std::move(feature_names)),
      first_year_(first_year),
      last_year_(last_year),
      node_count_(node_count) {
  if (last_year < first_year) {
    throw DataError(fmt::format("tensor: empty year range [{}, {}]", first_year, last_year));
  }
  values_.assign(node_count_ * feature_names_.size() * year_count(), 0.0);
}

std::size_t FeatureTensor::offset(NodeId node, std::size_t feature, int year) const {
  if (node >= node_count_ || feature >= feature_names_.size() || !contains_year(year)) {
    throw DataError(fmt::format("tensor {}: index ({}, {}, {}) out of range", name_, node, feature,
                                year));
  }
  return (static_cast<std::size_t>(node) * feature_names_.size() + feature) * year_count() +
         static_cast<std::size_t>(year - first_year_);
}

double FeatureTensor::at(NodeId node, std::size_t feature, int year) const {
  return values_[offset(node, feature, year)];
}

double& FeatureTensor::at(NodeId node, std::size_t feature, int year) {
  return values_[offset(node, feature, year)];
}

std::vector<std::string> bib_feature_names() {
  std::vector<std::string> names;
  for (const char* base : kBibBaseNames) names.push_back(std::string(base) + "_cum");
  for (const char* base : kBibBaseNames) names.push_back(std::string(base) + "_prev");
  return names;
}

FeatureTensor phd_tensor(const LinkedDataset& dataset, int t0, int tf) {
  FeatureTensor tensor(FeatureKind::kPhd, {"phd_rank"}, t0, tf, dataset.node_count());
  for (const auto& r : dataset.researchers) {
    const double rank = phd_rank_of(r);
    for (int t = t0; t <= tf; ++t) tensor.at(r.node_id, 0, t) = rank;
  }
  return tensor;
}

FeatureTensor ones_tensor(std::size_t node_count, int t0, int tf) {
  FeatureTensor tensor(FeatureKind::kOnes, {"one"}, t0, tf, node_count);
  std::fill(tensor.values().begin(), tensor.values().end(), 1.0);
  return tensor;
}

BibliometricIndex::BibliometricIndex(const LinkedDataset& dataset)
    : dataset_(&dataset), by_node_(dataset.node_count()), cohort_authors_(dataset.publications.size()) {
  for (std::size_t p = 0; p < dataset.publications.size(); ++p) {
    const auto& pub = dataset.publications[p];
    auto& cohort = cohort_authors_[p];
    for (std::size_t k = 0; k < pub.authors.size(); ++k) {
      const auto& node = pub.authors[k].node;
      if (!node) continue;
      if (std::find(cohort.begin(), cohort.end(), *node) != cohort.end()) continue;
      cohort.push_back(*node);
      by_node_[*node].push_back({pub.year, static_cast<std::uint32_t>(k + 1),
                                 static_cast<std::uint32_t>(pub.authors.size()),
                                 static_cast<std::uint32_t>(p)});
    }
  }
  for (auto& papers : by_node_) {
    std::stable_sort(papers.begin(), papers.end(),
                     [](const Authorship& a, const Authorship& b) { return a.year < b.year; });
  }
}

void BibliometricIndex::accumulate(std::span<const Authorship> papers, NodeId node, int status_year,
                                   std::span<double> out) const {
  double n_first = 0;
  double sum_authors = 0;
  double sum_position = 0;
  double n_faculty = 0;
  double n_top10 = 0;
  double n_top50 = 0;
  for (const auto& a : papers) {
    sum_authors += a.n_authors;
    sum_position += a.position;
    if (a.position == 1) n_first += 1;
    bool faculty = false;
    bool top10 = false;
    bool top50 = false;
    for (NodeId j : cohort_authors_[a.paper]) {
      if (j == node) continue;
      const Researcher& co = dataset_->researchers[j];
      if (co.hire_year > status_year) continue;
      faculty = true;
      const double rank = faculty_rank_of(co);
      if (rank <= kTop10) top10 = true;
      if (rank <= kTop50) top50 = true;
    }
    n_faculty += faculty;
    n_top10 += top10;
    n_top50 += top50;
  }
  const double n = static_cast<double>(papers.size());
  auto ratio = [n](double x) { return n > 0 ? x / n : 0.0; };
  out[0] = n;
  out[1] = ratio(sum_authors);
  out[2] = n_first;
  out[3] = ratio(n_first);
  out[4] = ratio(sum_position);
  out[5] = n_faculty;
  out[6] = ratio(n_faculty);
  out[7] = n_top10;
  out[8] = ratio(n_top10);
  out[9] = n_top50;
  out[10] = ratio(n_top50);
}

void BibliometricIndex::row(NodeId node, int t, std::span<double> out) const {
  if (node >= by_node_.size()) throw DataError(fmt::format("bib: node {} out of range", node));
  if (out.size() != kBibFeatures) throw DataError("bib: output row must hold 22 values");
  const auto& papers = by_node_[node];
  const auto by_year = [](const Authorship& a, int year) { return a.year < year; };
  const auto cum_end = std::lower_bound(papers.begin(), papers.end(), t + 1, by_year);
  const auto prev_begin = std::lower_bound(papers.begin(), papers.end(), t - 1, by_year);
  const auto prev_end = std::lower_bound(papers.begin(), papers.end(), t, by_year);
  accumulate({papers.data(), static_cast<std::size_t>(cum_end - papers.begin())}, node, t,
             out.subspan(0, kBibBaseFeatures));
  accumulate({papers.data() + (prev_begin - papers.begin()),
              static_cast<std::size_t>(prev_end - prev_begin)},
             node, t, out.subspan(kBibBaseFeatures, kBibBaseFeatures));
}

FeatureTensor bib_tensor(const LinkedDataset& dataset, int t0, int tf) {
  FeatureTensor tensor(FeatureKind::kBib, bib_feature_names(), t0, tf, dataset.node_count());
  const BibliometricIndex index(dataset);
  std::vector<double> row(kBibFeatures);
  for (NodeId n = 0; n < dataset.node_count(); ++n) {
    for (int t = t0; t <= tf; ++t) {
      index.row(n, t, row);
      for (std::size_t f = 0; f < kBibFeatures; ++f) tensor.at(n, f, t) = row[f];
    }
  }
  return tensor;
}

std::vector<NodeId> SplitMasks::nodes(Split which) const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == which) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

SplitMasks temporal_split(const NodePartition& partition, std::uint64_t seed, double p_train,
                          int test_years) {
  if (test_years < 1 || partition.tf - test_years + 1 <= partition.t0) {
    throw ConfigError(fmt::format("split: {} test years leave no training pool in [{}, {}]",
                                  test_years, partition.t0, partition.tf));
  }
  if (!(p_train > 0.0 && p_train < 1.0)) {
    throw ConfigError(fmt::format("split: p_train {} outside (0, 1)", p_train));
  }
  SplitMasks splits;
  splits.t0 = partition.t0;
  splits.tf = partition.tf;
  splits.first_test_year = partition.tf - test_years + 1;
  splits.p_train = p_train;
  splits.seed = seed;
  splits.hire_year = partition.hire_year;
  splits.assignment.assign(partition.hire_year.size(), Split::kNone);

  const std::size_t pool_years = static_cast<std::size_t>(splits.first_test_year - splits.t0);
  std::vector<std::vector<NodeId>> pools(pool_years);
  for (NodeId n : partition.v_hire) {
    const int year = partition.hire_year[n];
    if (year >= splits.first_test_year) {
      splits.assignment[n] = Split::kTest;
    } else {
      pools[static_cast<std::size_t>(year - splits.t0)].push_back(n);
    }
  }
  for (std::size_t k = 0; k < pool_years; ++k) {
    auto& pool = pools[k];
    std::sort(pool.begin(), pool.end());
    Rng rng = make_stream(seed, "split", static_cast<std::uint64_t>(splits.t0) + k);
    rng.shuffle(pool);
    const auto n_train = static_cast<std::size_t>(std::lround(p_train * static_cast<double>(pool.size())));
    for (std::size_t i = 0; i < pool.size(); ++i) {
      splits.assignment[pool[i]] = i < n_train ? Split::kTrain : Split::kVal;
    }
  }
  return splits;
}

YearMasks year_masks(const SplitMasks& splits, int t, int window) {
  if (t < splits.t0 || t > splits.tf) {
    throw DataError(fmt::format("masks: year {} outside [{}, {}]", t, splits.t0, splits.tf));
  }
  if (window < 1) throw ConfigError(fmt::format("masks: window {} < 1", window));
  const std::size_t n = splits.assignment.size();
  YearMasks masks;
  masks.year = t;
  masks.train.assign(n, 0);
  masks.val.assign(n, 0);
  masks.test.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int hired = splits.hire_year[i];
    const bool in_window = hired >= t - window && hired <= t - 1;
    switch (splits.assignment[i]) {
      case Split::kTrain:
        masks.train[i] = in_window;
        break;
      case Split::kVal:
        masks.val[i] = in_window;
        break;
      case Split::kTest:
        masks.test[i] = hired == t;
        break;
      case Split::kNone:
        break;
    }
  }
  return masks;
}

std::size_t mask_count(std::span<const std::uint8_t> mask) {
  std::size_t count = 0;
  for (auto m : mask) count += m != 0;
  return count;
}

void write_tensor(const FeatureTensor& tensor, const std::filesystem::path& bin_path) {
  {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", bin_path.string()));
    const auto values = tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  nlohmann::json sidecar{
      {"name", tensor.name()},
      {"shape", {tensor.node_count(), tensor.feature_count(), tensor.year_count()}},
      {"feature_names", tensor.feature_names()},
      {"years", {tensor.first_year(), tensor.last_year()}},
      {"dtype", "float64"},
      {"byte_order", "little"},
      {"layout", "node,feature,year"},
  };
  std::filesystem::path json_path = bin_path;
  json_path.replace_extension(".json");
  std::ofstream meta(json_path, std::ios::binary);
  meta << sidecar.dump(1) << '\n';
}

FeatureTensor read_tensor(const std::filesystem::path& bin_path) {
  std::filesystem::path json_path = bin_path;
  json_path.replace_extension(".json");
  std::ifstream meta_in(json_path);
  if (!meta_in) throw DataError(fmt::format("missing tensor sidecar '{}'", json_path.string()));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", json_path.string(), e.what()));
  }
  const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
  const auto years = meta.at("years").get<std::vector<int>>();
  FeatureTensor tensor(kind_from_name(meta.at("name").get<std::string>()),
                       meta.at("feature_names").get<std::vector<std::string>>(), years.at(0),
                       years.at(1), shape.at(0));
  if (tensor.feature_count() != shape.at(1) || tensor.year_count() != shape.at(2)) {
    throw DataError(fmt::format("{}: shape disagrees with feature names/years", json_path.string()));
  }
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", bin_path.string()));
  auto values = tensor.values();
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)) ||
      in.peek() != std::char_traits<char>::eof()) {
    throw DataError(fmt::format("{}: size does not match shape", bin_path.string()));
  }
  return tensor;
}

void write_masks_csv(const SplitMasks& splits, int window, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << "node_id,year,mask_kind,value\n";
  for (int t = splits.t0; t <= splits.tf; ++t) {
    const int w = window > 0 ? window : std::max(1, t - splits.t0);
    const YearMasks masks = year_masks(splits, t, w);
    for (std::size_t i = 0; i < splits.assignment.size(); ++i) {
      out << i << ',' << t << ",train," << int(masks.train[i]) << '\n';
      out << i << ',' << t << ",val," << int(masks.val[i]) << '\n';
      out << i << ',' << t << ",test," << int(masks.test[i]) << '\n';
    }
  }
}

void write_splits_csv(const SplitMasks& splits, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << "node_id,hire_year,split\n";
  static constexpr const char* kNames[] = {"none", "train", "val", "test"};
  for (std::size_t i = 0; i < splits.assignment.size(); ++i) {
    out << i << ',' << splits.hire_year[i] << ',' << kNames[static_cast<int>(splits.assignment[i])]
        << '\n';
  }
}

SplitMasks read_splits_csv(const std::filesystem::path& path, int t0, int tf, int first_test_year) {
  const csv::Table table = csv::read_file(path);
  csv::require_header(table, {"node_id", "hire_year", "split"}, path.string());
  SplitMasks splits;
  splits.t0 = t0;
  splits.tf = tf;
  splits.first_test_year = first_test_year;
  for (const auto& row : table.rows) {
    if (std::stoul(row.fields[0]) != splits.assignment.size()) {
      throw DataError(fmt::format("{}:{}: node ids must be dense and ordered", path.string(), row.line));
    }
    splits.hire_year.push_back(std::stoi(row.fields[1]));
    const std::string& s = row.fields[2];
    if (s == "none") splits.assignment.push_back(Split::kNone);
    else if (s == "train") splits.assignment.push_back(Split::kTrain);
    else if (s == "val") splits.assignment.push_back(Split::kVal);
    else if (s == "test") splits.assignment.push_back(Split::kTest);
    else throw DataError(fmt::format("{}:{}: unknown split '{}'", path.string(), row.line, s));
  }
  return splits;
}

}  // namespace facplace
