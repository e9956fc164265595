#pragma once

// Labels, node feature tensors, and leakage-safe temporal splits and masks.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "facplace/ingest.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace {

struct LabelVector {
  double threshold = 10.0;           // K
  std::vector<std::uint8_t> high;    // per node: 1 iff faculty rank <= K

  std::size_t positives_among(std::span<const NodeId> nodes) const;
};

LabelVector assign_labels(const LinkedDataset& dataset, double threshold);

enum class FeatureKind { kPhd, kBib, kOnes };

const char* feature_kind_name(FeatureKind kind);  // "X_PhD", "X_Bib", "X_ONES"

// Dense node x feature x year tensor.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(FeatureKind kind, std::vector<std::string> feature_names, int first_year,
                int last_year, std::size_t node_count);

  FeatureKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t node_count() const { return node_count_; }
  std::size_t feature_count() const { return feature_names_.size(); }
  int first_year() const { return first_year_; }
  int last_year() const { return last_year_; }
  std::size_t year_count() const { return static_cast<std::size_t>(last_year_ - first_year_ + 1); }
  bool contains_year(int t) const { return t >= first_year_ && t <= last_year_; }

  double at(NodeId node, std::size_t feature, int year) const;
  double& at(NodeId node, std::size_t feature, int year);

  // Raw storage in (node, feature, year) row-major order.
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const FeatureTensor&) const = default;

 private:
  std::size_t offset(NodeId node, std::size_t feature, int year) const;

  FeatureKind kind_ = FeatureKind::kOnes;
  std::string name_;
  std::vector<std::string> feature_names_;
  int first_year_ = 0;
  int last_year_ = -1;
  std::size_t node_count_ = 0;
  std::vector<double> values_;
};

inline constexpr std::size_t kBibBaseFeatures = 11;
inline constexpr std::size_t kBibFeatures = 2 * kBibBaseFeatures;

// Names of the 22 bibliometric features: 11 cumulative then 11 prior-year.
std::vector<std::string> bib_feature_names();

FeatureTensor phd_tensor(const LinkedDataset& dataset, int t0, int tf);
FeatureTensor ones_tensor(std::size_t node_count, int t0, int tf);

// For each year t: the 11 features over papers dated <= t, then the same 11
// over papers dated t-1 alone. Co-author status (faculty, top-10, top-50)
// counts only hire events dated <= t.
FeatureTensor bib_tensor(const LinkedDataset& dataset, int t0, int tf);

// Per-node publication index used to compute bibliometric rows at any year,
// including years outside a tensor's range (e.g. t0 - 1 for t0 hires).
class BibliometricIndex {
 public:
  explicit BibliometricIndex(const LinkedDataset& dataset);

  // Writes the 22 features of `node` at year `t` into `out`.
  void row(NodeId node, int t, std::span<double> out) const;

 private:
  struct Authorship {
    int year;
    std::uint32_t position;     // 1-based
    std::uint32_t n_authors;
    std::uint32_t paper;        // index into dataset publications
  };

  void accumulate(std::span<const Authorship> papers, NodeId node, int status_year,
                  std::span<double> out) const;

  const LinkedDataset* dataset_;
  std::vector<std::vector<Authorship>> by_node_;  // sorted by year
  std::vector<std::vector<NodeId>> cohort_authors_;  // per paper, unique
};

enum class Split : std::uint8_t { kNone = 0, kTrain = 1, kVal = 2, kTest = 3 };

struct SplitMasks {
  int t0 = 0;
  int tf = 0;
  int first_test_year = 0;   // test = hires in [first_test_year, tf]
  double p_train = 0.8;
  std::uint64_t seed = 0;
  std::vector<Split> assignment;  // per node; kNone outside V_hire
  std::vector<int> hire_year;     // per node

  std::vector<NodeId> nodes(Split which) const;
  bool operator==(const SplitMasks&) const = default;
};

// Test = hires in the last `test_years` years; every earlier pool year is
// split uniformly at random, round(p_train * n) to train and the rest to
// validation.
SplitMasks temporal_split(const NodePartition& partition, std::uint64_t seed, double p_train = 0.8,
                          int test_years = 3);

struct YearMasks {
  int year = 0;
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> val;
  std::vector<std::uint8_t> test;
};

// train/val: members hired in [t - w, t - 1]; test: members hired in t.
YearMasks year_masks(const SplitMasks& splits, int t, int window);

std::size_t mask_count(std::span<const std::uint8_t> mask);

// Binary tensor export (float64 little-endian, node-feature-year order) with
// a JSON sidecar.
void write_tensor(const FeatureTensor& tensor, const std::filesystem::path& bin_path);
FeatureTensor read_tensor(const std::filesystem::path& bin_path);

// Rows node_id,year,mask_kind,value for every node, year in [t0, tf] and
// kind in {train, val, test}.
void write_masks_csv(const SplitMasks& splits, int window, const std::filesystem::path& path);
void write_splits_csv(const SplitMasks& splits, const std::filesystem::path& path);
SplitMasks read_splits_csv(const std::filesystem::path& path, int t0, int tf, int first_test_year);

}  // namespace facplace
