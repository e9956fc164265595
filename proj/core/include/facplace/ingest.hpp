#pragma once

// Parsing, normalization, and record linkage of publication records,
// faculty metadata, and department rankings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace facplace {

using NodeId = std::uint32_t;

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2100;

struct PublicationRecord {
  std::string paper_id;
  int year = 0;
  std::vector<std::string> authors;  // authorship order preserved
};

struct FacultyRecord {
  std::string full_name;
  std::string university;
  std::optional<int> hire_year;
  std::string phd_university;
  std::optional<std::string> subfield;
};

struct RankTable {
  std::map<std::string, int> entries;  // canonical institution -> rank (1 = best)

  std::size_t n_departments() const { return entries.size(); }
  std::optional<int> find(const std::string& institution) const;
};

// raw institution string -> canonical institution string
using AliasMap = std::map<std::string, std::string>;

struct ImputedFlags {
  bool faculty_rank = false;
  bool phd_rank = false;

  bool operator==(const ImputedFlags&) const = default;
};

struct Researcher {
  NodeId node_id = 0;
  std::string canonical_name;
  std::string full_name;
  std::string university;      // canonical institution
  std::string phd_university;  // canonical institution
  int hire_year = 0;
  std::optional<double> faculty_rank;  // absent until imputed when unranked
  std::optional<double> phd_rank;
  ImputedFlags imputed_flags;

  bool operator==(const Researcher&) const = default;
};

struct AuthorSlot {
  std::string name;             // raw author string
  std::optional<NodeId> node;   // nullopt marks an external author

  bool operator==(const AuthorSlot&) const = default;
};

struct LinkedPublication {
  std::string paper_id;
  int year = 0;
  std::vector<AuthorSlot> authors;

  bool operator==(const LinkedPublication&) const = default;
};

struct LinkReport {
  std::size_t publications_read = 0;
  std::size_t publications_kept = 0;
  std::size_t publications_dropped = 0;  // no cohort author
  std::size_t faculty_read = 0;
  std::size_t faculty_excluded_no_hire_year = 0;
  std::size_t faculty_linked = 0;
  std::size_t faculty_rank_missing = 0;
  std::size_t phd_rank_missing = 0;
  std::size_t faculty_rank_imputed = 0;
  std::size_t phd_rank_imputed = 0;
  std::vector<std::string> unranked_institutions;  // sorted, unique

  bool operator==(const LinkReport&) const = default;
};

struct LinkedDataset {
  std::vector<Researcher> researchers;        // index == node_id
  std::vector<LinkedPublication> publications;  // sorted by (year, paper_id)
  LinkReport link_report;

  std::size_t node_count() const { return researchers.size(); }
  bool operator==(const LinkedDataset&) const = default;
};

// Lowercase, diacritics folded, punctuation removed, whitespace collapsed.
// Idempotent.
std::string normalize_name(std::string_view raw);

// Record parsers. Malformed rows throw DataError naming the source and line.
std::vector<PublicationRecord> parse_publications(std::string_view csv_text,
                                                  std::string_view source = "publications");
std::vector<FacultyRecord> parse_faculty(std::string_view csv_text,
                                         std::string_view source = "faculty");
RankTable parse_rankings(std::string_view csv_text, std::string_view source = "rankings");
AliasMap parse_aliases(std::string_view csv_text, std::string_view source = "aliases");

std::vector<PublicationRecord> read_publications(const std::filesystem::path& path);
std::vector<FacultyRecord> read_faculty(const std::filesystem::path& path);
RankTable read_rankings(const std::filesystem::path& path);
AliasMap read_aliases(const std::filesystem::path& path);

// Links the three sources. Faculty without hire years are excluded, author
// names are matched on exact canonical form, and publications with no cohort
// author are dropped. Throws AmbiguousNameError on canonical-name collisions.
LinkedDataset link(const std::vector<PublicationRecord>& pubs,
                   const std::vector<FacultyRecord>& faculty, const RankTable& ranks,
                   const AliasMap& aliases);

// Fills missing faculty/PhD ranks with the mean of the known ranks of the same
// kind across researchers.
LinkedDataset impute_missing_ranks(LinkedDataset dataset);

// Convenience: link followed by imputation.
LinkedDataset link_and_impute(const std::vector<PublicationRecord>& pubs,
                              const std::vector<FacultyRecord>& faculty,
                              const RankTable& ranks, const AliasMap& aliases);

nlohmann::json to_json(const LinkedDataset& dataset);
LinkedDataset linked_dataset_from_json(const nlohmann::json& doc);

void write_linked_dataset(const LinkedDataset& dataset, const std::filesystem::path& path);
LinkedDataset read_linked_dataset(const std::filesystem::path& path);

// Re-emits the linked dataset in the ingest input formats (used to check
// that linking is a fixed point on its own output).
std::string publications_csv(const LinkedDataset& dataset);
std::string faculty_csv(const LinkedDataset& dataset);

// Accessors that throw DataError when a rank has not been imputed yet.
double faculty_rank_of(const Researcher& r);
double phd_rank_of(const Researcher& r);

}  // namespace facplace
