#include "facplace/ingest.hpp"

#include <fmt/core.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"

namespace facplace {
namespace {

int parse_year(std::string_view text, std::string_view what, std::string_view source,
               std::size_t line) {
  const std::string trimmed = csv::trim(text);
  int value = 0;
  const auto* first = trimmed.data();
  const auto* last = trimmed.data() + trimmed.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (trimmed.empty() || ec != std::errc() || ptr != last) {
    throw DataError(fmt::format("{}:{}: {} '{}' is not an integer", source, line, what, text));
  }
  if (value < kMinYear || value > kMaxYear) {
    throw DataError(fmt::format("{}:{}: {} {} outside [{}, {}]", source, line, what, value,
                                kMinYear, kMaxYear));
  }
  return value;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string canonical_institution(const std::string& raw, const AliasMap& aliases) {
  std::string key = csv::trim(raw);
  const auto it = aliases.find(key);
  return it == aliases.end() ? key : it->second;
}

icu::UnicodeString nfkd(const icu::UnicodeString& text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFKDInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFKD normalizer unavailable");
  icu::UnicodeString out = normalizer->normalize(text, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  return out;
}

}  // namespace

std::optional<int> RankTable::find(const std::string& institution) const {
  const auto it = entries.find(institution);
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::string normalize_name(std::string_view raw) {
  icu::UnicodeString text =
      icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  // Decompose, fold, decompose again: compatibility forms can expand into
  // characters that fold further.
  text = nfkd(text);
  text.foldCase();
  text = nfkd(text);

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < text.length();) {
    const UChar32 c = text.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    const std::uint32_t mask = U_GET_GC_MASK(c);
    if ((mask & (U_GC_L_MASK | U_GC_N_MASK)) == 0) continue;  // marks, punctuation, symbols
    if (pending_space) out.append(static_cast<UChar>(' '));
    pending_space = false;
    out.append(c);
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

std::vector<PublicationRecord> parse_publications(std::string_view csv_text,
                                                  std::string_view source) {
  const csv::Table table = csv::parse(csv_text, source);
  csv::require_header(table, {"paper_id", "year", "authors"}, source);
  std::vector<PublicationRecord> out;
  out.reserve(table.rows.size());
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    PublicationRecord rec;
    rec.paper_id = csv::trim(row.fields[0]);
    if (rec.paper_id.empty()) {
      throw DataError(fmt::format("{}:{}: empty paper_id", source, row.line));
    }
    if (!seen.insert(rec.paper_id).second) {
      throw DataError(fmt::format("{}:{}: duplicate paper_id '{}'", source, row.line, rec.paper_id));
    }
    rec.year = parse_year(row.fields[1], "year", source, row.line);
    for (const auto& name : csv::split(row.fields[2], '|')) {
      std::string author = csv::trim(name);
      if (author.empty()) {
        throw DataError(fmt::format("{}:{}: empty author name in '{}'", source, row.line,
                                    row.fields[2]));
      }
      rec.authors.push_back(std::move(author));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<FacultyRecord> parse_faculty(std::string_view csv_text, std::string_view source) {
  const csv::Table table = csv::parse(csv_text, source);
  csv::require_header(table, {"full_name", "university", "hire_year", "phd_university", "subfield"},
                      source);
  std::vector<FacultyRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    FacultyRecord rec;
    rec.full_name = csv::trim(row.fields[0]);
    if (rec.full_name.empty()) {
      throw DataError(fmt::format("{}:{}: empty full_name", source, row.line));
    }
    rec.university = csv::trim(row.fields[1]);
    if (!csv::trim(row.fields[2]).empty()) {
      rec.hire_year = parse_year(row.fields[2], "hire_year", source, row.line);
    }
    rec.phd_university = csv::trim(row.fields[3]);
    std::string subfield = csv::trim(row.fields[4]);
    if (!subfield.empty()) rec.subfield = std::move(subfield);
    out.push_back(std::move(rec));
  }
  return out;
}

RankTable parse_rankings(std::string_view csv_text, std::string_view source) {
  const csv::Table table = csv::parse(csv_text, source);
  csv::require_header(table, {"institution", "rank"}, source);
  RankTable ranks;
  for (const auto& row : table.rows) {
    std::string name = csv::trim(row.fields[0]);
    const std::string rank_text = csv::trim(row.fields[1]);
    int rank = 0;
    const auto [ptr, ec] = std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
    if (name.empty() || rank_text.empty() || ec != std::errc() ||
        ptr != rank_text.data() + rank_text.size() || rank < 1) {
      throw DataError(fmt::format("{}:{}: invalid ranking row '{}','{}'", source, row.line,
                                  row.fields[0], row.fields[1]));
    }
    if (!ranks.entries.emplace(name, rank).second) {
      throw DataError(fmt::format("{}:{}: duplicate institution '{}'", source, row.line, name));
    }
  }
  return ranks;
}

AliasMap parse_aliases(std::string_view csv_text, std::string_view source) {
  const csv::Table table = csv::parse(csv_text, source);
  csv::require_header(table, {"raw", "canonical"}, source);
  AliasMap aliases;
  for (const auto& row : table.rows) {
    std::string raw = csv::trim(row.fields[0]);
    std::string canonical = csv::trim(row.fields[1]);
    if (raw.empty() || canonical.empty()) {
      throw DataError(fmt::format("{}:{}: empty alias field", source, row.line));
    }
    if (!aliases.emplace(raw, canonical).second) {
      throw DataError(fmt::format("{}:{}: duplicate alias '{}'", source, row.line, raw));
    }
  }
  return aliases;
}

std::vector<PublicationRecord> read_publications(const std::filesystem::path& path) {
  return parse_publications(slurp(path), path.string());
}
std::vector<FacultyRecord> read_faculty(const std::filesystem::path& path) {
  return parse_faculty(slurp(path), path.string());
}
RankTable read_rankings(const std::filesystem::path& path) {
  return parse_rankings(slurp(path), path.string());
}
AliasMap read_aliases(const std::filesystem::path& path) {
  return parse_aliases(slurp(path), path.string());
}

LinkedDataset link(const std::vector<PublicationRecord>& pubs,
                   const std::vector<FacultyRecord>& faculty, const RankTable& ranks,
                   const AliasMap& aliases) {
  LinkedDataset out;
  LinkReport& report = out.link_report;

  RankTable canonical_ranks;
  for (const auto& [name, rank] : ranks.entries) {
    const std::string key = canonical_institution(name, aliases);
    const auto [it, inserted] = canonical_ranks.entries.emplace(key, rank);
    if (!inserted && it->second != rank) {
      throw DataError(fmt::format("rankings: aliases map two ranks ({} and {}) onto '{}'",
                                  it->second, rank, key));
    }
  }

  report.faculty_read = faculty.size();
  struct Candidate {
    std::string canonical;
    const FacultyRecord* record;
  };
  std::vector<Candidate> retained;
  for (const auto& rec : faculty) {
    if (!rec.hire_year) {
      ++report.faculty_excluded_no_hire_year;
      continue;
    }
    std::string canonical = normalize_name(rec.full_name);
    if (canonical.empty()) {
      throw DataError(fmt::format("faculty: name '{}' is empty after normalization", rec.full_name));
    }
    retained.push_back({std::move(canonical), &rec});
  }
  std::stable_sort(retained.begin(), retained.end(),
                   [](const Candidate& a, const Candidate& b) { return a.canonical < b.canonical; });

  std::vector<AmbiguousNameError::Collision> collisions;
  for (std::size_t i = 0; i < retained.size();) {
    std::size_t j = i + 1;
    while (j < retained.size() && retained[j].canonical == retained[i].canonical) ++j;
    if (j - i > 1) {
      AmbiguousNameError::Collision c{retained[i].canonical, {}};
      for (std::size_t k = i; k < j; ++k) c.raw_names.push_back(retained[k].record->full_name);
      collisions.push_back(std::move(c));
    }
    i = j;
  }
  if (!collisions.empty()) {
    std::string msg = "faculty: ambiguous canonical names:";
    for (const auto& c : collisions) {
      msg += fmt::format(" '{}' <-", c.canonical_name);
      for (const auto& raw : c.raw_names) msg += fmt::format(" '{}'", raw);
      msg += ";";
    }
    throw AmbiguousNameError(msg, std::move(collisions));
  }

  std::set<std::string> unranked;
  std::map<std::string, NodeId> by_name;
  out.researchers.reserve(retained.size());
  for (std::size_t i = 0; i < retained.size(); ++i) {
    const FacultyRecord& rec = *retained[i].record;
    Researcher r;
    r.node_id = static_cast<NodeId>(i);
    r.canonical_name = retained[i].canonical;
    r.full_name = rec.full_name;
    r.university = canonical_institution(rec.university, aliases);
    r.phd_university = canonical_institution(rec.phd_university, aliases);
    r.hire_year = *rec.hire_year;
    if (auto rank = canonical_ranks.find(r.university)) {
      r.faculty_rank = *rank;
    } else {
      ++report.faculty_rank_missing;
      unranked.insert(r.university);
    }
    if (auto rank = canonical_ranks.find(r.phd_university)) {
      r.phd_rank = *rank;
    } else {
      ++report.phd_rank_missing;
      unranked.insert(r.phd_university);
    }
    by_name.emplace(r.canonical_name, r.node_id);
    out.researchers.push_back(std::move(r));
  }
  report.faculty_linked = out.researchers.size();
  report.unranked_institutions.assign(unranked.begin(), unranked.end());

  report.publications_read = pubs.size();
  for (const auto& pub : pubs) {
    LinkedPublication linked;
    linked.paper_id = pub.paper_id;
    linked.year = pub.year;
    bool any_cohort = false;
    for (const auto& name : pub.authors) {
      AuthorSlot slot{name, std::nullopt};
      const auto it = by_name.find(normalize_name(name));
      if (it != by_name.end()) {
        slot.node = it->second;
        any_cohort = true;
      }
      linked.authors.push_back(std::move(slot));
    }
    if (!any_cohort) {
      ++report.publications_dropped;
      continue;
    }
    out.publications.push_back(std::move(linked));
  }
  std::stable_sort(out.publications.begin(), out.publications.end(),
                   [](const LinkedPublication& a, const LinkedPublication& b) {
                     if (a.year != b.year) return a.year < b.year;
                     return a.paper_id < b.paper_id;
                   });
  report.publications_kept = out.publications.size();
  return out;
}

LinkedDataset impute_missing_ranks(LinkedDataset dataset) {
  if (dataset.researchers.empty()) {
    throw DataError("impute: researcher list is empty");
  }
  auto impute = [&](std::optional<double> Researcher::*rank, bool ImputedFlags::*flag,
                    std::size_t LinkReport::*counter, const char* kind) {
    double sum = 0.0;
    std::size_t known = 0;
    std::size_t missing = 0;
    for (const auto& r : dataset.researchers) {
      if ((r.*rank).has_value() && !(r.imputed_flags.*flag)) {
        sum += *(r.*rank);
        ++known;
      } else if (!(r.*rank).has_value()) {
        ++missing;
      }
    }
    if (missing == 0) return;
    if (known == 0) {
      throw DataError(fmt::format("impute: no known {} ranks to average", kind));
    }
    const double mean = sum / static_cast<double>(known);
    for (auto& r : dataset.researchers) {
      if (!(r.*rank).has_value()) {
        r.*rank = mean;
        r.imputed_flags.*flag = true;
        ++(dataset.link_report.*counter);
      }
    }
  };
  impute(&Researcher::faculty_rank, &ImputedFlags::faculty_rank, &LinkReport::faculty_rank_imputed,
         "faculty");
  impute(&Researcher::phd_rank, &ImputedFlags::phd_rank, &LinkReport::phd_rank_imputed, "PhD");
  return dataset;
}

LinkedDataset link_and_impute(const std::vector<PublicationRecord>& pubs,
                              const std::vector<FacultyRecord>& faculty, const RankTable& ranks,
                              const AliasMap& aliases) {
  return impute_missing_ranks(link(pubs, faculty, ranks, aliases));
}

double faculty_rank_of(const Researcher& r) {
  if (!r.faculty_rank) {
    throw DataError(fmt::format("researcher '{}' has no faculty rank (run imputation first)",
                                r.canonical_name));
  }
  return *r.faculty_rank;
}

double phd_rank_of(const Researcher& r) {
  if (!r.phd_rank) {
    throw DataError(
        fmt::format("researcher '{}' has no PhD rank (run imputation first)", r.canonical_name));
  }
  return *r.phd_rank;
}

nlohmann::json to_json(const LinkedDataset& dataset) {
  using nlohmann::json;
  json researchers = json::array();
  for (const auto& r : dataset.researchers) {
    researchers.push_back({
        {"node_id", r.node_id},
        {"canonical_name", r.canonical_name},
        {"full_name", r.full_name},
        {"university", r.university},
        {"phd_university", r.phd_university},
        {"hire_year", r.hire_year},
        {"faculty_rank", r.faculty_rank ? json(*r.faculty_rank) : json(nullptr)},
        {"phd_rank", r.phd_rank ? json(*r.phd_rank) : json(nullptr)},
        {"imputed_flags",
         {{"faculty_rank", r.imputed_flags.faculty_rank}, {"phd_rank", r.imputed_flags.phd_rank}}},
    });
  }
  json publications = json::array();
  for (const auto& p : dataset.publications) {
    json authors = json::array();
    for (const auto& a : p.authors) {
      authors.push_back({{"name", a.name}, {"node_id", a.node ? json(*a.node) : json("external")}});
    }
    publications.push_back({{"paper_id", p.paper_id}, {"year", p.year}, {"authors", authors}});
  }
  const LinkReport& rep = dataset.link_report;
  json report = json::array({
      {{"item", "publications_read"}, {"count", rep.publications_read}},
      {{"item", "publications_kept"}, {"count", rep.publications_kept}},
      {{"item", "publications_dropped"}, {"count", rep.publications_dropped}},
      {{"item", "faculty_read"}, {"count", rep.faculty_read}},
      {{"item", "faculty_excluded_no_hire_year"}, {"count", rep.faculty_excluded_no_hire_year}},
      {{"item", "faculty_linked"}, {"count", rep.faculty_linked}},
      {{"item", "faculty_rank_missing"}, {"count", rep.faculty_rank_missing}},
      {{"item", "phd_rank_missing"}, {"count", rep.phd_rank_missing}},
      {{"item", "faculty_rank_imputed"}, {"count", rep.faculty_rank_imputed}},
      {{"item", "phd_rank_imputed"}, {"count", rep.phd_rank_imputed}},
      {{"item", "unranked_institutions"},
       {"count", rep.unranked_institutions.size()},
       {"values", rep.unranked_institutions}},
  });
  return json{{"researchers", researchers}, {"publications", publications}, {"link_report", report}};
}

LinkedDataset linked_dataset_from_json(const nlohmann::json& doc) {
  LinkedDataset out;
  try {
    for (const auto& r : doc.at("researchers")) {
      Researcher res;
      res.node_id = r.at("node_id").get<NodeId>();
      res.canonical_name = r.at("canonical_name").get<std::string>();
      res.full_name = r.at("full_name").get<std::string>();
      res.university = r.at("university").get<std::string>();
      res.phd_university = r.at("phd_university").get<std::string>();
      res.hire_year = r.at("hire_year").get<int>();
      if (!r.at("faculty_rank").is_null()) res.faculty_rank = r.at("faculty_rank").get<double>();
      if (!r.at("phd_rank").is_null()) res.phd_rank = r.at("phd_rank").get<double>();
      res.imputed_flags.faculty_rank = r.at("imputed_flags").at("faculty_rank").get<bool>();
      res.imputed_flags.phd_rank = r.at("imputed_flags").at("phd_rank").get<bool>();
      if (res.node_id != out.researchers.size()) {
        throw DataError("linked dataset: node ids are not dense and ordered");
      }
      out.researchers.push_back(std::move(res));
    }
    for (const auto& p : doc.at("publications")) {
      LinkedPublication pub;
      pub.paper_id = p.at("paper_id").get<std::string>();
      pub.year = p.at("year").get<int>();
      for (const auto& a : p.at("authors")) {
        AuthorSlot slot;
        slot.name = a.at("name").get<std::string>();
        const auto& node = a.at("node_id");
        if (!node.is_string()) {
          slot.node = node.get<NodeId>();
          if (*slot.node >= out.researchers.size()) {
            throw DataError(fmt::format("linked dataset: author node id {} out of range", *slot.node));
          }
        }
        pub.authors.push_back(std::move(slot));
      }
      out.publications.push_back(std::move(pub));
    }
    LinkReport& rep = out.link_report;
    for (const auto& item : doc.at("link_report")) {
      const std::string key = item.at("item").get<std::string>();
      const std::size_t count = item.at("count").get<std::size_t>();
      if (key == "publications_read") rep.publications_read = count;
      else if (key == "publications_kept") rep.publications_kept = count;
      else if (key == "publications_dropped") rep.publications_dropped = count;
      else if (key == "faculty_read") rep.faculty_read = count;
      else if (key == "faculty_excluded_no_hire_year") rep.faculty_excluded_no_hire_year = count;
      else if (key == "faculty_linked") rep.faculty_linked = count;
      else if (key == "faculty_rank_missing") rep.faculty_rank_missing = count;
      else if (key == "phd_rank_missing") rep.phd_rank_missing = count;
      else if (key == "faculty_rank_imputed") rep.faculty_rank_imputed = count;
      else if (key == "phd_rank_imputed") rep.phd_rank_imputed = count;
      else if (key == "unranked_institutions") {
        rep.unranked_institutions = item.at("values").get<std::vector<std::string>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("linked dataset JSON: {}", e.what()));
  }
  return out;
}

void write_linked_dataset(const LinkedDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << to_json(dataset).dump(1) << '\n';
}

LinkedDataset read_linked_dataset(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return linked_dataset_from_json(doc);
}

std::string publications_csv(const LinkedDataset& dataset) {
  std::string out = "paper_id,year,authors\n";
  for (const auto& p : dataset.publications) {
    std::string authors;
    for (std::size_t i = 0; i < p.authors.size(); ++i) {
      if (i) authors.push_back('|');
      authors += p.authors[i].name;
    }
    out += csv::join_row({p.paper_id, std::to_string(p.year), authors}) + "\n";
  }
  return out;
}

std::string faculty_csv(const LinkedDataset& dataset) {
  std::string out = "full_name,university,hire_year,phd_university,subfield\n";
  for (const auto& r : dataset.researchers) {
    out += csv::join_row({r.full_name, r.university, std::to_string(r.hire_year), r.phd_university, ""}) +
           "\n";
  }
  return out;
}

}  // namespace facplace
