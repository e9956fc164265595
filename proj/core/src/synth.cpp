#include "facplace/synth.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"
#include "facplace/rng.hpp"

namespace facplace {

namespace {

constexpr const char* kFirst[] = {
    "Avery", "Blake", "Casey", "Dana",  "Eli",    "Finley", "Gray",  "Harper", "Indra", "Jules",
    "Kai",   "Lane",  "Milan", "Noor",  "Oakley", "Parker", "Quinn", "Reese",  "Sage",  "Tatum",
    "Uma",   "Vik",   "Wren",  "Xiomara", "Yael", "Zion",   "Ari",   "Bo",     "Cruz",  "Devi"};
constexpr const char* kLast[] = {
    "Abara", "Bianchi", "Chen",    "Dubois", "Eriksen", "Fujita", "Garcia",  "Haddad", "Ivanova", "Jensen",
    "Kowal", "Larsen",  "Moreau",  "Nakano", "Okafor",  "Petrov", "Quiroga", "Rossi",  "Silva",   "Tanaka",
    "Ueda",  "Varga",   "Weiss",   "Xu",     "Yilmaz",  "Zhou",   "Adler",   "Brandt", "Costa",   "Dahl"};
constexpr const char* kSubfields[] = {"ai", "systems", "theory", "interdisciplinary"};
constexpr std::size_t kNames = std::size(kFirst);

struct Person {
  std::string name;
  bool established = false;
  int hire_year = 0;
  int phd_start = 0;
  int phd_rank = 0;
  int hire_rank = 0;  // 0 until hired
  double productivity = 0.0;
  double affinity = 0.0;
  double target = 0.0;  // prestige quantile a student gravitates towards
  std::vector<std::size_t> mentors;
  std::set<std::size_t> coauthors;
  std::size_t papers = 0;
  bool mentor_paper = false;
  double z_phd = 0.0, z_bib = 0.0, z_net = 0.0, score = 0.0;
  std::string subfield;
};

int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  int k = 0;
  double prod = rng.uniform();
  while (prod > limit) {
    ++k;
    prod *= rng.uniform();
  }
  return k;
}

// Department ranks of n hiring slots, best first. The cumulative share of
// slots at rank <= r is (r / D)^a, calibrated so rank <= K holds the target
// share.
std::vector<int> ladder(std::size_t n, const SynthConfig& c) {
  const double d = static_cast<double>(c.n_departments);
  const double a = std::log(c.target_prevalence) / std::log(c.calibration_k / d);
  std::vector<int> ranks;
  ranks.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double q = (static_cast<double>(s) + 0.5) / static_cast<double>(n);
    int r = static_cast<int>(std::ceil(d * std::pow(q, 1.0 / a) - 1e-9));
    ranks.push_back(std::clamp(r, 1, static_cast<int>(c.n_departments)));
  }
  return ranks;
}

std::size_t pick_weighted(Rng& rng, const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if ((u -= w[i]) < 0.0) return i;
  }
  return w.size() - 1;
}

void standardize(std::vector<double>& v) {
  if (v.empty()) return;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 1e-12 ? (x - m) / sd : 0.0;
}

class Generator {
 public:
  explicit Generator(const SynthConfig& c) : c_(c), rng_(make_stream(c.seed, "synth")) {}

  SynthOutput run();

 private:
  bool is_faculty(const Person& p, int year) const { return p.hire_rank > 0 && p.hire_year <= year; }
  double quantile(int rank) const { return static_cast<double>(rank) / static_cast<double>(c_.n_departments); }

  void make_people();
  void hire_cohort(int year);
  void choose_mentors(std::size_t s, int year);
  std::size_t pick_faculty(int year, double target, const std::vector<std::size_t>& exclude);
  void add_paper(int year, std::vector<std::size_t> cohort_authors);
  void papers_for_year(int year);

  const SynthConfig& c_;
  Rng rng_;
  std::vector<Person> people_;
  std::vector<std::string> departments_;  // index rank-1
  std::vector<std::string> external_names_;
  std::vector<std::pair<int, std::vector<std::string>>> papers_;  // year, author names
};

void Generator::make_people() {
  const std::size_t n = c_.n_researchers;
  // Distinct "First X. Last" names; external authors never carry a middle
  // initial, so they cannot collide with the cohort.
  std::vector<std::size_t> name_ids(kNames * kNames * 26);
  std::iota(name_ids.begin(), name_ids.end(), 0);
  rng_.shuffle(name_ids);
  people_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = name_ids[i];
    people_[i].name = fmt::format("{} {}. {}", kFirst[id % kNames], static_cast<char>('A' + (id / kNames) % 26),
                                  kLast[id / (kNames * 26)]);
    people_[i].subfield = kSubfields[rng_.below(std::size(kSubfields))];
  }
  for (std::size_t i = 0; i < kNames * kNames; ++i) {
    external_names_.push_back(fmt::format("{} {}", kFirst[i % kNames], kLast[i / kNames]));
  }

  std::vector<std::size_t> dept_ids(c_.n_departments);
  std::iota(dept_ids.begin(), dept_ids.end(), 1);
  rng_.shuffle(dept_ids);
  for (std::size_t r = 0; r < c_.n_departments; ++r) departments_.push_back(fmt::format("University {:03d}", dept_ids[r]));

  const auto n_est = static_cast<std::size_t>(std::lround(c_.established_fraction * static_cast<double>(n)));
  const int span = c_.tf - c_.t0 + 1;
  const double d = static_cast<double>(c_.n_departments);

  // Established faculty: ladder ranks, PhD rank close to their own rank.
  std::vector<int> est_ranks = ladder(n_est, c_);
  rng_.shuffle(est_ranks);
  for (std::size_t i = 0; i < n_est; ++i) {
    Person& p = people_[i];
    p.established = true;
    p.hire_year = c_.t0 - 1 - static_cast<int>(rng_.below(25));
    p.hire_rank = est_ranks[i];
    p.phd_rank = std::clamp(static_cast<int>(std::lround(p.hire_rank + c_.faculty_rank_noise * d * rng_.normal())), 1,
                            static_cast<int>(c_.n_departments));
    p.productivity = rng_.normal() - 0.8 * (quantile(p.hire_rank) - 0.5);
  }

  // Hires spread evenly over the window; each year's PhD ranks are a
  // permutation of that year's hiring ladder.
  std::vector<std::vector<std::size_t>> by_year(static_cast<std::size_t>(span));
  for (std::size_t i = n_est; i < n; ++i) by_year[(i - n_est) % static_cast<std::size_t>(span)].push_back(i);
  for (int k = 0; k < span; ++k) {
    auto& hires = by_year[static_cast<std::size_t>(k)];
    std::vector<int> phd = ladder(hires.size(), c_);
    std::vector<std::size_t> per_dept(c_.n_departments + 1, 0);
    for (int r : phd) {
      if (++per_dept[static_cast<std::size_t>(r)] > c_.department_capacity) {
        throw ConfigError(fmt::format("synth: {} hires in {} exceed capacity {} at department rank {}", hires.size(),
                                      c_.t0 + k, c_.department_capacity, r));
      }
    }
    rng_.shuffle(phd);
    for (std::size_t j = 0; j < hires.size(); ++j) {
      Person& p = people_[hires[j]];
      p.hire_year = c_.t0 + k;
      p.phd_start = p.hire_year - 4 - static_cast<int>(rng_.below(3));
      p.phd_rank = phd[j];
      p.productivity = rng_.normal();
      p.affinity = rng_.uniform();
      p.target = c_.phd_affinity * quantile(p.phd_rank) + (1.0 - c_.phd_affinity) * p.affinity;
    }
  }
}

std::size_t Generator::pick_faculty(int year, double target, const std::vector<std::size_t>& exclude) {
  std::vector<std::size_t> ids;
  std::vector<double> w;
  for (std::size_t f = 0; f < people_.size(); ++f) {
    const Person& p = people_[f];
    if (!is_faculty(p, year) || std::find(exclude.begin(), exclude.end(), f) != exclude.end()) continue;
    ids.push_back(f);
    w.push_back((1.0 + static_cast<double>(p.papers)) *
                std::exp(-c_.attachment_strength * std::abs(quantile(p.hire_rank) - target)));
  }
  if (ids.empty()) return people_.size();
  return ids[pick_weighted(rng_, w)];
}

void Generator::choose_mentors(std::size_t s, int year) {
  Person& p = people_[s];
  const std::size_t m = 1 + rng_.below(2);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t f = pick_faculty(year, p.target, p.mentors);
    if (f < people_.size()) p.mentors.push_back(f);
  }
  if (p.mentors.empty()) throw ConfigError("synth: no faculty available to mentor students");
}

void Generator::add_paper(int year, std::vector<std::size_t> cohort_authors) {
  std::vector<std::string> names;
  for (std::size_t a : cohort_authors) {
    names.push_back(people_[a].name);
    ++people_[a].papers;
    for (std::size_t b : cohort_authors) {
      if (a != b) people_[a].coauthors.insert(b);
    }
  }
  const int n_ext = poisson(rng_, c_.external_rate);
  for (int e = 0; e < n_ext; ++e) {
    // Externals go after the lead author, in random positions.
    const std::size_t pos = 1 + rng_.below(names.size());
    names.insert(names.begin() + static_cast<std::ptrdiff_t>(pos), external_names_[rng_.below(external_names_.size())]);
  }
  papers_.emplace_back(year, std::move(names));
}

void Generator::papers_for_year(int year) {
  const double spread = c_.productivity_spread;
  for (std::size_t i = 0; i < people_.size(); ++i) {
    Person& p = people_[i];
    const bool student = !p.established && year >= p.phd_start && year < p.hire_year;
    if (student) {
      const double rate = c_.student_rate * std::exp(spread * p.productivity - 0.5 * spread * spread);
      int k = poisson(rng_, rate);
      if (k == 0 && year == p.hire_year - 1 && !p.mentor_paper) k = 1;
      for (int j = 0; j < k; ++j) {
        std::vector<std::size_t> authors{i, p.mentors[rng_.below(p.mentors.size())]};
        if (p.mentors.size() > 1 && rng_.bernoulli(0.3)) {
          for (std::size_t m : p.mentors) {
            if (std::find(authors.begin(), authors.end(), m) == authors.end()) authors.push_back(m);
          }
        }
        p.mentor_paper = true;
        add_paper(year, std::move(authors));
      }
    } else if (is_faculty(p, year)) {
      const double rate = c_.faculty_rate * std::exp(spread * p.productivity - 0.5 * spread * spread);
      const int k = poisson(rng_, rate);
      for (int j = 0; j < k; ++j) {
        std::vector<std::size_t> authors{i};
        if (rng_.bernoulli(0.5)) {
          const std::size_t f = pick_faculty(year, quantile(p.hire_rank), authors);
          if (f < people_.size()) authors.push_back(f);
        }
        if (!p.established && !p.mentors.empty() && rng_.bernoulli(0.25)) {
          const std::size_t m = p.mentors[rng_.below(p.mentors.size())];
          if (std::find(authors.begin(), authors.end(), m) == authors.end()) authors.push_back(m);
        }
        add_paper(year, std::move(authors));
      }
    }
  }
}

void Generator::hire_cohort(int year) {
  std::vector<std::size_t> hires;
  for (std::size_t i = 0; i < people_.size(); ++i) {
    if (!people_[i].established && people_[i].hire_year == year) hires.push_back(i);
  }
  if (hires.empty()) return;
  std::vector<double> phd, bib, net;
  for (std::size_t h : hires) {
    const Person& p = people_[h];
    phd.push_back(-static_cast<double>(p.phd_rank));
    bib.push_back(static_cast<double>(p.papers));
    // Mean rank of co-authors already on faculty before the hire year.
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t co : p.coauthors) {
      if (is_faculty(people_[co], year - 1)) {
        total += people_[co].hire_rank;
        ++count;
      }
    }
    net.push_back(count > 0 ? -std::log(total / static_cast<double>(count)) : std::numeric_limits<double>::quiet_NaN());
  }
  double worst = std::numeric_limits<double>::infinity();
  for (double v : net) {
    if (!std::isnan(v)) worst = std::min(worst, v);
  }
  for (double& v : net) {
    if (std::isnan(v)) v = std::isfinite(worst) ? worst : 0.0;
  }
  standardize(phd);
  standardize(bib);
  standardize(net);
  const double tau = c_.noise / (1.0 - c_.noise);
  std::vector<double> key(hires.size());
  for (std::size_t j = 0; j < hires.size(); ++j) {
    Person& p = people_[hires[j]];
    p.z_phd = phd[j];
    p.z_bib = bib[j];
    p.z_net = net[j];
    p.score = c_.w_phd * phd[j] + c_.w_bib * bib[j] + c_.w_net * net[j];
    // Gumbel-perturbed sort = sequential softmax (Plackett-Luce) draws.
    key[j] = p.score + tau * rng_.gumbel();
  }
  std::vector<std::size_t> order(hires.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  const std::vector<int> slots = ladder(hires.size(), c_);
  for (std::size_t s = 0; s < order.size(); ++s) people_[hires[order[s]]].hire_rank = slots[s];
}

SynthOutput Generator::run() {
  make_people();
  const int start = c_.t0 - c_.history_years;
  for (int year = start; year <= c_.tf; ++year) {
    if (year >= c_.t0) hire_cohort(year);
    for (std::size_t i = 0; i < people_.size(); ++i) {
      if (!people_[i].established && people_[i].phd_start == year) choose_mentors(i, year);
    }
    papers_for_year(year);
  }

  SynthOutput out;
  out.publications_csv = "paper_id,year,authors\n";
  for (std::size_t k = 0; k < papers_.size(); ++k) {
    std::string authors;
    for (const auto& a : papers_[k].second) authors += (authors.empty() ? "" : "|") + a;
    out.publications_csv += csv::join_row({fmt::format("S{:06d}", k + 1), std::to_string(papers_[k].first), authors}) + '\n';
  }
  out.faculty_csv = "full_name,university,hire_year,phd_university,subfield\n";
  for (const auto& p : people_) {
    out.faculty_csv += csv::join_row({p.name, departments_[static_cast<std::size_t>(p.hire_rank - 1)],
                                      std::to_string(p.hire_year), departments_[static_cast<std::size_t>(p.phd_rank - 1)],
                                      p.subfield}) +
                       '\n';
  }
  out.rankings_csv = "institution,rank\n";
  for (std::size_t r = 0; r < departments_.size(); ++r) {
    out.rankings_csv += csv::join_row({departments_[r], std::to_string(r + 1)}) + '\n';
  }
  nlohmann::json people = nlohmann::json::array();
  for (const auto& p : people_) {
    nlohmann::json j{{"name", p.name},
                     {"role", p.established ? "established" : "hire"},
                     {"hire_year", p.hire_year},
                     {"hire_rank", p.hire_rank},
                     {"phd_rank", p.phd_rank},
                     {"productivity", p.productivity}};
    if (!p.established) {
      j["affinity"] = p.affinity;
      j["target_quantile"] = p.target;
      j["z_phd"] = p.z_phd;
      j["z_bib"] = p.z_bib;
      j["z_net"] = p.z_net;
      j["score"] = p.score;
    }
    people.push_back(std::move(j));
  }
  out.truth_json = nlohmann::json{{"config", to_json(c_)}, {"researchers", people}}.dump(1) + "\n";
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_researchers < 20) throw ConfigError("synth: n_researchers must be at least 20");
  if (n_departments < 2) throw ConfigError("synth: need at least two departments");
  if (t0 > tf) throw ConfigError(fmt::format("synth: t0 {} after tf {}", t0, tf));
  if (history_years < 6) throw ConfigError("synth: history_years must be at least 6");
  if (!(established_fraction > 0.0 && established_fraction < 1.0)) {
    throw ConfigError("synth: established_fraction outside (0, 1)");
  }
  if (w_phd < 0.0 || w_bib < 0.0 || w_net < 0.0 || w_phd + w_bib + w_net <= 0.0) {
    throw ConfigError("synth: weights must be non-negative with at least one positive");
  }
  if (noise < 0.0 || noise >= 1.0) throw ConfigError(fmt::format("synth: noise {} outside [0, 1)", noise));
  if (!(calibration_k >= 1.0 && calibration_k < static_cast<double>(n_departments))) {
    throw ConfigError("synth: calibration_k must lie in [1, n_departments)");
  }
  if (!(target_prevalence > 0.0 && target_prevalence < 1.0)) {
    throw ConfigError("synth: target_prevalence outside (0, 1)");
  }
  if (student_rate <= 0.0 || faculty_rate <= 0.0 || external_rate < 0.0 || productivity_spread < 0.0 ||
      attachment_strength < 0.0 || phd_affinity < 0.0 || phd_affinity > 1.0 || faculty_rank_noise < 0.0) {
    throw ConfigError("synth: rate and strength parameters out of range");
  }
  if (department_capacity < 1) throw ConfigError("synth: department_capacity must be positive");
}

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  return Generator(config).run();
}

void write_synth(const SynthOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const std::string*> files[] = {{"publications.csv", &out.publications_csv},
                                                              {"faculty.csv", &out.faculty_csv},
                                                              {"rankings.csv", &out.rankings_csv},
                                                              {"truth.json", &out.truth_json}};
  for (const auto& [name, text] : files) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot write '{}'", (dir / name).string()));
    f << *text;
  }
}

PlantedTruth planted_truth(const SynthConfig& config) {
  config.validate();
  PlantedTruth truth;
  const std::vector<std::pair<std::string, double>> sets = {
      {"PhD", config.w_phd},
      {"Bib", config.w_bib},
      {"Co-author", config.w_net},
      {"PhD+Bib", config.w_phd + config.w_bib},
      {"PhD+Co-author", config.w_phd + config.w_net},
      {"Bib+Co-author", config.w_bib + config.w_net},
      {"PhD+Bib+Co-author", config.w_phd + config.w_bib + config.w_net},
  };
  // Beyond this noise level the Gumbel perturbation dominates any unit of
  // standardised signal.
  if (config.noise >= 0.9) {
    truth.reliable = false;
    return truth;
  }
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sets[a].second > sets[b].second; });
  for (std::size_t i : order) truth.ranking.push_back(sets[i].first);
  for (const auto& [a, wa] : sets) {
    for (const auto& [b, wb] : sets) {
      if (wa > wb + 1e-12) truth.better_than.emplace_back(a, b);
    }
  }
  return truth;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_researchers", c.n_researchers},
          {"n_departments", c.n_departments},
          {"t0", c.t0},
          {"tf", c.tf},
          {"history_years", c.history_years},
          {"established_fraction", c.established_fraction},
          {"student_rate", c.student_rate},
          {"faculty_rate", c.faculty_rate},
          {"productivity_spread", c.productivity_spread},
          {"external_rate", c.external_rate},
          {"attachment_strength", c.attachment_strength},
          {"phd_affinity", c.phd_affinity},
          {"faculty_rank_noise", c.faculty_rank_noise},
          {"w_phd", c.w_phd},
          {"w_bib", c.w_bib},
          {"w_net", c.w_net},
          {"noise", c.noise},
          {"calibration_k", c.calibration_k},
          {"target_prevalence", c.target_prevalence},
          {"department_capacity", c.department_capacity},
          {"seed", c.seed}};
}

}  // namespace facplace
