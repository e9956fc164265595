#pragma once

// Synthetic faculty-hiring markets with a planted hiring rule, emitted in
// the ingest CSV formats plus a truth sidecar.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "facplace/ingest.hpp"

namespace facplace {

struct SynthConfig {
  std::size_t n_researchers = 600;
  std::size_t n_departments = 60;
  int t0 = 2010;
  int tf = 2020;
  int history_years = 10;              // publication history before t0
  double established_fraction = 0.4;   // hired before t0
  double student_rate = 0.9;           // mean papers per pre-hire year
  double faculty_rate = 1.2;           // mean lead papers per faculty year
  double productivity_spread = 0.5;    // sd of log productivity
  double external_rate = 1.0;          // mean external co-authors per paper
  double attachment_strength = 6.0;    // pull of students toward mentors near their target prestige
  double phd_affinity = 0.5;           // weight of PhD rank in a student's target prestige
  double faculty_rank_noise = 0.1;     // established faculty: PhD rank = rank + noise
  double w_phd = 0.5;
  double w_bib = 0.3;
  double w_net = 1.0;
  double noise = 0.2;                  // epsilon in [0, 1)
  double calibration_k = 10.0;
  double target_prevalence = 0.22;     // share of hires at rank <= calibration_k
  std::size_t department_capacity = 12;  // max hires per department per year
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthOutput {
  std::string publications_csv;
  std::string faculty_csv;
  std::string rankings_csv;
  std::string truth_json;
};

// Deterministic in the config (including seed).
SynthOutput generate(const SynthConfig& config);

// Writes publications.csv, faculty.csv, rankings.csv and truth.json.
void write_synth(const SynthOutput& out, const std::filesystem::path& dir);

// Feature-set ordering implied by the hiring weights. Each pair (a, b)
// means a is expected to outperform b. Unreliable (and empty) when the
// noise swamps the signal.
struct PlantedTruth {
  bool reliable = true;
  std::vector<std::string> ranking;  // best first, by summed weight
  std::vector<std::pair<std::string, std::string>> better_than;
};

PlantedTruth planted_truth(const SynthConfig& config);

nlohmann::json to_json(const SynthConfig& config);

}  // namespace facplace
