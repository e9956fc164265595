#include "facplace/pipeline.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "facplace/csv.hpp"
#include "facplace/error.hpp"
#include "facplace/featurize.hpp"
#include "facplace/ingest.hpp"
#include "facplace/report.hpp"
#include "facplace/rewire.hpp"
#include "facplace/rng.hpp"
#include "facplace/tempgraph.hpp"

namespace facplace {

namespace fs = std::filesystem;

namespace {

// ---- config parsing ---------------------------------------------------------

// Key/value view of one INI section that remembers which keys were read, so
// typos surface as errors instead of silently falling back to defaults.
class Section {
 public:
  Section() = default;
  Section(std::string name, const boost::property_tree::ptree& tree) : name_(std::move(name)) {
    for (const auto& [key, child] : tree) {
      if (!child.empty()) throw ConfigError(fmt::format("config: [{}] {} is not a plain value", name_, key));
      values_[key] = csv::trim(child.data());
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::string str(const std::string& key, std::string fallback) { return take(key).value_or(std::move(fallback)); }

  double real(const std::string& key, double fallback) {
    const auto v = take(key);
    return v ? to_real(key, *v) : fallback;
  }

  long long integer(const std::string& key, long long fallback) {
    const auto v = take(key);
    return v ? to_integer(key, *v) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError(fmt::format("config: [{}] {} = '{}' is not a boolean", name_, key, *v));
  }

  std::vector<std::string> list(const std::string& key, std::vector<std::string> fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    for (const auto& item : csv::split(*v, ',')) {
      std::string t = csv::trim(item);
      if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
  }

  std::vector<double> reals(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : list(key, {})) out.push_back(to_real(key, s));
    return out;
  }

  void check_all_used() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw ConfigError(fmt::format("config: unknown key '{}' in [{}]", key, name_));
    }
  }

 private:
  double to_real(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("config: [{}] {} = '{}' is not a number", name_, key, v));
  }

  long long to_integer(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const long long d = std::stoll(v, &pos);
      if (pos == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("config: [{}] {} = '{}' is not an integer", name_, key, v));
  }

  std::string name_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

void read_training(Section& s, ModelSpec& m) {
  m.layers = static_cast<int>(s.integer("layers", m.layers));
  m.hidden_dim = static_cast<std::size_t>(s.integer("hidden_dim", static_cast<long long>(m.hidden_dim)));
  m.dropout = s.real("dropout", m.dropout);
  m.attention_heads = static_cast<int>(s.integer("attention_heads", m.attention_heads));
  m.window = static_cast<int>(s.integer("window", m.window));
  m.cheb_order = static_cast<int>(s.integer("cheb_order", m.cheb_order));
  m.epochs = static_cast<int>(s.integer("epochs", m.epochs));
  m.learning_rate = s.real("learning_rate", m.learning_rate);
  m.patience = static_cast<int>(s.integer("patience", m.patience));
  m.use_weights = s.boolean("use_weights", m.use_weights);
}

void read_synth(Section& s, SynthConfig& c) {
  c.n_researchers = static_cast<std::size_t>(s.integer("n_researchers", static_cast<long long>(c.n_researchers)));
  c.n_departments = static_cast<std::size_t>(s.integer("n_departments", static_cast<long long>(c.n_departments)));
  c.history_years = static_cast<int>(s.integer("history_years", c.history_years));
  c.established_fraction = s.real("established_fraction", c.established_fraction);
  c.student_rate = s.real("student_rate", c.student_rate);
  c.faculty_rate = s.real("faculty_rate", c.faculty_rate);
  c.productivity_spread = s.real("productivity_spread", c.productivity_spread);
  c.external_rate = s.real("external_rate", c.external_rate);
  c.attachment_strength = s.real("attachment_strength", c.attachment_strength);
  c.phd_affinity = s.real("phd_affinity", c.phd_affinity);
  c.faculty_rank_noise = s.real("faculty_rank_noise", c.faculty_rank_noise);
  c.w_phd = s.real("w_phd", c.w_phd);
  c.w_bib = s.real("w_bib", c.w_bib);
  c.w_net = s.real("w_net", c.w_net);
  c.noise = s.real("noise", c.noise);
  c.calibration_k = s.real("calibration_k", c.calibration_k);
  c.target_prevalence = s.real("target_prevalence", c.target_prevalence);
  c.department_capacity =
      static_cast<std::size_t>(s.integer("department_capacity", static_cast<long long>(c.department_capacity)));
}

std::string slug(const std::string& label) {
  std::string out = label;
  for (char& ch : out) {
    if (ch == '+') ch = '_';
  }
  return out;
}

std::string cell_id(const ModelSpec& spec, double k, int run) {
  return fmt::format("{}__{}__K{:g}__r{}", model_kind_name(spec.kind), slug(feature_set_label(spec)), k, run);
}

std::uint64_t run_seed(const RunConfig& c, int run) {
  return derive_seed(c.seed, "run", static_cast<std::uint64_t>(run));
}

void note(const RunConfig&, const std::string& msg) { fmt::print(stderr, "{}\n", msg); }

// Re-raises the active exception with the stage (and cell) prepended while
// keeping its exit code.
[[noreturn]] void rethrow_in(const std::string& context) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", context, e.what()));
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError(fmt::format("{}: {}", context, e.what()));
  }
}

template <typename F>
void in_stage(const std::string& stage, F&& f) {
  try {
    f();
  } catch (...) {
    rethrow_in(stage);
  }
}

// ---- artifacts ---------------------------------------------------------------

struct Artifacts {
  LinkedDataset dataset;
  SnapshotSequence sequence;
  FeatureTensor phd, bib, ones;
  SplitMasks splits;
};

fs::path features_dir(const RunConfig& c) { return c.out / "features"; }

Artifacts load_artifacts(const RunConfig& c) {
  Artifacts a;
  a.dataset = read_linked_dataset(c.out / "linked.json");
  a.sequence = read_sequence(c.out / "snapshots");
  a.phd = read_tensor(features_dir(c) / "X_PhD.bin");
  a.bib = read_tensor(features_dir(c) / "X_Bib.bin");
  a.ones = read_tensor(features_dir(c) / "X_ONES.bin");
  a.splits = read_splits_csv(features_dir(c) / "splits.csv", c.t0, c.tf, c.first_test_year());
  return a;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write '{}'", path.string()));
  f << text;
}

void write_history(const TrainResult& result, const fs::path& path) {
  std::string text = "stage,epoch,train_loss,val_loss\n";
  for (const auto& m : result.models) {
    for (const auto& e : m.history) {
      text += fmt::format("{},{},{:.17g},{:.17g}\n", m.stage, e.epoch, e.train_loss, e.val_loss);
    }
  }
  write_text(path, text);
}

void run_cell(const Cell& cell, const ModelInputs& in, const RunConfig& c) {
  const fs::path dir = c.out / cell.dir;
  fs::create_directories(dir);
  nlohmann::json spec = to_json(cell.spec);
  spec["id"] = cell.id;
  spec["K"] = cell.k;
  spec["run"] = cell.run;
  if (cell.p >= 0) {
    spec["p"] = cell.p;
    spec["replicate"] = cell.replicate;
  }
  write_text(dir / "spec.json", spec.dump(1) + "\n");
  const TrainResult result = train_model(cell.spec, in);
  if (!result.models.empty()) {
    write_history(result, dir / "metrics.csv");
    for (const auto& m : result.models) {
      std::vector<const Parameter*> params;
      for (const auto& p : m.parameters) params.push_back(&p);
      save_checkpoint(params, dir / fmt::format("params_{}.bin", m.stage));
    }
  }
  write_scores_csv(result.scores, dir / "scores.csv");
}

// Runs cells on `workers` threads. Errors are rethrown for the first failing
// cell in plan order, so the reported failure does not depend on timing.
void run_cells(const std::vector<Cell>& cells, const RunConfig& c, const std::string& stage,
               const std::function<ModelInputs(const Cell&)>& inputs_for) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(worker_count(c), cells.size()));
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= cells.size() || failed) return;
      try {
        run_cell(cells[i], inputs_for(cells[i]), c);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
      const std::size_t n = ++done;
      std::lock_guard lock(log_mutex);
      note(c, fmt::format("[{}] {}/{} {}", stage, n, cells.size(), cells[i].id));
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (...) {
      rethrow_in(fmt::format("cell {}", cells[i].id));
    }
  }
}

std::map<double, LabelVector> labels_for(const LinkedDataset& ds, const std::vector<double>& thresholds) {
  std::map<double, LabelVector> out;
  for (double k : thresholds) out.emplace(k, assign_labels(ds, k));
  return out;
}

nlohmann::json cell_json(const Cell& cell) {
  nlohmann::json j{{"id", cell.id},
                   {"model", model_kind_name(cell.spec.kind)},
                   {"feature_set", feature_set_label(cell.spec)},
                   {"K", cell.k},
                   {"run", cell.run},
                   {"dir", cell.dir.generic_string()}};
  if (cell.p >= 0) {
    j["p"] = cell.p;
    j["replicate"] = cell.replicate;
  }
  return j;
}

std::vector<RewirePlan> rewire_plans(const RunConfig& c) {
  std::vector<RewirePlan> plans;
  for (int p : c.rewire.p) {
    for (int rep = 0; rep < c.rewire.replicates; ++rep) {
      RewirePlan plan;
      plan.p = p;
      plan.seed = derive_seed(c.seed, "rewire");
      plan.replicate = rep;
      plan.max_attempt_factor = c.rewire.max_attempt_factor;
      plan.forbid_cumulative = c.rewire.forbid_cumulative;
      plan.random_orientation = c.rewire.random_orientation;
      plans.push_back(plan);
    }
  }
  return plans;
}

}  // namespace

// ---- config -----------------------------------------------------------------

std::vector<FeatureKind> parse_feature_set(const std::string& label, ModelKind kind) {
  std::vector<FeatureKind> out;
  bool coauthor = false;
  for (const auto& raw : csv::split(label, '+')) {
    const std::string part = csv::trim(raw);
    if (part == "PhD") {
      out.push_back(FeatureKind::kPhd);
    } else if (part == "Bib") {
      out.push_back(FeatureKind::kBib);
    } else if (part == "Co-author") {
      coauthor = true;
    } else {
      throw ConfigError(fmt::format("config: unknown feature '{}' in '{}'", part, label));
    }
  }
  if (coauthor != uses_graph(kind)) {
    throw ConfigError(fmt::format("config: feature set '{}' {} Co-author for model {}", label,
                                  coauthor ? "cannot use" : "must include", model_kind_name(kind)));
  }
  if (out.empty()) out.push_back(FeatureKind::kOnes);
  return out;
}

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir, std::optional<std::uint64_t> seed) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config: {} (line {})", e.message(), e.line()));
  }
  std::map<std::string, Section> sections;
  for (const auto& [name, child] : tree) {
    if (child.empty() && !child.data().empty()) {
      throw ConfigError(fmt::format("config: key '{}' outside any section", name));
    }
    sections.emplace(name, Section(name, child));
  }
  const std::set<std::string> known = {"run", "data", "synth", "training", "grid", "rewire"};
  for (const auto& [name, s] : sections) {
    if (!known.count(name) && name.rfind("model.", 0) != 0) {
      throw ConfigError(fmt::format("config: unknown section [{}]", name));
    }
  }
  auto section = [&](const std::string& name) -> Section& { return sections[name]; };

  RunConfig c;
  c.source_text = std::string(text);
  Section& run = section("run");
  c.seed = static_cast<std::uint64_t>(run.integer("seed", static_cast<long long>(c.seed)));
  if (seed) c.seed = *seed;
  const fs::path out = run.str("out", c.out.string());
  c.out = out.is_absolute() ? out : base_dir / out;
  c.t0 = static_cast<int>(run.integer("t0", c.t0));
  c.tf = static_cast<int>(run.integer("tf", c.tf));
  c.thresholds = run.reals("thresholds", c.thresholds);
  c.n_repeats = static_cast<int>(run.integer("n_repeats", c.n_repeats));
  c.test_years = static_cast<int>(run.integer("test_years", c.test_years));
  c.p_train = run.real("p_train", c.p_train);
  c.workers = static_cast<std::size_t>(run.integer("workers", static_cast<long long>(c.workers)));

  Section& data = section("data");
  const std::string source = data.str("source", sections.count("synth") ? "synth" : "files");
  if (source != "synth" && source != "files") {
    throw ConfigError(fmt::format("config: [data] source must be synth or files, got '{}'", source));
  }
  c.use_synth = source == "synth";
  auto path_of = [&](const std::string& key) -> fs::path {
    const auto v = data.take(key);
    if (!v || v->empty()) return {};
    const fs::path p = *v;
    return p.is_absolute() ? p : base_dir / p;
  };
  c.publications = path_of("publications");
  c.faculty = path_of("faculty");
  c.rankings = path_of("rankings");
  c.aliases = path_of("aliases");

  Section& synth = section("synth");
  c.synth.t0 = c.t0;
  c.synth.tf = c.tf;
  read_synth(synth, c.synth);
  c.synth.seed = synth.has("seed") ? static_cast<std::uint64_t>(synth.integer("seed", 0)) : derive_seed(c.seed, "synth");

  ModelSpec base;
  read_training(section("training"), base);

  Section& grid = section("grid");
  const auto heuristics = grid.list("heuristics", {"random", "phd_rank", "avg_coauthor_rank"});
  const auto tabular = grid.list("tabular", {"logreg", "mlp"});
  const auto tabular_sets = grid.list("tabular_features", {"PhD", "Bib", "PhD+Bib"});
  const auto graph = grid.list("graph", {"gcn", "gat", "sage", "gconvgru"});
  const auto graph_sets =
      grid.list("graph_features", {"Co-author", "PhD+Co-author", "Bib+Co-author", "PhD+Bib+Co-author"});

  auto spec_for = [&](const std::string& model) {
    ModelSpec m = base;
    m.kind = parse_model_kind(model);
    const std::string name = "model." + model;
    if (sections.count(name)) read_training(sections[name], m);
    return m;
  };
  for (const auto& h : heuristics) {
    ModelSpec m = spec_for(h);
    if (!is_heuristic(m.kind)) throw ConfigError(fmt::format("config: '{}' is not a heuristic", h));
    c.grid.push_back(m);
  }
  for (const auto& model : tabular) {
    for (const auto& set : tabular_sets) {
      ModelSpec m = spec_for(model);
      if (!is_tabular(m.kind)) throw ConfigError(fmt::format("config: '{}' is not a tabular model", model));
      m.features = parse_feature_set(set, m.kind);
      c.grid.push_back(m);
    }
  }
  for (const auto& model : graph) {
    for (const auto& set : graph_sets) {
      ModelSpec m = spec_for(model);
      if (!uses_graph(m.kind)) throw ConfigError(fmt::format("config: '{}' is not a graph model", model));
      m.features = parse_feature_set(set, m.kind);
      c.grid.push_back(m);
    }
  }

  Section& rw = section("rewire");
  for (double p : rw.reals("p", {})) c.rewire.p.push_back(static_cast<int>(p));
  c.rewire.replicates = static_cast<int>(rw.integer("replicates", c.rewire.replicates));
  c.rewire.runs = static_cast<int>(rw.integer("runs", c.rewire.runs));
  c.rewire.threshold = rw.real("threshold", c.rewire.threshold);
  c.rewire.max_attempt_factor = rw.real("max_attempt_factor", c.rewire.max_attempt_factor);
  c.rewire.forbid_cumulative = rw.boolean("forbid_cumulative", c.rewire.forbid_cumulative);
  c.rewire.random_orientation = rw.boolean("random_orientation", c.rewire.random_orientation);
  const auto rw_models = rw.list("models", {"gcn"});
  const auto rw_sets = rw.list("features", {"PhD+Co-author"});
  if (!c.rewire.p.empty()) {
    for (const auto& model : rw_models) {
      for (const auto& set : rw_sets) {
        ModelSpec m = spec_for(model);
        if (!is_heuristic(m.kind)) m.features = parse_feature_set(set, m.kind);
        c.rewire.models.push_back(m);
      }
    }
  }

  for (auto& [name, s] : sections) s.check_all_used();
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path(), seed);
}

void RunConfig::validate() const {
  if (t0 >= tf) throw ConfigError(fmt::format("config: t0 {} must precede tf {}", t0, tf));
  if (thresholds.empty()) throw ConfigError("config: no thresholds");
  for (double k : thresholds) {
    if (!(k >= 1.0)) throw ConfigError(fmt::format("config: threshold {} must be at least 1", k));
  }
  if (n_repeats < 1) throw ConfigError("config: n_repeats must be at least 1");
  if (test_years < 1 || test_years >= tf - t0 + 1) throw ConfigError("config: test_years must leave a training pool");
  if (!(p_train > 0.0 && p_train < 1.0)) throw ConfigError("config: p_train outside (0, 1)");
  if (workers < 1) throw ConfigError("config: workers must be at least 1");
  if (use_synth) {
    synth.validate();
  } else if (publications.empty() || faculty.empty() || rankings.empty()) {
    throw ConfigError("config: [data] needs publications, faculty and rankings paths");
  }
  if (grid.empty()) throw ConfigError("config: empty model grid");
  for (const auto& m : grid) m.validate();
  if (!rewire.p.empty()) {
    for (int p : rewire.p) {
      if (p < 0 || p > 100) throw ConfigError(fmt::format("config: rewire p={} outside [0, 100]", p));
    }
    if (rewire.replicates < 1 || rewire.runs < 1) throw ConfigError("config: rewire replicates and runs must be positive");
    for (const auto& m : rewire.models) m.validate();
  }
}

nlohmann::json to_json(const ModelSpec& s) {
  nlohmann::json features = nlohmann::json::array();
  for (FeatureKind f : s.features) features.push_back(feature_kind_name(f));
  return {{"model", model_kind_name(s.kind)},
          {"feature_set", feature_set_label(s)},
          {"features", features},
          {"layers", s.layers},
          {"hidden_dim", s.hidden_dim},
          {"dropout", s.dropout},
          {"attention_heads", s.attention_heads},
          {"window", s.window},
          {"cheb_order", s.cheb_order},
          {"epochs", s.epochs},
          {"learning_rate", s.learning_rate},
          {"patience", s.patience},
          {"use_weights", s.use_weights},
          {"seed", s.seed}};
}

std::vector<Cell> plan_cells(const RunConfig& c) {
  std::vector<Cell> cells;
  for (double k : c.thresholds) {
    for (const auto& base : c.grid) {
      for (int run = 0; run < c.n_repeats; ++run) {
        Cell cell;
        cell.spec = base;
        cell.spec.seed = run_seed(c, run);
        cell.k = k;
        cell.run = run;
        cell.id = cell_id(base, k, run);
        cell.dir = fs::path("runs") / cell.id;
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::vector<Cell> plan_rewire_cells(const RunConfig& c) {
  std::vector<Cell> cells;
  if (!c.rewire.enabled()) return cells;
  for (const auto& plan : rewire_plans(c)) {
    for (const auto& base : c.rewire.models) {
      for (int run = 0; run < c.rewire.runs; ++run) {
        Cell cell;
        cell.spec = base;
        cell.spec.seed = run_seed(c, run);
        cell.k = c.rewire.threshold;
        cell.run = run;
        cell.p = plan.p;
        cell.replicate = plan.replicate;
        cell.id = cell_id(base, cell.k, run);
        cell.dir = fs::path("runs") / "rewire" / fmt::format("p={}", plan.p) / fmt::format("rep={}", plan.replicate) / cell.id;
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::size_t worker_count(const RunConfig& c) {
  if (const char* env = std::getenv("FACPLACE_WORKERS"); env && *env) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("FACPLACE_WORKERS='{}' is not a positive integer", env));
  }
  return c.workers;
}

// ---- stages -----------------------------------------------------------------

void stage_synth(const RunConfig& c) {
  in_stage("synth", [&] {
    if (!c.use_synth) throw ConfigError("the synth stage needs [data] source = synth");
    write_synth(generate(c.synth), c.out / "data");
    note(c, fmt::format("[synth] wrote {}", (c.out / "data").string()));
  });
}

void stage_ingest(const RunConfig& c) {
  in_stage("ingest", [&] {
    const fs::path data = c.out / "data";
    const fs::path pubs = c.use_synth ? data / "publications.csv" : c.publications;
    const fs::path faculty = c.use_synth ? data / "faculty.csv" : c.faculty;
    const fs::path ranks = c.use_synth ? data / "rankings.csv" : c.rankings;
    const AliasMap aliases = (!c.use_synth && !c.aliases.empty()) ? read_aliases(c.aliases) : AliasMap{};
    fs::create_directories(c.out);
    const LinkedDataset ds = link_and_impute(read_publications(pubs), read_faculty(faculty), read_rankings(ranks), aliases);
    write_linked_dataset(ds, c.out / "linked.json");
    note(c, fmt::format("[ingest] {} researchers, {} publications kept, {} dropped", ds.node_count(),
                       ds.link_report.publications_kept, ds.link_report.publications_dropped));
  });
}

void stage_build(const RunConfig& c) {
  in_stage("build", [&] {
    const LinkedDataset ds = read_linked_dataset(c.out / "linked.json");
    write_sequence(build_sequence(ds, c.t0, c.tf), c.out / "snapshots");
    note(c, fmt::format("[build] snapshots {}..{}", c.t0, c.tf));
  });
}

void stage_featurize(const RunConfig& c) {
  in_stage("featurize", [&] {
    const LinkedDataset ds = read_linked_dataset(c.out / "linked.json");
    const fs::path dir = features_dir(c);
    fs::create_directories(dir);
    write_tensor(phd_tensor(ds, c.t0, c.tf), dir / "X_PhD.bin");
    write_tensor(bib_tensor(ds, c.t0, c.tf), dir / "X_Bib.bin");
    write_tensor(ones_tensor(ds.node_count(), c.t0, c.tf), dir / "X_ONES.bin");
    const SplitMasks splits =
        temporal_split(partition_nodes(ds, c.t0, c.tf), derive_seed(c.seed, "split"), c.p_train, c.test_years);
    write_splits_csv(splits, dir / "splits.csv");
    write_masks_csv(splits, 0, dir / "masks.csv");

    std::vector<double> all_k = c.thresholds;
    if (c.rewire.enabled()) all_k.push_back(c.rewire.threshold);
    std::sort(all_k.begin(), all_k.end());
    all_k.erase(std::unique(all_k.begin(), all_k.end()), all_k.end());
    write_labels_csv(ds, all_k, dir / "labels.csv");
    note(c, fmt::format("[featurize] {} train, {} val, {} test", splits.nodes(Split::kTrain).size(),
                       splits.nodes(Split::kVal).size(), splits.nodes(Split::kTest).size()));
  });
}

void write_manifest(const RunConfig& c) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : plan_cells(c)) cells.push_back(cell_json(cell));
  nlohmann::json rewire_cells = nlohmann::json::array();
  for (const auto& cell : plan_rewire_cells(c)) rewire_cells.push_back(cell_json(cell));
  nlohmann::json doc{{"seed", c.seed},
                     {"derived_seeds",
                      {{"split", derive_seed(c.seed, "split")},
                       {"synth", c.use_synth ? nlohmann::json(c.synth.seed) : nlohmann::json()},
                       {"rewire", derive_seed(c.seed, "rewire")}}},
                     {"t0", c.t0},
                     {"tf", c.tf},
                     {"first_test_year", c.first_test_year()},
                     {"thresholds", c.thresholds},
                     {"n_repeats", c.n_repeats},
                     {"p_train", c.p_train},
                     {"data_source", c.use_synth ? "synth" : "files"},
                     {"cells", cells},
                     {"rewire_cells", rewire_cells},
                     {"rewire_threshold", c.rewire.threshold},
                     {"build", {{"version", "0.1.0"}, {"compiler", __VERSION__}, {"cxx_standard", __cplusplus}}},
                     {"config", c.source_text}};
  if (c.use_synth) doc["synth"] = to_json(c.synth);
  fs::create_directories(c.out);
  write_text(c.out / "manifest.json", doc.dump(1) + "\n");
}

void stage_train(const RunConfig& c) {
  in_stage("train", [&] {
    const Artifacts a = load_artifacts(c);
    const auto labels = labels_for(a.dataset, c.thresholds);
    write_manifest(c);
    run_cells(plan_cells(c), c, "train", [&](const Cell& cell) {
      return ModelInputs{&a.dataset, &a.sequence, &a.phd, &a.bib, &a.ones, &labels.at(cell.k), &a.splits};
    });
  });
}

void stage_rewire(const RunConfig& c) {
  in_stage("rewire", [&] {
    if (!c.rewire.enabled()) {
      note(c, "[rewire] no rewiring grid configured");
      return;
    }
    const Artifacts a = load_artifacts(c);
    const auto labels = labels_for(a.dataset, {c.rewire.threshold});
    std::map<std::pair<int, int>, SnapshotSequence> rewired;
    for (const auto& plan : rewire_plans(c)) {
      RewireResult r = rewire_sequence(a.sequence, plan);
      write_rewired(r, plan, rewired_dir(c.out, plan.p, plan.replicate));
      rewired.emplace(std::make_pair(plan.p, plan.replicate), std::move(r.sequence));
    }
    run_cells(plan_rewire_cells(c), c, "rewire", [&](const Cell& cell) {
      return ModelInputs{&a.dataset, &rewired.at({cell.p, cell.replicate}), &a.phd, &a.bib, &a.ones,
                         &labels.at(c.rewire.threshold), &a.splits};
    });
  });
}

void stage_evaluate(const RunConfig& c) {
  in_stage("evaluate", [&] {
    const auto labels = read_labels_csv(features_dir(c) / "labels.csv");
    auto metrics_of = [&](const Cell& cell) {
      const fs::path path = c.out / cell.dir / "scores.csv";
      if (!fs::exists(path)) {
        throw IncompleteRunError(fmt::format("cell {} has no scores file ({})", cell.id, path.string()));
      }
      return score_metrics(read_scores_csv(path), labels.at(cell.k), model_kind_name(cell.spec.kind),
                           feature_set_label(cell.spec), cell.run, cell.k);
    };
    std::vector<MetricRow> rows;
    for (const auto& cell : plan_cells(c)) rows.push_back(metrics_of(cell));
    write_metrics_csv(rows, c.out / "metrics.csv");
    const auto rewire_cells = plan_rewire_cells(c);
    if (!rewire_cells.empty()) {
      std::string text = "p,replicate,model,feature_set,run,K,precision,recall,pr_auc\n";
      for (const auto& cell : rewire_cells) {
        const MetricRow m = metrics_of(cell);
        text += fmt::format("{},{},{},{},{},{:g},{:.17g},{:.17g},{:.17g}\n", cell.p, cell.replicate, m.model,
                            m.feature_set, m.run, m.k, m.precision, m.recall, m.pr_auc);
      }
      write_text(c.out / "rewire_metrics.csv", text);
    }
    note(c, fmt::format("[evaluate] {} metric rows", rows.size()));
  });
}

void run_pipeline(const RunConfig& c) {
  if (c.use_synth) stage_synth(c);
  stage_ingest(c);
  stage_build(c);
  stage_featurize(c);
  stage_train(c);
  stage_rewire(c);
  stage_evaluate(c);
  in_stage("report", [&] { write_report(c.out); });
  note(c, fmt::format("[report] wrote {}", (c.out / "report.txt").string()));
}

}  // namespace facplace
