// facplace: command-line driver for the placement pipeline.

#include <fmt/core.h>

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>

#include "facplace/error.hpp"
#include "facplace/pipeline.hpp"
#include "facplace/report.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

facplace::RunConfig resolve(const Options& o) {
  facplace::RunConfig c = facplace::load_run_config(o.config, o.seed);
  if (!o.out.empty()) c.out = o.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Faculty placement prediction from temporal co-authorship networks"};
  app.require_subcommand(1);
  Options opt;

  using Stage = void (*)(const facplace::RunConfig&);
  const std::pair<const char*, std::pair<const char*, Stage>> stages[] = {
      {"synth", {"Generate a synthetic market into <out>/data", facplace::stage_synth}},
      {"ingest", {"Link publications, faculty and rankings into <out>/linked.json", facplace::stage_ingest}},
      {"build", {"Build yearly co-authorship snapshots", facplace::stage_build}},
      {"featurize", {"Write feature tensors, labels, splits and masks", facplace::stage_featurize}},
      {"train", {"Train and score the model grid", facplace::stage_train}},
      {"rewire", {"Rewire snapshots and score the rewiring grid", facplace::stage_rewire}},
      {"evaluate", {"Compute metrics.csv from the stored scores", facplace::stage_evaluate}},
      {"pipeline", {"Run every stage, then the report", facplace::run_pipeline}},
  };
  Stage chosen = nullptr;
  for (const auto& [name, entry] : stages) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opt.config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Run directory (overrides [run] out)");
    sub->add_option("--seed", opt.seed, "Master seed (overrides [run] seed)");
    sub->callback([&chosen, fn = entry.second] { chosen = fn; });
  }
  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "Re-derive report.txt and report.json from a run directory");
  report->add_option("--out", report_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const facplace::RunReport rep = facplace::write_report(report_dir);
      std::fputs(facplace::render_text(rep).c_str(), stdout);
      return 0;
    }
    chosen(resolve(opt));
    return 0;
  } catch (const facplace::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
