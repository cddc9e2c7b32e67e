#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hkt/errors.hpp"
#include "hkt/experiments.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool allow_truncation = false;
  double tol_scale = 0.0;
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json error_report(const std::string& experiment, const hkt::Error& e) {
  return {{"schema_version", hkt::kReportSchemaVersion},
          {"experiment", experiment},
          {"status", "error"},
          {"checks", json::array()},
          {"errors", json::array({{{"kind", hkt::error_kind_name(e.kind())}, {"message", e.what()}}})}};
}

int run(const std::string& experiment, const Flags& flags) {
  fs::path out_dir = flags.out;
  try {
    json cfg_json = json::object();
    if (!flags.config.empty()) {
      std::ifstream in(flags.config);
      if (!in) throw hkt::Error(hkt::ErrorKind::ConfigInvalid, "cannot open config '" + flags.config + "'");
      try {
        cfg_json = json::parse(in);
      } catch (const json::exception& e) {
        throw hkt::Error(hkt::ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
      }
    }
    hkt::ExperimentConfig cfg = hkt::ExperimentConfig::from_json(cfg_json);
    if (!cfg.experiment.empty() && cfg.experiment != experiment)
      throw hkt::Error(hkt::ErrorKind::ConfigInvalid,
                       "config names experiment '" + cfg.experiment + "' but the subcommand is '" + experiment + "'");
    cfg.experiment = experiment;
    if (flags.seed_set) cfg.seed = flags.seed;
    if (flags.allow_truncation) cfg.allow_truncation = true;
    if (flags.tol_scale > 0.0) cfg.tol_scale = flags.tol_scale;
    const int threads = hkt::thread_count_from_env();

    const hkt::ExperimentReport rep = hkt::run_experiment(cfg, threads);
    fs::create_directories(out_dir);
    write_file(out_dir / "report.json", rep.to_json().dump(2) + "\n");
    for (const auto& a : rep.artifacts) write_file(out_dir / a.file, a.content);
    write_file(out_dir / "run_info.json",
               json{{"timestamp", utc_now()}, {"threads", threads}, {"schema_version", hkt::kReportSchemaVersion}}
                       .dump(2) +
                   "\n");

    std::cout << experiment << ": " << rep.status() << "\n";
    for (const auto& c : rep.checks)
      std::cout << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name << " " << c.value << " " << c.relation
                << " " << c.tolerance << (c.applicable ? "" : " (not applicable)") << "\n";
    for (const auto& e : rep.errors) std::cerr << "error: " << e["message"].get<std::string>() << "\n";
    return rep.exit_code();
  } catch (const hkt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      fs::create_directories(out_dir);
      write_file(out_dir / "report.json", error_report(experiment, e).dump(2) + "\n");
    } catch (const std::exception&) {
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

void list_checks(bool as_json) {
  const auto& cat = hkt::check_catalog();
  if (as_json) {
    json j = json::array();
    for (const auto& c : cat)
      j.push_back({{"name", c.name},
                   {"experiment", c.experiment},
                   {"tolerance", c.tolerance},
                   {"relation", c.relation},
                   {"description", c.description}});
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (const auto& c : cat)
    std::cout << c.name << "\t" << c.experiment << "\t" << c.relation << " " << c.tolerance << "\t" << c.description
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hodge theory and deformation diagnostics for connections on the flat 4-torus"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const auto& name : hkt::experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", flags.config, "JSON config file");
    sub->add_option("--seed", flags.seed, "seed (overrides the config)")->each([&](const std::string&) {
      flags.seed_set = true;
    });
    sub->add_option("--out", flags.out, "output directory");
    sub->add_flag("--allow-truncation", flags.allow_truncation, "allow products past the cutoff");
    sub->add_option("--tol-scale", flags.tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }
  bool as_json = false;
  CLI::App* lc = app.add_subcommand("list-checks", "print the check catalog");
  lc->add_flag("--json", as_json, "print as JSON");
  lc->callback([&chosen] { chosen = "list-checks"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (chosen == "list-checks") {
    list_checks(as_json);
    return 0;
  }
  return run(chosen, flags);
}
