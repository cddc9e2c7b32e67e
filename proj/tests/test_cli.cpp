#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hkt/errors.hpp"
#include "hkt/experiments.hpp"

using namespace hkt;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hkt_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

// Exit status of the CLI; stdout and stderr go to dir/log.txt.
int cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd =
      env + " \"" + std::string(HKT_CLI_PATH) + "\" " + args + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json report(const fs::path& dir) { return json::parse(slurp(dir / "report.json")); }

}  // namespace

TEST_CASE("list-checks contains the documented catalog") {
  const auto dir = scratch("list");
  REQUIRE(cli("list-checks --json", dir) == 0);
  const json cat = json::parse(slurp(dir / "log.txt"));
  std::set<std::string> names;
  for (const auto& e : cat) names.insert(e["name"].get<std::string>());
  CHECK(names.count("thm-4.1-laplacians"));
  CHECK(names.count("ineq-5.1-bg"));
  CHECK(names.size() == cat.size());

  const std::string doc = slurp(fs::path(HKT_SOURCE_DIR) / "docs" / "checks.md");
  std::smatch m;
  REQUIRE(std::regex_search(doc, m, std::regex("The suite has ([0-9]+) checks")));
  CHECK(std::stoul(m[1]) == cat.size());
  std::set<std::string> documented;
  const std::regex row("\\| `([a-z0-9.\\-]+)` \\|");
  for (auto it = std::sregex_iterator(doc.begin(), doc.end(), row); it != std::sregex_iterator(); ++it)
    documented.insert((*it)[1]);
  CHECK(documented == names);
}

TEST_CASE("config schema lists the keys the runner accepts") {
  const json schema = json::parse(slurp(fs::path(HKT_SOURCE_DIR) / "docs" / "config.schema.json"));
  std::set<std::string> documented;
  for (const auto& [k, v] : schema["properties"].items()) documented.insert(k);
  std::set<std::string> accepted;
  const json defaults = ExperimentConfig{}.to_json();
  for (const auto& [k, v] : defaults.items()) accepted.insert(k);
  CHECK(documented == accepted);
  std::set<std::string> kinds;
  for (const auto& e : schema["properties"]["experiment"]["enum"]) kinds.insert(e.get<std::string>());
  CHECK(kinds == std::set<std::string>(experiment_names().begin(), experiment_names().end()));
}

TEST_CASE("identities on the trivial scalar bundle pass") {
  const auto dir = scratch("identities");
  const auto cfg = write_config(dir, R"({"rank": 1, "cutoff": 2, "samples": 5, "structures": 2})");
  CHECK(cli("identities --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 0);
  const json r = report(dir);
  CHECK(r["schema_version"] == kReportSchemaVersion);
  CHECK(r["status"] == "pass");
  CHECK(r["checks"].size() == identity_check_names().size());
  for (const auto& c : r["checks"]) CHECK(c["value"].get<double>() <= 1e-10);
  CHECK_FALSE(r.contains("timestamp"));
  CHECK(json::parse(slurp(dir / "run_info.json")).contains("timestamp"));
}

TEST_CASE("cone experiment agrees with the commutator test") {
  const auto dir = scratch("cone");
  const auto cfg = write_config(dir, R"({"rank": 2, "cutoff": 1, "samples": 60})");
  CHECK(cli("cone --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 0);
  const json r = report(dir);
  CHECK(r["result"]["disagreements"] == 0);
  CHECK(r["result"]["in_cone"].get<int>() > 0);
  CHECK(r["result"]["in_cone"].get<int>() < 60);
}

TEST_CASE("malformed configs exit 1 with ConfigInvalid") {
  const auto dir = scratch("bad");
  for (const std::string text : {R"({"rank": "two"})", R"({"unknown": 1})", R"({"cutoff": -1})", R"({not json)",
                                 R"({"experiment": "flow"})", R"({"connection": {"kind": "mystery"}})",
                                 R"({"params": {"bogus": 1}})"}) {
    const auto cfg = write_config(dir, text);
    CHECK(cli("sl2 --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 1);
    const json r = report(dir);
    CHECK(r["status"] == "error");
    CHECK(r["errors"][0]["kind"] == "ConfigInvalid");
  }
  CHECK(cli("sl2 --config \"" + (dir / "missing.json").string() + "\" --out \"" + dir.string() + "\"", dir) == 1);
  CHECK(cli("no-such-experiment", dir) == 1);
  CHECK(cli("sl2 --tol-scale -1", dir) == 1);
}

TEST_CASE("module errors become structured report entries") {
  const auto dir = scratch("module_error");
  const auto cfg = write_config(dir, R"({"rank": 2, "cutoff": 1, "connection": {"kind": "constant-noncommuting"}})");
  CHECK(cli("tangent --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 1);
  const json r = report(dir);
  CHECK(r["status"] == "error");
  CHECK(r["errors"][0]["kind"] == "HypothesisViolated");
}

TEST_CASE("failed checks exit 2") {
  const auto dir = scratch("bg");
  const auto cfg = write_config(dir, R"({"rank": 1, "samples": 4})");
  CHECK(cli("bg --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 2);
  CHECK(report(dir)["status"] == "fail");
}

TEST_CASE("reports are byte-identical across runs and thread counts") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto cfg = write_config(a, R"({"rank": 1, "samples": 12})");
  CHECK(cli("bg --config \"" + cfg.string() + "\" --seed 5 --out \"" + a.string() + "\"", a, "HKT_THREADS=1") == 2);
  CHECK(cli("bg --config \"" + cfg.string() + "\" --seed 5 --out \"" + b.string() + "\"", b, "HKT_THREADS=4") == 2);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(cli("bg --config \"" + cfg.string() + "\" --seed 6 --out \"" + b.string() + "\"", b) == 2);
  CHECK(slurp(a / "report.json") != slurp(b / "report.json"));
  CHECK(cli("sl2 --out \"" + a.string() + "\"", a, "HKT_THREADS=zero") == 1);
}

TEST_CASE("flow and kuranishi write their extra files") {
  const auto dir = scratch("files");
  const auto cfg = write_config(dir, R"({"rank": 2, "cutoff": 1, "connection": {"kind": "constant-commuting",
      "phases": [[0.25, -0.25], [0.25, -0.25], [0.25, -0.25], [0.25, -0.25]]},
      "params": {"steps": 5}})");
  CHECK(cli("flow --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir) == 2);
  CHECK(slurp(dir / "flow.csv").rfind("step,residual", 0) == 0);
  const auto cfg2 = write_config(dir, R"({"rank": 2, "cutoff": 1,
      "params": {"rho": {"kind": "constant-commuting", "amplitude": 0.1}}})");
  CHECK(cli("kuranishi --config \"" + cfg2.string() + "\" --out \"" + dir.string() + "\"", dir) == 0);
  const json conn = json::parse(slurp(dir / "deformed_connection.json"));
  CHECK(conn["rank"] == 2);
  CHECK(report(dir)["result"]["yang_mills"]["integrability"].get<double>() < 1e-14);
}

TEST_CASE("every emitted check is in the catalog") {
  std::set<std::string> catalog;
  for (const auto& c : check_catalog()) catalog.insert(c.name);
  for (const std::string e : {"identities", "analyze", "bg", "cone", "sl2", "tangent", "pq-table"}) {
    ExperimentConfig cfg;
    cfg.experiment = e;
    cfg.samples = 3;
    cfg.structures = 0;
    cfg.cutoff = 1;
    if (e == "cone") cfg.rank = 2;
    const auto rep = run_experiment(cfg);
    CHECK(rep.errors.empty());
    for (const auto& c : rep.checks) CHECK(catalog.count(c.name));
  }
}
