#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(RBX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rbx_cli_" + name);
  fs::remove_all(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("successful run writes both outputs") {
  const fs::path out = scratch("micro");
  CHECK(run("microsphere --out " + out.string()) == 0);
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "curves.csv"));
  const json r = read_json(out / "report.json");
  CHECK(r.at("all_passed") == true);
  CHECK(r.at("config").at("params").at("n_theta") == 16);
  fs::remove_all(out);
}

TEST_CASE("config file, repeated seeds and exit codes") {
  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  const fs::path cfg = dir / "poisson.json";
  std::ofstream(cfg) << json{{"experiment", "poisson"}, {"params", {{"noise_sd", 0.0}}}}.dump();
  CHECK(run("poisson --config " + cfg.string() + " --seed 4 --seed 9 --out " + (dir / "o").string()) == 0);
  const json r = read_json(dir / "o" / "report.json");
  CHECK(r.at("config").at("seeds") == json::array({4, 9}));
  CHECK(r.at("config").at("params").at("noise_sd") == 0.0);

  SUBCASE("a failing property gives exit 1") {
    std::ofstream(cfg) << json{{"params", {{"min_win_fraction", 1.01}}}}.dump();
    CHECK(run("poisson --config " + cfg.string() + " --seed 0") == 1);
  }
  SUBCASE("invalid input gives exit 2") {
    std::ofstream(cfg) << json{{"params", {{"unknown", 1}}}}.dump();
    CHECK(run("poisson --config " + cfg.string()) == 2);
    std::ofstream(cfg) << json{{"experiment", "yield"}}.dump();
    CHECK(run("poisson --config " + cfg.string()) == 2);
    std::ofstream(cfg) << "{not json";
    CHECK(run("poisson --config " + cfg.string()) == 2);
    CHECK(run("yield --bins 5000") == 2);
  }
  SUBCASE("argument errors") {
    CHECK(run("bogus") != 0);
    CHECK(run("") != 0);
    CHECK(run("poisson --config /nonexistent/file.json") != 0);
    CHECK(run("--help") == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("bins flag reaches the resolved config") {
  const fs::path out = scratch("bins");
  const fs::path cfg = fs::temp_directory_path() / "rbx_cli_bins.json";
  std::ofstream(cfg) << json{{"params",
                              {{"n_train", 200},
                               {"n_validation", 50},
                               {"test_step", 0.1},
                               {"rb_step", 0.1},
                               {"nets", json::array({json::array({5})})},
                               {"epochs", 5}}}}
                            .dump();
  const int code = run("yield --config " + cfg.string() + " --seed 1 --bins 50 --out " + out.string());
  CHECK((code == 0 || code == 1));
  const json r = read_json(out / "report.json");
  CHECK(r.at("config").at("bins") == 50);
  fs::remove_all(out);
  fs::remove(cfg);
}
