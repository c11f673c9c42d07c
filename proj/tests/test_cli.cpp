#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "nlpl_test_cli";

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const auto p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(NLPL_CLI_PATH) + " " + args + " >" + (kRoot / "stdout.txt").string() + " 2>" +
                          (kRoot / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kKernel = R"("seed": 1, "kernel": {"psi": {"amplitude": 0.5}, "map": {"matrix": [[2]]}})";

}  // namespace

TEST_CASE("successful runs exit 0 and are reproducible") {
  fs::remove_all(kRoot);
  const auto cfg = write_config("min.json", "{" + kKernel + R"(, "minimizers": {"n_list": [1, 4], "mc_samples": 50000}})");
  const auto a = kRoot / "a", b = kRoot / "b";
  CHECK(run("minimizers --config " + cfg.string() + " --out " + a.string() + " --seed 5") == 0);
  CHECK(slurp(kRoot / "stdout.txt").find("convergence.csv") != std::string::npos);
  CHECK(run("minimizers --config " + cfg.string() + " --out " + b.string() + " --seed 5 --threads 3 -q") == 0);
  CHECK(slurp(kRoot / "stdout.txt").empty());
  CHECK(slurp(a / "convergence.csv") == slurp(b / "convergence.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
}

TEST_CASE("configuration problems exit 2") {
  const auto unknown = write_config("unknown.json", "{" + kKernel + R"(, "pinf": {"epsilon": [0.5]}})");
  CHECK(run("pinf --config " + unknown.string() + " --out " + (kRoot / "x").string()) == 2);
  CHECK(slurp(kRoot / "stderr.txt").find("epsilon") != std::string::npos);

  const auto singular = write_config(
      "singular.json", R"({"seed": 1, "kernel": {"psi": {"amplitude": 1}, "map": {"matrix": [[1, 1], [1, 1]]}}, "pinf": {}})");
  CHECK(run("pinf --config " + singular.string()) == 2);
  CHECK(run("pinf --config " + (kRoot / "missing.json").string()) == 2);
  CHECK(run("pinf") == 2);
  CHECK(run("transmogrify --config " + unknown.string()) == 2);
  CHECK(run("pinf --config " + unknown.string() + " --threads 0") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("numeric failure exits 3") {
  const auto zero = write_config("zero.json", "{" + kKernel + R"(, "evolve": {"T": 1, "initial": {"type": "zero"},
                                                 "grid": {"half_width": 2, "h": 0.25}}})");
  CHECK(run("evolve --config " + zero.string() + " --out " + (kRoot / "z").string()) == 3);
  CHECK(fs::exists(kRoot / "z" / "trajectory.csv"));
  CHECK(slurp(kRoot / "stderr.txt").find("rejected") != std::string::npos);
}
