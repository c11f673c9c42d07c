#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlpl/experiments.hpp"

using namespace nlpl;
namespace fs = std::filesystem;

namespace {

const char* kKernel = R"("kernel": {"psi": {"shape": "box", "amplitude": 0.5}, "map": {"matrix": [[2]]}})";

std::string config(const std::string& body, const std::string& kernel = kKernel) {
  return "{\"seed\": 3, " + kernel + (body.empty() ? "" : ", " + body) + "}";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nlpl_test_config_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("kernel section round trip") {
  const auto j = Json::parse(R"({"psi": {"shape": "cone", "amplitude": 2},
                                "map": {"matrix": [[1, 1], [0, 1]],
                                        "blocks": [{"kind": "real", "lambda": 1, "size": 2}],
                                        "conjugation": [[1, 0], [0, 1]]}})");
  const auto spec = kernel_from_json(j);
  CHECK(spec.dimension() == 2);
  CHECK(spec.psi.shape == PsiShape::cone);
  REQUIRE(spec.map.has_blocks());
  CHECK(spec.map.blocks()[0].classification() == BlockClass::unitary_shear_real);
  const auto back = kernel_from_json(kernel_to_json(spec));
  CHECK((back.map.matrix() - spec.map.matrix()).norm() == 0.0);
  CHECK(kernel_from_json(Json::parse(R"({"psi": {"amplitude": 1}, "map": {"matrix": [2, 0, 0, 3]}})")).dimension() == 2);
}

TEST_CASE("strict parsing rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config_text(config("\"eigen\": {\"radius\": 4}")), ConfigError);
  CHECK_THROWS_AS(parse_config_text(config("\"colour\": 1")), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"seed": 0, "kernel": {"psi": {"amplitude": 1, "width": 2}, "map": {"matrix": [[2]]}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("{\"seed\": 1,}"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(config("\"evolve\": {\"p\": 1}")), ConfigError);
  CHECK_THROWS_AS(parse_config_text(config("\"evolve\": {\"scheme\": \"rk4\"}")), ConfigError);
  CHECK_THROWS_AS(parse_config_text(config("\"seed\": -1")), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text(std::string("{") + kKernel + "}"), "seed is required", ConfigError);
  CHECK(parse_config_text(std::string("{") + kKernel + "}", 17).seed == 17);
  try {
    parse_config_text(config("", R"("kernel": {"psi": {"amplitude": 1}, "map": {"matrix": [[1, 2], [2, 4]]}})"));
    FAIL("singular matrix accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("singular") != std::string::npos);
  }
}

TEST_CASE("effective config fills defaults and parses back to itself") {
  const auto cfg = parse_config_text(config("\"eigen\": {}, \"evolve\": {\"p\": 3}"));
  const auto eff = effective_json(cfg);
  CHECK(eff["eigen"]["radii"] == Json::array({4.0, 8.0, 16.0}));
  CHECK(eff["evolve"]["p"] == 3.0);
  CHECK(effective_json(parse_config(eff)) == eff);
}

TEST_CASE("eigen command") {
  const auto dir = scratch("eigen");
  RunOverrides ov;
  ov.out_dir = dir.string();
  const auto rep = run_command("eigen", config(R"("eigen": {"radii": [2, 4], "h": 0.125, "warm_start_n": 0})"), ov);
  CHECK(rep.summary["closed_form"].get<double>() == doctest::Approx(0.171573).epsilon(1e-6));
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(fs::exists(dir / "effective_config.json"));
  CHECK(slurp(dir / "sweep.csv").rfind("R,h,p,lambda_est,iterations,residual\n", 0) == 0);

  const auto ident = run_command(
      "eigen",
      config(R"("eigen": {"radii": [2], "h": 0.25, "measure_tol_quad": false})",
             R"("kernel": {"psi": {"amplitude": 0.5}, "map": {"matrix": [[1]]}})"),
      ov);
  CHECK(ident.summary["closed_form"].get<double>() == 0.0);
}

TEST_CASE("minimizers command: identity map gives a table of zeros") {
  const auto dir = scratch("min");
  RunOverrides ov;
  ov.out_dir = dir.string();
  run_command("minimizers",
              config(R"("minimizers": {"n_list": [1, 10], "mc_samples": 10000})",
                     R"("kernel": {"psi": {"amplitude": 0.5}, "map": {"matrix": [[1]]}})"),
              ov);
  std::istringstream csv(slurp(dir / "convergence.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "n,quotient_closed,quotient_mc,mc_stderr,upper_bound");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.substr(line.find(',')) == ",0,0,0,0");
  }
  CHECK(rows == 2);
}

TEST_CASE("minimizers command rejects a lone complex shear") {
  const std::string k = R"("kernel": {"psi": {"amplitude": 1},
      "map": {"matrix": [[0.8, 0.6], [-0.6, 0.8]], "blocks": [{"kind": "complex", "alpha": 0.8, "beta": 0.6}]}})";
  RunOverrides ov;
  ov.out_dir = scratch("shear").string();
  CHECK_THROWS_WITH_AS(run_command("minimizers", config(R"("minimizers": {"construction": "shear"})", k), ov),
                       doctest::Contains("d >= 4"), InvalidInput);
}

TEST_CASE("evolve command on zero data reports a rejected fit") {
  const auto dir = scratch("evolve0");
  RunOverrides ov;
  ov.out_dir = dir.string();
  CHECK_THROWS_AS(run_command("evolve", config(R"("evolve": {"T": 1, "initial": {"type": "zero"},
                                                  "grid": {"half_width": 2, "h": 0.25}})"),
                              ov),
                  NumericFailure);
  const auto decay = Json::parse(slurp(dir / "decay.json"));
  CHECK(decay["rejected"].get<std::string>().find("nonpositive norms") != std::string::npos);
}

TEST_CASE("outputs are byte-identical for identical config and seed") {
  const std::string text = config(R"("minimizers": {"n_list": [2, 5], "mc_samples": 20000},
                                     "evolve": {"p": 3, "T": 20, "grid": {"half_width": 2, "h": 0.125}})");
  for (const char* cmd : {"minimizers", "evolve"}) {
    RunOverrides a, b;
    a.out_dir = scratch(std::string(cmd) + "_a").string();
    b.out_dir = scratch(std::string(cmd) + "_b").string();
    b.threads = 2;
    const auto ra = run_command(cmd, text, a);
    run_command(cmd, text, b);
    set_thread_count(1);
    for (const auto& f : ra.files) {
      const auto name = fs::path(f).filename();
      if (name == "effective_config.json") continue;  // records the thread override
      CHECK(slurp(fs::path(*a.out_dir) / name) == slurp(fs::path(*b.out_dir) / name));
    }
  }
}

TEST_CASE("flags override the config") {
  const auto dir = scratch("override");
  RunOverrides ov;
  ov.out_dir = dir.string();
  ov.seed = 99;
  run_command("pinf", config(R"("output_dir": "elsewhere", "pinf": {"epsilons": [0.5]})"), ov);
  const auto eff = Json::parse(slurp(dir / "effective_config.json"));
  CHECK(eff["seed"] == 99);
  CHECK(eff["output_dir"] == dir.string());
  CHECK(slurp(dir / "staircase.csv").find("\n0.5,") != std::string::npos);
  CHECK_THROWS_AS(run_command("plot", config(""), ov), ConfigError);
  CHECK_THROWS_AS(run_command("pinf", config(""), ov), ConfigError);
}
