#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nlpl/evolution.hpp"
#include "nlpl/grid.hpp"
#include "nlpl/kernel.hpp"
#include "nlpl/minimizers.hpp"
#include "nlpl/spectral.hpp"

namespace nlpl {

using Json = nlohmann::ordered_json;

/// {psi: {shape, amplitude}, map: {matrix, blocks?, conjugation?}}; matrices
/// are row-major lists. Unknown keys raise ConfigError.
KernelSpec kernel_from_json(const Json& j);
Json kernel_to_json(const KernelSpec& spec);

struct GridSection {
  double half_width = 8.0;
  double h = 0.0625;
  GridShape shape = GridShape::box;
};

struct EigenSection {
  double p = 2.0;
  std::vector<double> radii{4.0, 8.0, 16.0};
  double h = 0.0625;
  int restarts = 2;
  int max_iters = 20000;
  double tol = 1e-8;
  SolverChoice solver = SolverChoice::automatic;
  bool measure_tol_quad = true;
  int warm_start_n = 10;  // 0 disables the minimizing-sequence start
};

struct MinimizersSection {
  double p = 2.0;
  std::vector<int> n_list{1, 10, 100};
  std::uint64_t mc_samples = 1'000'000;
  int budget = 4000;
  Construction construction = Construction::automatic;
};

struct InitialSection {
  std::string type = "indicator_ball";  // indicator_ball | constant | zero | csv
  double radius = 1.0;
  double value = 1.0;
  std::string path;
};

struct FitSection {
  std::string regime = "auto";  // auto | polynomial | exponential
  std::optional<std::pair<double, double>> window;
};

struct EvolveSection {
  SolverConfig solver;
  double r = 2.0;
  GridSection grid;
  InitialSection initial;
  FitSection fit;
};

struct PinfSection {
  std::vector<double> p_list{2.0, 4.0, 8.0, 16.0, 32.0};
  std::vector<double> epsilons{0.5, 0.25};
  double h = 0.0625;
  GridShape shape = GridShape::box;
  bool literal_support = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::optional<unsigned> threads;
  std::optional<KernelSpec> kernel;
  std::optional<EigenSection> eigen;
  std::optional<MinimizersSection> minimizers;
  std::optional<EvolveSection> evolve;
  std::optional<PinfSection> pinf;
};

ExperimentConfig parse_config(const Json& j);
/// `seed`, when given, replaces the config's seed (which is otherwise required).
ExperimentConfig parse_config_text(const std::string& text, std::optional<std::uint64_t> seed = std::nullopt);
/// The configuration with every default filled in.
Json effective_json(const ExperimentConfig& cfg);

}  // namespace nlpl
