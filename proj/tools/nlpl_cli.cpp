#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "nlpl/nlpl.h"

namespace {

int exit_code(nlpl_status s) {
  switch (s) {
    case NLPL_OK:
      return 0;
    case NLPL_ERR_CONFIG:
    case NLPL_ERR_INVALID_ARGUMENT:
      return 2;
    case NLPL_ERR_NUMERIC:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlocal p-Laplacian experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON experiment config")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides seed)");
  app.add_option("--threads", threads, "worker threads (overrides threads)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "do not print the summary");
  app.fallthrough();

  for (const char* name : {"eigen", "minimizers", "evolve", "pinf"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return 2;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  nlpl_run_options opts{};
  if (*out_opt) opts.out_dir = out_dir.c_str();
  if (*seed_opt) {
    opts.has_seed = 1;
    opts.seed = seed;
  }
  opts.threads = threads;

  nlpl_report* report = nullptr;
  const nlpl_status st = nlpl_run(command.c_str(), text.c_str(), &opts, &report);
  if (st != NLPL_OK) {
    std::cerr << "error: " << nlpl_last_error() << "\n";
    return exit_code(st);
  }
  for (std::size_t i = 0; i < nlpl_report_warning_count(report); ++i)
    std::cerr << "warning: " << nlpl_report_warning(report, i) << "\n";
  if (!quiet) {
    std::cout << nlpl_report_summary(report) << "\n";
    for (std::size_t i = 0; i < nlpl_report_file_count(report); ++i)
      std::cout << "wrote " << nlpl_report_file(report, i) << "\n";
  }
  nlpl_report_destroy(report);
  return 0;
}
