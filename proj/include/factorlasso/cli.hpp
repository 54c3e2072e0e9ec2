#pragma once

#include <string>
#include <vector>

#include "factorlasso/bootstrap.hpp"
#include "factorlasso/inference.hpp"
#include "factorlasso/panel.hpp"
#include "factorlasso/simulation.hpp"

namespace factorlasso {

struct RunConfig {
  std::string command;  // estimate | iv-estimate | bootstrap | simulate | factors | help
  std::string help_text;

  std::string input;
  std::string output;          // empty = stdout
  std::string format = "json"; // csv available for simulate
  CsvSchema schema{};
  std::string z_col = "z";

  EstimateConfig est{};
  bool k_auto = false;
  int k_max_spectrum = 8;  // factors subcommand cap

  BootstrapConfig boot{};

  std::string design = "ppfm";
  PpfmDesign ppfm{};
  IvDesign iv{};
  MonteCarloOptions mc{};

  int threads = 0;
};

// Parses CLI arguments (without the program name). Throws Error(usage) on bad
// input; --help yields command == "help" with the help text filled in.
RunConfig parse_args(const std::vector<std::string>& args);

// Full driver: parse, dispatch, emit, map errors to exit codes.
int run_cli(int argc, char** argv);

}  // namespace factorlasso
