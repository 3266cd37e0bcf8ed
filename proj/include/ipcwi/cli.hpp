#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ipcwi/io.hpp"

namespace ipcwi {

// Everything a run needs; built from defaults, an optional JSON config file
// and command-line overrides, in that order.
struct RunConfig {
  std::string command;
  std::filesystem::path data;  // input CSV for fit / estimate
  std::filesystem::path output_dir = ".";
  std::optional<std::filesystem::path> propensity_fit;  // default: <output_dir>/propensity.json
  std::optional<std::filesystem::path> censoring_fit;   // default: <output_dir>/censoring.json

  PropensityDesign propensity_design{{"L1", "L2"}, true};
  double compliance = 1.0;
  std::optional<CensoringDesign> censoring_design = CensoringDesign{{"L1", "L2"}};
  QuadratureConfig quad;
  OptimizerConfig opt;
  JacobianConfig jac;

  std::vector<double> times{100.0};
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double reference_alpha = 0.5;
  std::vector<double> plot_times;  // empty: 50 points up to the largest observed time
  double level = 0.95;
  bool t_intervals = false;
  double effects_scale = 1.0;

  DgpParams dgp;
  std::size_t truth_groups = 1'000'000;
  std::uint64_t truth_seed = 7;

  int reps = 200;
  WeightMode mode = WeightMode::fitted;
  std::vector<int> m_values;  // empty: just dgp.m

  int threads = 0;

  void validate() const;  // throws InputError
};

// Applies `overrides` ("a.b=value", value parsed as JSON when possible) to `base`.
Json apply_overrides(Json base, const std::vector<std::string>& overrides);
RunConfig config_from_json(const Json& j);

// Subcommands; each writes its files under config.output_dir and a short
// report to `log`.
void cmd_simulate(const RunConfig& config, std::ostream& log);
void cmd_fit(const RunConfig& config, std::ostream& log);
void cmd_estimate(const RunConfig& config, std::ostream& log);
void cmd_replicate(const RunConfig& config, std::ostream& log);

// Exit status: 0 ok, 1 input/config, 2 model/convergence, 3 numerical.
int exit_code_for(const std::exception& e);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace ipcwi
