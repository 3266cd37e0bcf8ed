#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipcwi/inference.hpp"
#include "ipcwi/numerics.hpp"
#include "ipcwi/simulation.hpp"

namespace ipcwi {

// fitted: both nuisance models estimated per replicate and stacked.
// known: the data-generating nuisance parameters are plugged in and held fixed.
enum class WeightMode { fitted, known };

std::string weight_mode_name(WeightMode mode);
WeightMode parse_weight_mode(const std::string& name);  // throws InputError

struct ReplicationConfig {
  DgpParams dgp;  // dgp.seed is the master seed
  int reps = 200;
  std::vector<TargetSpec> targets;
  WeightMode mode = WeightMode::fitted;
  QuadratureConfig quad;
  OptimizerConfig opt;
  JacobianConfig jac;
  double level = 0.95;

  std::size_t truth_groups = 1'000'000;
  std::uint64_t truth_seed = 7;
  std::optional<std::vector<double>> truth;  // skips the oracle when supplied

  int threads = 0;  // 0: hardware concurrency

  void validate() const;  // throws DomainError
};

// Outcome of one replicate, keyed by its index.
struct ReplicateResult {
  int index = 0;
  bool ok = false;
  std::string failure;
  std::vector<double> estimate;
  std::vector<double> std_error;
  double df = 0.0;  // t degrees of freedom for a single target
  std::size_t excluded = 0;
};

struct ReplicationRow {
  TargetSpec spec;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;  // truth minus mean estimate
  double ese = 0.0;   // SD of the point estimates
  double ase = 0.0;   // mean sandwich SE
  double ec = 0.0;    // Normal-interval coverage
  double ec_t = 0.0;  // t-interval coverage
  int n_ok = 0;
  int n_failed = 0;

  double mc_error() const;  // ese / sqrt(n_ok)
};

struct ReplicationTable {
  int m = 0;
  int n = 0;
  WeightMode mode = WeightMode::fitted;
  std::vector<ReplicationRow> rows;
  std::vector<ReplicateResult> replicates;
  std::vector<std::string> failures;  // "replicate <k>: <reason>"
};

// One replicate: simulate with the derived seed, fit (or plug in) the
// nuisance models, solve the targets and run the sandwich.
ReplicateResult run_replicate(const ReplicationConfig& config, int index);

ReplicationTable summarize(const ReplicationConfig& config, std::span<const double> truth,
                           std::vector<ReplicateResult> results);

ReplicationTable replicate(const ReplicationConfig& config);

// Every (alpha, a) pair with a in {0, 1} at time t.
std::vector<TargetSpec> grid_targets(double t, std::span<const double> alphas);

}  // namespace ipcwi
