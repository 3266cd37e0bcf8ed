#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ipcwi/errors.hpp"

namespace ipcwi {

// Gauss-Hermite rule for the weight exp(-x^2). Rules are computed once per
// size and cached for the life of the process.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};

const GaussHermiteRule& gauss_hermite(int num_nodes);

double log_sum_exp(std::span<const double> values);

// log(1 + exp(x)) without overflow.
double softplus(double x);

inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// ---------------------------------------------------------------------------
// Quasi-Newton minimisation (GSL vector_bfgs2 behind this interface).

struct OptimizerConfig {
  // Converged when max|grad| <= gradient_tolerance * max(1, |f|).
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
  double initial_step = 0.1;
  double line_search_tolerance = 0.1;
  // When false a non-converged result is returned instead of thrown.
  bool throw_on_failure = true;
};

// Objective returning f(x) and writing grad f(x) into the second argument.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct OptimizeResult {
  std::vector<double> x;
  double objective = 0.0;
  double gradient_norm = 0.0;  // infinity norm
  int iterations = 0;
  bool converged = false;
  std::vector<OptimizerTraceEntry> trace;
};

OptimizeResult minimize_bfgs(const Objective& objective, std::vector<double> x0, const OptimizerConfig& config);

// ---------------------------------------------------------------------------
// Distribution helpers.

double normal_quantile(double p);
double student_t_quantile(double p, double df);

// ---------------------------------------------------------------------------
// Deterministic index-parallel map. fn(i) is called exactly once for each
// i in [0, count); results are stored by index so any reduction performed by
// the caller afterwards is independent of scheduling.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

int default_thread_count();

}  // namespace ipcwi
