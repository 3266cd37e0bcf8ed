#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ipcwi/data.hpp"
#include "ipcwi/ipcw.hpp"

namespace ipcwi {

// Constants of the simulation design. Every Normal second argument is a
// variance.
struct DgpParams {
  // Covariates: L1 = min(V + r1 + r2, age_cap) / age_divisor with V ~ Exp(mean v_mean),
  // r1 ~ N(0, r1_variance) per group, r2 ~ N(0, r2_variance) per member;
  // log L2 ~ N(r1 + r2, log_distance_variance).
  double v_mean = 20.0;
  double r1_variance = 0.1;
  double r2_variance = 0.1;
  double age_cap = 100.0;
  double age_divisor = 10.0;
  double log_distance_variance = 0.75;

  // Treatment: A ~ Bernoulli(expit(c0 + c1 L1 + c2 L2 + b)), b ~ N(0, treatment_re_variance).
  std::array<double, 3> treatment_coef{0.2727, -0.0387, 0.2179};
  double treatment_re_variance = 0.0859;

  // Potential event times: Exp with mean
  //   intercept + treatment a + l1 L1 + l2 L2 + spillover * (treated others) / n.
  double outcome_intercept = 200.0;
  double outcome_treatment = 100.0;
  double outcome_l1 = -0.98;
  double outcome_l2 = -0.145;
  double outcome_spillover = 50.0;
  bool spillover_over_others = false;  // divide by n - 1 instead of n

  // Censoring: C ~ Exp(rate base * exp(l1 L1 + l2 L2) * e), e ~ Gamma(mean 1, variance frailty_variance).
  double frailty_variance = 1.25;
  double censor_base = 0.015;
  double censor_l1 = 0.002;
  double censor_l2 = 0.015;

  int m = 500;  // groups
  int n = 10;   // members per group
  std::uint64_t seed = 20240101;

  void validate() const;  // throws DomainError
  double outcome_mean(int a, int treated_others, double l1, double l2) const;
};

// Potential event times T_ij(a, k) for own treatment a and k treated others.
struct OraclePopulation {
  struct Group {
    int n = 0;
    std::vector<double> times;  // index (j * 2 + a) * n + k

    double at(int j, int a, int k) const { return times[static_cast<std::size_t>((j * 2 + a) * n + k)]; }
  };
  std::vector<Group> groups;
};

struct PotentialOutcomeStore {
  std::vector<std::vector<double>> event_time;   // factual T_ij(A_i)
  std::vector<std::vector<double>> censor_time;  // C_ij
  std::vector<double> frailty;                   // e_i
  std::vector<double> treatment_effect;          // b_i
  OraclePopulation oracle;
};

struct SimulatedStudy {
  StudyData data;  // covariates "L1", "L2"
  PotentialOutcomeStore outcomes;
};

SimulatedStudy simulate_dataset(const DgpParams& params);

// Oracle approximation of mu(t, a, alpha) (or mu(t, alpha) for a marginal
// target) over a population of potential outcomes.
double true_mu(const OraclePopulation& oracle, const TargetSpec& target);

// Same quantity over `oracle_groups` freshly drawn groups, streamed in
// fixed-size chunks so memory stays bounded; the result depends only on
// (params, targets, oracle_groups, seed), not on the thread count.
std::vector<double> compute_truth(const DgpParams& params, std::span<const TargetSpec> targets,
                                  std::size_t oracle_groups, std::uint64_t seed, int threads = 0);

// Binomial(n - 1, alpha) probabilities for the number of treated others.
std::vector<double> binomial_weights(int n, double alpha);

// The data-generating nuisance models, for known-weights estimation.
PropensityDesign simulation_propensity_design();
CensoringDesign simulation_censoring_design();
PropensityModel true_propensity_model(const DgpParams& params, const QuadratureConfig& quad = {});
CensoringModel true_censoring_model(const DgpParams& params);
WeightModel true_weight_model(const DgpParams& params, const QuadratureConfig& quad = {});

// Deterministic stream splitting: seed of stream `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace ipcwi
