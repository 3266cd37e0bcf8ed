#include "ipcwi/simulation.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <fmt/format.h>

#include "ipcwi/errors.hpp"
#include "ipcwi/policy.hpp"

namespace ipcwi {

using Engine = boost::random::mt19937_64;

void DgpParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(fmt::format("{} must be positive, got {}", what, v));
  };
  positive(v_mean, "v_mean");
  positive(r1_variance, "r1_variance");
  positive(r2_variance, "r2_variance");
  positive(age_divisor, "age_divisor");
  positive(log_distance_variance, "log_distance_variance");
  positive(treatment_re_variance, "treatment_re_variance");
  positive(frailty_variance, "frailty_variance");
  positive(censor_base, "censor_base");
  if (m < 1) throw DomainError("number of groups must be at least 1");
  if (n < 1) throw DomainError("group size must be at least 1");
}

double DgpParams::outcome_mean(int a, int treated_others, double l1, double l2) const {
  const double denom = spillover_over_others ? std::max(1, n - 1) : n;
  const double mean = outcome_intercept + outcome_treatment * a + outcome_l1 * l1 + outcome_l2 * l2 +
                      outcome_spillover * treated_others / denom;
  // The linear mean can only turn nonpositive for absurd covariate draws.
  return std::max(mean, 1e-8);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finaliser applied to a golden-ratio stride
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct DrawnGroup {
  std::vector<double> l1, l2, uniform, censor;
  std::vector<int> treatment;
  double b = 0.0;
  double e = 1.0;
};

// Draw order: r1; per member (V, r2, log L2); b; per member A; per member
// the outcome uniform; e; per member C.
DrawnGroup draw_group(Engine& rng, const DgpParams& p) {
  const auto n = static_cast<std::size_t>(p.n);
  DrawnGroup g;
  g.l1.resize(n);
  g.l2.resize(n);
  g.uniform.resize(n);
  g.censor.resize(n);
  g.treatment.resize(n);

  boost::random::normal_distribution<double> r1_dist(0.0, std::sqrt(p.r1_variance));
  boost::random::normal_distribution<double> r2_dist(0.0, std::sqrt(p.r2_variance));
  boost::random::normal_distribution<double> std_normal(0.0, 1.0);
  boost::random::exponential_distribution<double> v_dist(1.0 / p.v_mean);
  boost::random::uniform_01<double> unif;

  const double r1 = r1_dist(rng);
  const double sd_l2 = std::sqrt(p.log_distance_variance);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = v_dist(rng);
    const double r2 = r2_dist(rng);
    g.l1[j] = std::min(v + r1 + r2, p.age_cap) / p.age_divisor;
    g.l2[j] = std::exp(r1 + r2 + sd_l2 * std_normal(rng));
  }
  g.b = std::sqrt(p.treatment_re_variance) * std_normal(rng);
  for (std::size_t j = 0; j < n; ++j) {
    const double prob =
        expit(p.treatment_coef[0] + p.treatment_coef[1] * g.l1[j] + p.treatment_coef[2] * g.l2[j] + g.b);
    g.treatment[j] = unif(rng) < prob ? 1 : 0;
  }
  for (std::size_t j = 0; j < n; ++j) g.uniform[j] = 1.0 - unif(rng);  // (0, 1]
  boost::random::gamma_distribution<double> frailty(1.0 / p.frailty_variance, p.frailty_variance);
  g.e = frailty(rng);
  for (std::size_t j = 0; j < n; ++j) {
    const double rate = p.censor_base * std::exp(p.censor_l1 * g.l1[j] + p.censor_l2 * g.l2[j]) * g.e;
    g.censor[j] = boost::random::exponential_distribution<double>(rate)(rng);
  }
  return g;
}

OraclePopulation::Group oracle_table(const DrawnGroup& g, const DgpParams& p) {
  OraclePopulation::Group out;
  out.n = p.n;
  out.times.resize(static_cast<std::size_t>(2 * p.n * p.n));
  for (int j = 0; j < p.n; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const double e = -std::log(g.uniform[js]);  // common Exp(1) draw shared by every counterfactual
    for (int a = 0; a < 2; ++a) {
      for (int k = 0; k < p.n; ++k) {
        out.times[static_cast<std::size_t>((j * 2 + a) * p.n + k)] = p.outcome_mean(a, k, g.l1[js], g.l2[js]) * e;
      }
    }
  }
  return out;
}

// Sum over members of F_ij for each target, divided by n (the group average).
void accumulate_group(const OraclePopulation::Group& g, std::span<const TargetSpec> targets,
                      const std::vector<std::vector<double>>& weights, std::span<double> sums) {
  const int n = g.n;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& spec = targets[t];
    const auto& w = weights[t];
    double group_total = 0.0;
    for (int j = 0; j < n; ++j) {
      double f[2] = {0.0, 0.0};
      for (int a = 0; a < 2; ++a) {
        if (spec.own_treatment && *spec.own_treatment != a) continue;
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
          if (g.at(j, a, k) <= spec.time_horizon) acc += w[static_cast<std::size_t>(k)];
        }
        f[a] = acc;
      }
      group_total += spec.own_treatment ? f[*spec.own_treatment] : spec.alpha * f[1] + (1.0 - spec.alpha) * f[0];
    }
    sums[t] += group_total / n;
  }
}

std::vector<std::vector<double>> target_weights(int n, std::span<const TargetSpec> targets) {
  std::vector<std::vector<double>> out;
  for (const auto& t : targets) {
    t.validate();
    out.push_back(binomial_weights(n, t.alpha));
  }
  return out;
}

}  // namespace

std::vector<double> binomial_weights(int n, double alpha) {
  check_alpha(alpha);
  if (n < 1) throw DomainError("group size must be at least 1");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double log_choose = std::lgamma(n) - std::lgamma(k + 1.0) - std::lgamma(n - k);
    w[static_cast<std::size_t>(k)] = std::exp(log_choose + log_policy_prob(k, n - 1, alpha));
  }
  return w;
}

SimulatedStudy simulate_dataset(const DgpParams& params) {
  params.validate();
  Engine rng(params.seed);
  SimulatedStudy sim;
  sim.data.covariate_names = {"L1", "L2"};
  auto& po = sim.outcomes;
  for (int i = 0; i < params.m; ++i) {
    const DrawnGroup g = draw_group(rng, params);
    OraclePopulation::Group table = oracle_table(g, params);
    GroupData group;
    group.group_id = fmt::format("g{}", i + 1);
    std::vector<double> t_fact, c_fact;
    int treated = 0;
    for (int a : g.treatment) treated += a;
    for (int j = 0; j < params.n; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const int a = g.treatment[js];
      const double t = table.at(j, a, treated - a);
      const double c = g.censor[js];
      IndividualRecord rec;
      rec.individual_id = std::to_string(j + 1);
      rec.covariates = {g.l1[js], g.l2[js]};
      rec.treatment = a;
      rec.event = c < t ? 0 : 1;
      rec.observed_time = std::min(t, c);
      group.members.push_back(std::move(rec));
      t_fact.push_back(t);
      c_fact.push_back(c);
    }
    sim.data.groups.push_back(std::move(group));
    po.event_time.push_back(std::move(t_fact));
    po.censor_time.push_back(std::move(c_fact));
    po.frailty.push_back(g.e);
    po.treatment_effect.push_back(g.b);
    po.oracle.groups.push_back(std::move(table));
  }
  return sim;
}

double true_mu(const OraclePopulation& oracle, const TargetSpec& target) {
  target.validate();
  if (oracle.groups.empty()) throw DomainError("oracle population is empty");
  std::vector<std::vector<double>> weights_by_n;  // cached per group size
  double sum = 0.0;
  const std::span<const TargetSpec> one(&target, 1);
  for (const auto& g : oracle.groups) {
    if (static_cast<std::size_t>(g.n) >= weights_by_n.size()) weights_by_n.resize(static_cast<std::size_t>(g.n) + 1);
    auto& w = weights_by_n[static_cast<std::size_t>(g.n)];
    if (w.empty()) w = binomial_weights(g.n, target.alpha);
    double s = 0.0;
    accumulate_group(g, one, {w}, std::span<double>(&s, 1));
    sum += s;
  }
  return sum / static_cast<double>(oracle.groups.size());
}

std::vector<double> compute_truth(const DgpParams& params, std::span<const TargetSpec> targets,
                                  std::size_t oracle_groups, std::uint64_t seed, int threads) {
  params.validate();
  if (oracle_groups == 0) throw DomainError("oracle population needs at least one group");
  const auto weights = target_weights(params.n, targets);

  constexpr std::size_t kChunk = 2000;
  const std::size_t chunks = (oracle_groups + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(targets.size(), 0.0));
  parallel_for(chunks, threads, [&](std::size_t c) {
    Engine rng(derive_seed(seed, c));
    const std::size_t count = std::min(kChunk, oracle_groups - c * kChunk);
    for (std::size_t i = 0; i < count; ++i) {
      const auto table = oracle_table(draw_group(rng, params), params);
      accumulate_group(table, targets, weights, partial[c]);
    }
  });
  std::vector<double> out(targets.size(), 0.0);
  for (const auto& part : partial) {
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += part[t];
  }
  for (double& v : out) v /= static_cast<double>(oracle_groups);
  return out;
}

PropensityDesign simulation_propensity_design() { return PropensityDesign{{"L1", "L2"}, true}; }

CensoringDesign simulation_censoring_design() { return CensoringDesign{{"L1", "L2"}}; }

PropensityModel true_propensity_model(const DgpParams& params, const QuadratureConfig& quad) {
  PropensityModel model;
  model.design = simulation_propensity_design();
  model.params.theta_x.assign(params.treatment_coef.begin(), params.treatment_coef.end());
  model.params.theta_s = params.treatment_re_variance;
  model.params.compliance = 1.0;
  model.quad = quad;
  return model;
}

CensoringModel true_censoring_model(const DgpParams& params) {
  CensoringModel model;
  model.design = simulation_censoring_design();
  model.params.theta_c = {params.censor_l1, params.censor_l2};
  model.params.theta_h = params.censor_base;
  model.params.theta_r = params.frailty_variance;
  return model;
}

WeightModel true_weight_model(const DgpParams& params, const QuadratureConfig& quad) {
  return WeightModel{true_propensity_model(params, quad), true_censoring_model(params)};
}

}  // namespace ipcwi
