#include "ipcwi/replicate.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

std::string weight_mode_name(WeightMode mode) { return mode == WeightMode::fitted ? "fitted" : "known"; }

WeightMode parse_weight_mode(const std::string& name) {
  if (name == "fitted" || name == "fitted-weights") return WeightMode::fitted;
  if (name == "known" || name == "known-weights") return WeightMode::known;
  throw InputError(fmt::format("unknown weight mode '{}' (expected fitted or known)", name));
}

void ReplicationConfig::validate() const {
  dgp.validate();
  if (reps < 2) throw DomainError("replication needs at least 2 replicates");
  if (targets.empty()) throw DomainError("replication needs at least one target");
  for (const auto& t : targets) t.validate();
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  if (truth && truth->size() != targets.size()) throw DomainError("supplied truth does not match the targets");
  if (!truth && truth_groups == 0) throw DomainError("truth oracle needs at least one group");
  quad.validate();
}

double ReplicationRow::mc_error() const { return n_ok > 0 ? ese / std::sqrt(static_cast<double>(n_ok)) : NAN; }

std::vector<TargetSpec> grid_targets(double t, std::span<const double> alphas) {
  std::vector<TargetSpec> out;
  for (double a : alphas) {
    out.push_back({t, 0, a});
    out.push_back({t, 1, a});
  }
  for (const auto& s : out) s.validate();
  return out;
}

ReplicateResult run_replicate(const ReplicationConfig& config, int index) {
  ReplicateResult res;
  res.index = index;
  DgpParams dgp = config.dgp;
  dgp.seed = derive_seed(config.dgp.seed, static_cast<std::uint64_t>(index));
  try {
    const SimulatedStudy sim = simulate_dataset(dgp);

    StackedModel model;
    model.propensity_design = simulation_propensity_design();
    model.censoring_design = simulation_censoring_design();
    model.quad = config.quad;
    model.targets = config.targets;

    StackedTheta theta;
    if (config.mode == WeightMode::fitted) {
      const auto cens = fit_censoring(sim.data, *model.censoring_design,
                                      default_censoring_init(sim.data, *model.censoring_design), config.opt);
      const auto prop = fit_propensity(sim.data, model.propensity_design,
                                       default_propensity_init(sim.data, model.propensity_design), config.quad,
                                       config.opt);
      theta.gamma = cens.params;
      theta.beta = prop.params;
    } else {
      model.estimate_propensity = false;
      model.estimate_censoring = false;
      theta.gamma = true_censoring_model(dgp).params;
      theta.beta = true_propensity_model(dgp, config.quad).params;
    }
    theta = solve_targets(sim.data, model, theta);
    const SandwichResult sw = sandwich(sim.data, model, theta, config.jac);
    for (std::size_t k = 0; k < config.targets.size(); ++k) {
      res.estimate.push_back(sw.target_estimate(k));
      res.std_error.push_back(sw.target_se(k));
    }
    res.df = sw.df(1);
    res.excluded = sw.excluded;
    res.ok = true;
  } catch (const ModelError& e) {
    res.failure = e.what();
  } catch (const NumericalError& e) {
    res.failure = e.what();
  }
  return res;
}

ReplicationTable summarize(const ReplicationConfig& config, std::span<const double> truth,
                           std::vector<ReplicateResult> results) {
  if (truth.size() != config.targets.size()) throw DomainError("truth does not match the targets");
  ReplicationTable table;
  table.m = config.dgp.m;
  table.n = config.dgp.n;
  table.mode = config.mode;
  const double z = normal_quantile(0.5 + config.level / 2.0);

  int n_failed = 0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++n_failed;
      table.failures.push_back(fmt::format("replicate {}: {}", r.index, r.failure));
    }
  }
  for (std::size_t k = 0; k < config.targets.size(); ++k) {
    ReplicationRow row;
    row.spec = config.targets[k];
    row.truth = truth[k];
    row.n_failed = n_failed;
    double sum = 0.0, sum_se = 0.0;
    int cover = 0, cover_t = 0;
    for (const auto& r : results) {
      if (!r.ok) continue;
      const double est = r.estimate[k];
      const double se = r.std_error[k];
      ++row.n_ok;
      sum += est;
      sum_se += se;
      if (std::abs(est - row.truth) <= z * se) ++cover;
      const Interval ci = wald_ci(est, se, config.level, r.df);
      if (ci.low <= row.truth && row.truth <= ci.high) ++cover_t;
    }
    if (row.n_ok > 0) {
      row.mean_estimate = sum / row.n_ok;
      row.bias = row.truth - row.mean_estimate;
      row.ase = sum_se / row.n_ok;
      row.ec = static_cast<double>(cover) / row.n_ok;
      row.ec_t = static_cast<double>(cover_t) / row.n_ok;
      double ss = 0.0;
      for (const auto& r : results) {
        if (r.ok) ss += (r.estimate[k] - row.mean_estimate) * (r.estimate[k] - row.mean_estimate);
      }
      row.ese = row.n_ok > 1 ? std::sqrt(ss / (row.n_ok - 1)) : NAN;
    } else {
      row.mean_estimate = row.bias = row.ese = row.ase = row.ec = row.ec_t = NAN;
    }
    table.rows.push_back(row);
  }
  table.replicates = std::move(results);
  return table;
}

ReplicationTable replicate(const ReplicationConfig& config) {
  config.validate();
  std::vector<double> truth;
  if (config.truth) {
    truth = *config.truth;
  } else {
    truth = compute_truth(config.dgp, config.targets, config.truth_groups, config.truth_seed, config.threads);
  }
  std::vector<ReplicateResult> results(static_cast<std::size_t>(config.reps));
  parallel_for(results.size(), config.threads,
               [&](std::size_t r) { results[r] = run_replicate(config, static_cast<int>(r)); });
  return summarize(config, truth, std::move(results));
}

}  // namespace ipcwi
