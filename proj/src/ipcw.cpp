#include "ipcwi/ipcw.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"
#include "ipcwi/policy.hpp"

namespace ipcwi {

PreparedStudy::PreparedStudy(const StudyData& data, const PropensityDesign& propensity_design,
                             const std::optional<CensoringDesign>& censoring_design)
    : data_(&data), propensity_(prepare_propensity_groups(data, propensity_design)) {
  if (censoring_design) censoring_ = prepare_censoring_groups(data, *censoring_design);
}

std::vector<double> member_censor_survival(const CensoringGroup* group, std::size_t size,
                                           const std::optional<CensoringParams>& params, int* floored) {
  std::vector<double> out(size, 1.0);
  if (!params || !group) return out;
  const auto q = static_cast<Eigen::Index>(params->theta_c.size());
  const Eigen::Map<const Eigen::VectorXd> theta(params->theta_c.data(), q);
  for (std::size_t j = 0; j < size; ++j) {
    const double eta = group->rows.row(static_cast<Eigen::Index>(j)).dot(theta);
    double s = censor_survival(group->time[j], eta, *params);
    if (s < kCensorSurvivalFloor) {
      s = kCensorSurvivalFloor;
      if (floored) ++*floored;
    }
    out[j] = s;
  }
  return out;
}

GroupWeights compute_group_weights(const PreparedStudy& study, std::size_t i, const WeightModel& model) {
  GroupWeights w;
  w.log_propensity = group_log_propensity(study.propensity_group(i), model.propensity.params, model.propensity.quad);
  w.excluded = !(w.log_propensity >= std::log(kPropensityUnderflow));
  std::optional<CensoringParams> cp;
  if (model.censoring) cp = model.censoring->params;
  w.censor_survival = member_censor_survival(study.censoring_group(i), study.group(i).size(), cp, &w.floored);
  return w;
}

namespace {

// n^-1 sum_j pi(.) I(A_ij = a) Delta_ij I(X_ij <= t) / (P S_ij). With `censored_outcome`
// false the event indicator is dropped and S_C is ignored (uncensored estimator).
double group_value(const GroupData& group, const TargetSpec& spec, double log_propensity,
                   std::span<const double> censor_survival, bool censored_outcome) {
  const int n = static_cast<int>(group.size());
  const int treated = group.treated_count();
  double acc = 0.0;
  for (std::size_t j = 0; j < group.members.size(); ++j) {
    const auto& r = group.members[j];
    if (censored_outcome && r.event != 1) continue;
    if (!(r.observed_time <= spec.time_horizon)) continue;
    double log_pi;
    if (spec.own_treatment) {
      if (r.treatment != *spec.own_treatment) continue;
      log_pi = log_policy_prob(treated - r.treatment, n - 1, spec.alpha);
    } else {
      log_pi = log_policy_prob(treated, n, spec.alpha);
    }
    double term = std::exp(log_pi - log_propensity);
    if (censored_outcome) term /= censor_survival[j];
    acc += term;
  }
  return acc / n;
}

}  // namespace

std::optional<double> group_ipcw_a(const GroupData& group, const TargetSpec& spec, const GroupWeights& weights) {
  spec.validate();
  if (!spec.own_treatment) throw DomainError("group_ipcw_a needs a target with own treatment set");
  if (weights.excluded) return std::nullopt;
  return group_value(group, spec, weights.log_propensity, weights.censor_survival, true);
}

std::optional<double> group_ipcw_marginal(const GroupData& group, const TargetSpec& spec,
                                          const GroupWeights& weights) {
  spec.validate();
  if (spec.own_treatment) throw DomainError("group_ipcw_marginal needs a marginal target");
  if (weights.excluded) return std::nullopt;
  return group_value(group, spec, weights.log_propensity, weights.censor_survival, true);
}

std::optional<double> group_ipcw(const GroupData& group, const TargetSpec& spec, const GroupWeights& weights) {
  return spec.own_treatment ? group_ipcw_a(group, spec, weights) : group_ipcw_marginal(group, spec, weights);
}

std::vector<TargetEstimate> estimate_mu(const StudyData& data, std::span<const TargetSpec> specs,
                                        const WeightModel& model) {
  require_valid(data);
  for (const auto& s : specs) s.validate();
  const PreparedStudy study(data, model.propensity.design,
                            model.censoring ? std::optional<CensoringDesign>(model.censoring->design) : std::nullopt);

  std::vector<TargetEstimate> out(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    out[k].spec = specs[k];
    out[k].group_values.assign(study.size(), std::numeric_limits<double>::quiet_NaN());
  }
  int excluded = 0, floored = 0;
  for (std::size_t i = 0; i < study.size(); ++i) {
    const GroupWeights w = compute_group_weights(study, i, model);
    floored += w.floored;
    if (w.excluded) {
      ++excluded;
      continue;
    }
    for (std::size_t k = 0; k < specs.size(); ++k) out[k].group_values[i] = *group_ipcw(study.group(i), specs[k], w);
  }
  const std::size_t included = study.size() - static_cast<std::size_t>(excluded);
  if (included == 0) throw DomainError("every group was excluded for a numerically zero propensity");
  for (auto& est : out) {
    double sum = 0.0;
    for (double v : est.group_values) {
      if (!std::isnan(v)) sum += v;
    }
    est.estimate = sum / static_cast<double>(included);
    est.excluded = excluded;
    est.floored_weights = floored;
  }
  return out;
}

TargetEstimate estimate_mu(const StudyData& data, const TargetSpec& spec, const WeightModel& model) {
  return estimate_mu(data, std::span<const TargetSpec>(&spec, 1), model).front();
}

TargetEstimate tv_estimator(const StudyData& data, const TargetSpec& spec, const PropensityModel& model) {
  require_valid(data);
  spec.validate();
  const PreparedStudy study(data, model.design, std::nullopt);
  TargetEstimate est;
  est.spec = spec;
  est.group_values.assign(study.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (std::size_t i = 0; i < study.size(); ++i) {
    const double lp = group_log_propensity(study.propensity_group(i), model.params, model.quad);
    if (!(lp >= std::log(kPropensityUnderflow))) {
      ++est.excluded;
      continue;
    }
    est.group_values[i] = group_value(study.group(i), spec, lp, {}, false);
    sum += est.group_values[i];
  }
  const auto included = static_cast<double>(study.size()) - est.excluded;
  if (included == 0) throw DomainError("every group was excluded for a numerically zero propensity");
  est.estimate = sum / included;
  return est;
}

}  // namespace ipcwi
