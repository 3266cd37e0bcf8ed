#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipcwi/censoring.hpp"
#include "ipcwi/data.hpp"
#include "ipcwi/propensity.hpp"

namespace ipcwi {

// Fitted (or known) nuisance models that supply the two weight factors.
struct PropensityModel {
  PropensityParams params;
  PropensityDesign design;
  QuadratureConfig quad;
};

struct CensoringModel {
  CensoringParams params;
  CensoringDesign design;
};

struct WeightModel {
  PropensityModel propensity;
  std::optional<CensoringModel> censoring;  // absent: S_C == 1 for everybody
};

// Censoring survival probabilities below this are floored before inversion.
inline constexpr double kCensorSurvivalFloor = 1e-6;

// The weight ingredients of one group.
struct GroupWeights {
  double log_propensity = 0.0;
  std::vector<double> censor_survival;  // per member, already floored
  bool excluded = false;                // propensity underflow
  int floored = 0;                      // members whose S_C hit the floor
};

// Groups resolved once against both designs.
class PreparedStudy {
 public:
  PreparedStudy(const StudyData& data, const PropensityDesign& propensity_design,
                const std::optional<CensoringDesign>& censoring_design);

  const StudyData& data() const { return *data_; }
  std::size_t size() const { return data_->groups.size(); }
  const GroupData& group(std::size_t i) const { return data_->groups[i]; }
  const PropensityGroup& propensity_group(std::size_t i) const { return propensity_[i]; }
  const CensoringGroup* censoring_group(std::size_t i) const {
    return censoring_.empty() ? nullptr : &censoring_[i];
  }

 private:
  const StudyData* data_;
  std::vector<PropensityGroup> propensity_;
  std::vector<CensoringGroup> censoring_;
};

// Member-level S_C(X_ij | Ltilde_ij), floored at kCensorSurvivalFloor.
std::vector<double> member_censor_survival(const CensoringGroup* group, std::size_t size,
                                           const std::optional<CensoringParams>& params, int* floored = nullptr);

GroupWeights compute_group_weights(const PreparedStudy& study, std::size_t i, const WeightModel& model);

// Fhat_i(t, a, alpha) and Fhat_i(t, alpha). Return nullopt for a group
// flagged as excluded (near-zero propensity).
std::optional<double> group_ipcw_a(const GroupData& group, const TargetSpec& spec, const GroupWeights& weights);
std::optional<double> group_ipcw_marginal(const GroupData& group, const TargetSpec& spec, const GroupWeights& weights);
std::optional<double> group_ipcw(const GroupData& group, const TargetSpec& spec, const GroupWeights& weights);

struct TargetEstimate {
  TargetSpec spec;
  double estimate = 0.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();  // filled by inference
  std::vector<double> group_values;  // NaN for excluded groups
  int excluded = 0;
  int floored_weights = 0;
};

TargetEstimate estimate_mu(const StudyData& data, const TargetSpec& spec, const WeightModel& model);

// Several targets sharing one pass over the weights.
std::vector<TargetEstimate> estimate_mu(const StudyData& data, std::span<const TargetSpec> specs,
                                        const WeightModel& model);

// Uncensored estimator with Y_ij = I(X_ij <= t) and no censoring weights.
TargetEstimate tv_estimator(const StudyData& data, const TargetSpec& spec, const PropensityModel& model);

}  // namespace ipcwi
