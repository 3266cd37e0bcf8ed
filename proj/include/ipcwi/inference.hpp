#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipcwi/ipcw.hpp"

namespace ipcwi {

// What is stacked: the nuisance blocks that were estimated from the data and
// the targets mu(t, a, alpha) / mu(t, alpha). A nuisance block that is not
// estimated is held fixed at the value supplied in StackedTheta ("known
// weights").
struct StackedModel {
  PropensityDesign propensity_design;
  QuadratureConfig quad;
  std::optional<CensoringDesign> censoring_design;  // absent: S_C == 1
  bool estimate_propensity = true;
  bool estimate_censoring = true;
  std::vector<TargetSpec> targets;

  bool censoring_in_stack() const { return censoring_design.has_value() && estimate_censoring; }
};

struct StackedTheta {
  std::optional<CensoringParams> gamma;  // required when the model has a censoring design
  PropensityParams beta;
  std::vector<double> targets;
};

// Ordering of the stacked parameter vector: [theta_c, theta_h, theta_r | theta_x, theta_s | targets].
struct BlockLayout {
  std::size_t censoring_offset = 0;
  std::size_t censoring_size = 0;
  std::size_t propensity_offset = 0;
  std::size_t propensity_size = 0;
  std::size_t target_offset = 0;
  std::size_t target_size = 0;
  std::vector<std::string> names;

  std::size_t dimension() const { return target_offset + target_size; }
  std::size_t nuisance_dimension() const { return censoring_size + propensity_size; }
  std::string block_of(std::size_t index) const;
};

BlockLayout make_layout(const StackedModel& model, const StackedTheta& theta);
Eigen::VectorXd pack(const StackedModel& model, const StackedTheta& theta);
StackedTheta unpack(const StackedModel& model, const StackedTheta& like, const Eigen::VectorXd& flat);

// Fill theta.targets with the solutions of the target equations (group means).
StackedTheta solve_targets(const StudyData& data, const StackedModel& model, StackedTheta theta);

// psi(O_i, theta) for group i: censoring scores, propensity scores, then
// one Fhat_i - theta_k per target.
Eigen::VectorXd stacked_psi(const PreparedStudy& study, std::size_t i, const StackedModel& model,
                            const StackedTheta& theta);

struct JacobianConfig {
  double relative_step = 1e-6;  // h_k = relative_step * max(1, |theta_k|)
};

struct SandwichResult {
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd u_matrix;
  Eigen::MatrixXd v_matrix;
  Eigen::VectorXd theta;
  BlockLayout layout;
  std::vector<TargetSpec> targets;
  std::size_t m = 0;          // groups used (excluded groups removed)
  std::size_t excluded = 0;
  double condition_number = 0.0;
  double max_abs_psi_sum = 0.0;  // max |sum_i psi_i| at theta, a check on the supplied solution
  int floored_weights = 0;

  std::size_t num_targets() const { return layout.target_size; }
  double target_estimate(std::size_t k) const { return theta(static_cast<Eigen::Index>(layout.target_offset + k)); }
  double target_se(std::size_t k) const;
  Eigen::MatrixXd target_covariance() const;  // Sigma restricted to the target block (not divided by m)

  // t degrees of freedom for an interval involving `targets_involved` targets:
  // m minus the number of parameters a separate stack for them would have.
  double df(std::size_t targets_involved = 1) const;
};

// Empirical sandwich U^-1 V U^-T with U = -m^-1 sum psi-dot (central
// differences, one-sided near a zero boundary of a positive parameter).
SandwichResult sandwich(const StudyData& data, const StackedModel& model, const StackedTheta& theta_hat,
                        const JacobianConfig& jac = {});

struct ContrastEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double df = 0.0;
};

ContrastEstimate contrast(const SandwichResult& result, std::span<const double> weights);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// estimate +/- q * se with q the Normal quantile, or the t quantile when df is set.
Interval wald_ci(double estimate, double std_error, double level, std::optional<double> df = std::nullopt);

}  // namespace ipcwi
