#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipcwi/data.hpp"
#include "ipcwi/numerics.hpp"

namespace ipcwi {

// Random-intercept logistic treatment model
//   Pr(A_ij = 1 | L_ij, b_i) = rho * expit(L_ij theta_x + b_i),  b_i ~ N(0, theta_s)
// where rho is a known compliance multiplier (1 for the plain model).
struct PropensityParams {
  std::vector<double> theta_x;
  double theta_s = 0.1;     // random-intercept variance
  double compliance = 1.0;  // rho in (0, 1]

  void validate() const;  // throws DomainError
};

// Which covariate columns enter theta_x; an intercept column is prepended
// when `intercept` is set.
struct PropensityDesign {
  std::vector<std::string> columns;
  bool intercept = true;

  std::size_t dimension() const { return columns.size() + (intercept ? 1 : 0); }
  std::vector<std::string> labels() const;
};

struct QuadratureConfig {
  int num_nodes = 25;
  bool adaptive = false;  // centre and scale the rule on the integrand's mode

  void validate() const;
};

// A group resolved against a design: n x p design rows and the treatment vector.
struct PropensityGroup {
  Eigen::MatrixXd rows;
  std::vector<int> treatment;

  static PropensityGroup from(const GroupData& group, const PropensityDesign& design,
                              const StudyData& study);
};

std::vector<PropensityGroup> prepare_propensity_groups(const StudyData& data, const PropensityDesign& design);

// Groups whose propensity falls below this are treated as numerically zero.
inline constexpr double kPropensityUnderflow = 1e-300;

double individual_prob(std::span<const double> covariates, double b, const PropensityParams& params);

// log Pr(A_i | L_i, beta); never underflows (evaluated by log-sum-exp).
double group_log_propensity(const PropensityGroup& group, const PropensityParams& params,
                            const QuadratureConfig& quad = {});

// Pr(A_i | L_i, beta). Throws NumericalError if the value is not positive.
double group_propensity(const PropensityGroup& group, const PropensityParams& params,
                        const QuadratureConfig& quad = {});

inline double group_log_likelihood(const PropensityGroup& group, const PropensityParams& params,
                                   const QuadratureConfig& quad = {}) {
  return group_log_propensity(group, params, quad);
}

struct LikelihoodAndScore {
  double value = 0.0;
  Eigen::VectorXd score;  // d/d(theta_x..., theta_s)
};

LikelihoodAndScore group_log_likelihood_and_score(const PropensityGroup& group, const PropensityParams& params,
                                                  const QuadratureConfig& quad = {});

// Per-group score vector psi_x (length p + 1; last entry is d/d theta_s).
// The theta_s derivative uses E[f''(b)]/2 (Stein's identity), which stays
// finite as theta_s -> 0.
Eigen::VectorXd propensity_scores_psi(const PropensityGroup& group, const PropensityParams& params,
                                      const QuadratureConfig& quad = {});

struct PropensityFit {
  PropensityParams params;
  bool converged = false;
  double loglik = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;  // max |d loglik / d(theta_x, theta_s)| / m at the estimate
  std::vector<std::string> warnings;
};

PropensityParams default_propensity_init(const StudyData& data, const PropensityDesign& design,
                                         double compliance = 1.0);

// Maximum likelihood fit; theta_s is optimised on the log scale.
// Throws ModelError when both treatment values are not present and
// ConvergenceError if the optimizer fails (unless opt.throw_on_failure is false).
PropensityFit fit_propensity(const StudyData& data, const PropensityDesign& design, const PropensityParams& init,
                             const QuadratureConfig& quad = {}, const OptimizerConfig& opt = {});

}  // namespace ipcwi
