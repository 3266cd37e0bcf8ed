#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipcwi/data.hpp"
#include "ipcwi/numerics.hpp"
#include "ipcwi/propensity.hpp"

namespace ipcwi {

// Shared gamma-frailty proportional hazards model for the censoring time:
//   hazard_ij(c | e_i) = theta_h * e_i * exp(Ltilde_ij theta_c),  e_i ~ Gamma(mean 1, variance theta_r).
// In this model the "event" is censoring: a member with event == 0 has an
// observed censoring time, a member with event == 1 is censored for C.
struct CensoringParams {
  std::vector<double> theta_c;
  double theta_h = 0.01;  // constant baseline hazard
  double theta_r = 1.0;   // frailty variance

  void validate() const;  // throws DomainError
};

// Columns of Ltilde_ij. Names refer to study covariates, plus two derived
// pseudo-columns: own treatment and the proportion of other group members
// treated (0 for single-member groups).
struct CensoringDesign {
  static constexpr const char* kTreatment = "treatment";
  static constexpr const char* kPropOthersTreated = "prop_others_treated";

  std::vector<std::string> columns;

  std::size_t dimension() const { return columns.size(); }
};

struct CensoringGroup {
  Eigen::MatrixXd rows;       // n x q
  std::vector<double> time;   // X_ij
  std::vector<int> censored;  // 1 - Delta_ij

  static CensoringGroup from(const GroupData& group, const CensoringDesign& design, const StudyData& study);
  int censored_count() const;
};

std::vector<CensoringGroup> prepare_censoring_groups(const StudyData& data, const CensoringDesign& design);

// Marginal censoring survival {1 / (theta_r theta_h t e^eta + 1)}^(1/theta_r).
double censor_survival(double t, double eta, const CensoringParams& params);

// (-1)^d L^(d)(s) for the gamma Laplace transform L(s) = (1 + theta_r s)^(-1/theta_r):
//   prod_{l<d} (1 + l theta_r) * (1 + theta_r s)^-(1/theta_r + d).
double log_laplace_deriv_signed(int d, double s, double theta_r);
double laplace_deriv_signed(int d, double s, double theta_r);

double group_censor_log_likelihood(const CensoringGroup& group, const CensoringParams& params);

// Score with respect to (theta_c..., theta_h, theta_r), length q + 2.
LikelihoodAndScore group_censor_log_likelihood_and_score(const CensoringGroup& group, const CensoringParams& params);
Eigen::VectorXd censoring_scores_psi(const CensoringGroup& group, const CensoringParams& params);

struct CensoringFit {
  CensoringParams params;
  bool converged = false;
  double loglik = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<std::string> warnings;
};

CensoringParams default_censoring_init(const StudyData& data, const CensoringDesign& design);

// Maximum likelihood fit with theta_h, theta_r on the log scale. Throws
// ModelError when no member is censored (no information on the censoring time).
CensoringFit fit_censoring(const StudyData& data, const CensoringDesign& design, const CensoringParams& init,
                           const OptimizerConfig& opt = {});

}  // namespace ipcwi
