#include "ipcwi/censoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

void CensoringParams::validate() const {
  if (!(theta_h > 0.0) || !std::isfinite(theta_h)) {
    throw DomainError(fmt::format("baseline censoring hazard must be positive, got {}", theta_h));
  }
  if (!(theta_r > 0.0) || !std::isfinite(theta_r)) {
    throw DomainError(fmt::format("frailty variance must be positive, got {}", theta_r));
  }
  for (double v : theta_c) {
    if (!std::isfinite(v)) throw DomainError("non-finite censoring coefficient");
  }
}

CensoringGroup CensoringGroup::from(const GroupData& group, const CensoringDesign& design, const StudyData& study) {
  enum class Kind { covariate, treatment, others };
  std::vector<std::pair<Kind, std::size_t>> cols;
  for (const auto& c : design.columns) {
    if (c == CensoringDesign::kTreatment) {
      cols.emplace_back(Kind::treatment, 0);
    } else if (c == CensoringDesign::kPropOthersTreated) {
      cols.emplace_back(Kind::others, 0);
    } else {
      cols.emplace_back(Kind::covariate, study.covariate_index(c));
    }
  }
  const auto n = static_cast<Eigen::Index>(group.size());
  const int treated = group.treated_count();
  CensoringGroup out;
  out.rows.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& rec = group.members[static_cast<std::size_t>(j)];
    for (std::size_t c = 0; c < cols.size(); ++c) {
      double v = 0.0;
      switch (cols[c].first) {
        case Kind::covariate: v = rec.covariates.at(cols[c].second); break;
        case Kind::treatment: v = rec.treatment; break;
        case Kind::others: v = n > 1 ? static_cast<double>(treated - rec.treatment) / static_cast<double>(n - 1) : 0.0; break;
      }
      out.rows(j, static_cast<Eigen::Index>(c)) = v;
    }
    out.time.push_back(rec.observed_time);
    out.censored.push_back(1 - rec.event);
  }
  return out;
}

int CensoringGroup::censored_count() const {
  int d = 0;
  for (int c : censored) d += c;
  return d;
}

std::vector<CensoringGroup> prepare_censoring_groups(const StudyData& data, const CensoringDesign& design) {
  std::vector<CensoringGroup> out;
  out.reserve(data.groups.size());
  for (const auto& g : data.groups) out.push_back(CensoringGroup::from(g, design, data));
  return out;
}

double censor_survival(double t, double eta, const CensoringParams& params) {
  params.validate();
  if (!(t >= 0.0)) throw DomainError(fmt::format("censoring survival needs t >= 0, got {}", t));
  const double x = params.theta_h * t * std::exp(eta);
  return std::exp(-std::log1p(params.theta_r * x) / params.theta_r);
}

double log_laplace_deriv_signed(int d, double s, double theta_r) {
  if (d < 0) throw DomainError("derivative order must be nonnegative");
  if (!(s >= 0.0)) throw DomainError("Laplace argument must be nonnegative");
  if (!(theta_r > 0.0)) throw DomainError("frailty variance must be positive");
  double v = 0.0;
  for (int l = 1; l < d; ++l) v += std::log1p(l * theta_r);
  return v - (1.0 / theta_r + d) * std::log1p(theta_r * s);
}

double laplace_deriv_signed(int d, double s, double theta_r) {
  return std::exp(log_laplace_deriv_signed(d, s, theta_r));
}

namespace {

// [(1 + x) log(1 + x) - x] / x^2, accurate as x -> 0.
double frailty_curvature_ratio(double x) {
  if (std::abs(x) < 1e-4) return 0.5 - x / 6.0 + x * x / 12.0;
  return ((1.0 + x) * std::log1p(x) - x) / (x * x);
}

LikelihoodAndScore evaluate(const CensoringGroup& group, const CensoringParams& params, bool want_score) {
  params.validate();
  const auto q = static_cast<Eigen::Index>(params.theta_c.size());
  if (group.rows.cols() != q) {
    throw DomainError(fmt::format("censoring design has {} columns but theta_c has {} entries", group.rows.cols(), q));
  }
  const Eigen::Map<const Eigen::VectorXd> theta(params.theta_c.data(), q);
  const Eigen::VectorXd eta = group.rows * theta;
  const double th = params.theta_h;
  const double tr = params.theta_r;

  double hazard_part = 0.0;
  double cum = 0.0;  // sum_j X_ij exp(eta_ij)
  int d = 0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    cum += group.time[js] * std::exp(eta(j));
    if (group.censored[js]) {
      hazard_part += std::log(th) + eta(j);
      ++d;
    }
  }
  const double s = th * cum;
  LikelihoodAndScore out;
  out.value = hazard_part + log_laplace_deriv_signed(d, s, tr);
  if (!want_score) return out;

  const double x = tr * s;
  const double c = (1.0 + d * tr) / (1.0 + x);
  out.score = Eigen::VectorXd::Zero(q + 2);
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    const double w = group.censored[js] - c * th * group.time[js] * std::exp(eta(j));
    out.score.head(q) += w * group.rows.row(j).transpose();
  }
  out.score(q) = (d - c * s) / th;
  double dr = 0.0;
  for (int l = 1; l < d; ++l) dr += l / (1.0 + l * tr);
  dr += s * s * frailty_curvature_ratio(x) / (1.0 + x) - d * s / (1.0 + x);
  out.score(q + 1) = dr;
  return out;
}

}  // namespace

double group_censor_log_likelihood(const CensoringGroup& group, const CensoringParams& params) {
  return evaluate(group, params, false).value;
}

LikelihoodAndScore group_censor_log_likelihood_and_score(const CensoringGroup& group, const CensoringParams& params) {
  return evaluate(group, params, true);
}

Eigen::VectorXd censoring_scores_psi(const CensoringGroup& group, const CensoringParams& params) {
  return evaluate(group, params, true).score;
}

CensoringParams default_censoring_init(const StudyData& data, const CensoringDesign& design) {
  double censored = 0.0, exposure = 0.0;
  for (const auto& g : data.groups) {
    for (const auto& r : g.members) {
      censored += 1 - r.event;
      exposure += r.observed_time;
    }
  }
  CensoringParams init;
  init.theta_c.assign(design.dimension(), 0.0);
  init.theta_h = censored > 0 && exposure > 0 ? censored / exposure : 1.0;
  init.theta_r = 0.5;
  return init;
}

CensoringFit fit_censoring(const StudyData& data, const CensoringDesign& design, const CensoringParams& init,
                           const OptimizerConfig& opt) {
  require_valid(data);
  init.validate();
  if (init.theta_c.size() != design.dimension()) {
    throw DomainError(fmt::format("initial theta_c has {} entries but the design has {} columns", init.theta_c.size(),
                                  design.dimension()));
  }
  const auto groups = prepare_censoring_groups(data, design);
  int total_censored = 0;
  for (const auto& g : groups) total_censored += g.censored_count();
  if (total_censored == 0) {
    throw ModelError("censoring model is not identified: no censored observations in the data");
  }

  const std::size_t q = design.dimension();
  const double m = static_cast<double>(groups.size());
  auto unpack = [&](std::span<const double> u) {
    CensoringParams par;
    par.theta_c.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(q));
    par.theta_h = std::exp(u[q]);
    par.theta_r = std::exp(u[q + 1]);
    return par;
  };

  Objective objective = [&](std::span<const double> u, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (double v : u) {
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    }
    if (std::abs(u[q]) > 700.0 || u[q + 1] > 30.0 || u[q + 1] < -700.0) {
      return std::numeric_limits<double>::infinity();
    }
    const CensoringParams par = unpack(u);
    double total = 0.0;
    for (const auto& g : groups) {
      const auto ls = evaluate(g, par, true);
      total += ls.value;
      for (std::size_t k = 0; k < q; ++k) grad[k] -= ls.score(static_cast<Eigen::Index>(k)) / m;
      grad[q] -= par.theta_h * ls.score(static_cast<Eigen::Index>(q)) / m;
      grad[q + 1] -= par.theta_r * ls.score(static_cast<Eigen::Index>(q + 1)) / m;
    }
    return std::isfinite(total) ? -total / m : std::numeric_limits<double>::infinity();
  };

  std::vector<double> u0 = init.theta_c;
  u0.push_back(std::log(init.theta_h));
  u0.push_back(std::log(init.theta_r));
  const OptimizeResult res = minimize_bfgs(objective, std::move(u0), opt);

  CensoringFit fit;
  fit.params = unpack(res.x);
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.loglik = -res.objective * m;
  Eigen::VectorXd total_score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q + 2));
  for (const auto& g : groups) total_score += evaluate(g, fit.params, true).score;
  fit.gradient_norm = total_score.head(static_cast<Eigen::Index>(q + 1)).cwiseAbs().maxCoeff() / m;
  if (fit.params.theta_r < 1e-6) {
    fit.warnings.push_back(fmt::format("frailty variance estimate {:.3g} is at the boundary of the parameter space",
                                       fit.params.theta_r));
  }
  return fit;
}

}  // namespace ipcwi
