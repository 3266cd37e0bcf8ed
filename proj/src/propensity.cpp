#include "ipcwi/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

void PropensityParams::validate() const {
  if (!(theta_s > 0.0) || !std::isfinite(theta_s)) {
    throw DomainError(fmt::format("random-intercept variance must be positive, got {}", theta_s));
  }
  if (!(compliance > 0.0 && compliance <= 1.0)) {
    throw DomainError(fmt::format("compliance multiplier must lie in (0,1], got {}", compliance));
  }
  for (double v : theta_x) {
    if (!std::isfinite(v)) throw DomainError("non-finite propensity coefficient");
  }
}

std::vector<std::string> PropensityDesign::labels() const {
  std::vector<std::string> out;
  if (intercept) out.emplace_back("(intercept)");
  out.insert(out.end(), columns.begin(), columns.end());
  return out;
}

void QuadratureConfig::validate() const {
  if (num_nodes < 5) throw DomainError(fmt::format("quadrature needs at least 5 nodes, got {}", num_nodes));
}

PropensityGroup PropensityGroup::from(const GroupData& group, const PropensityDesign& design,
                                      const StudyData& study) {
  std::vector<std::size_t> cols;
  for (const auto& c : design.columns) cols.push_back(study.covariate_index(c));
  const auto n = static_cast<Eigen::Index>(group.size());
  const auto p = static_cast<Eigen::Index>(design.dimension());
  PropensityGroup out;
  out.rows.resize(n, p);
  out.treatment.reserve(group.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& rec = group.members[static_cast<std::size_t>(j)];
    Eigen::Index c = 0;
    if (design.intercept) out.rows(j, c++) = 1.0;
    for (std::size_t col : cols) out.rows(j, c++) = rec.covariates.at(col);
    out.treatment.push_back(rec.treatment);
  }
  return out;
}

std::vector<PropensityGroup> prepare_propensity_groups(const StudyData& data, const PropensityDesign& design) {
  std::vector<PropensityGroup> out;
  out.reserve(data.groups.size());
  for (const auto& g : data.groups) out.push_back(PropensityGroup::from(g, design, data));
  return out;
}

double individual_prob(std::span<const double> covariates, double b, const PropensityParams& params) {
  if (covariates.size() != params.theta_x.size()) {
    throw DomainError(fmt::format("covariate length {} does not match {} coefficients", covariates.size(),
                                  params.theta_x.size()));
  }
  double eta = b;
  for (std::size_t k = 0; k < covariates.size(); ++k) eta += covariates[k] * params.theta_x[k];
  return params.compliance * expit(eta);
}

namespace {

// log Pr(A_ij | u) and its first two derivatives in the linear predictor u.
struct MemberTerms {
  double value;
  double d1;
  double d2;
};

MemberTerms member_terms(int a, double u, double rho) {
  // One exp and one log1p serve expit(u), expit(-u) and both softplus terms.
  const double e = std::exp(-std::abs(u));
  const double inv = 1.0 / (1.0 + e);
  const double s = u >= 0.0 ? inv : e * inv;
  const double sc = u >= 0.0 ? e * inv : inv;  // 1 - s without cancellation
  const double l1p = std::log1p(e);
  if (a == 1) return {(rho == 1.0 ? 0.0 : std::log(rho)) - (std::max(-u, 0.0) + l1p), sc, -s * sc};
  if (rho == 1.0) return {-(std::max(u, 0.0) + l1p), -s, -s * sc};
  const double q = 1.0 - rho * s;
  return {std::log1p(-rho * s), -rho * s * sc / q, -rho * s * sc * (1.0 - 2.0 * s + rho * s * s) / (q * q)};
}

// Quadrature for E[g(b)], b ~ N(0, theta_s): sum_k exp(log_weight[k]) g(b[k]).
struct NodeSet {
  std::vector<double> b;
  std::vector<double> log_weight;
};

NodeSet standard_nodes(const GaussHermiteRule& rule, double theta_s) {
  NodeSet ns;
  const double scale = std::sqrt(2.0 * theta_s);
  const double log_norm = -0.5 * std::log(std::numbers::pi);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    ns.b.push_back(scale * rule.nodes[k]);
    ns.log_weight.push_back(rule.log_weights[k] + log_norm);
  }
  return ns;
}

// Rule recentred on the mode of log f(b) + log phi(b) and scaled by its curvature.
NodeSet adaptive_nodes(const GaussHermiteRule& rule, const Eigen::VectorXd& eta, const std::vector<int>& a,
                       const PropensityParams& params) {
  const double ts = params.theta_s;
  auto objective = [&](double b, double* g1, double* g2) {
    double v = -0.5 * b * b / ts, d1 = -b / ts, d2 = -1.0 / ts;
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      const auto t = member_terms(a[static_cast<std::size_t>(j)], eta(j) + b, params.compliance);
      v += t.value;
      d1 += t.d1;
      d2 += t.d2;
    }
    if (g1) *g1 = d1;
    if (g2) *g2 = d2;
    return v;
  };

  double b = 0.0, g1 = 0.0, g2 = 0.0;
  double g = objective(b, &g1, &g2);
  for (int it = 0; it < 100; ++it) {
    if (std::abs(g1) < 1e-12 * (1.0 + std::abs(g))) break;
    double step = g2 < 0.0 ? -g1 / g2 : std::copysign(std::min(1.0, std::abs(g1) * ts), g1);
    double candidate = objective(b + step, nullptr, nullptr);
    int halvings = 0;
    while (candidate < g && halvings++ < 60) {
      step *= 0.5;
      candidate = objective(b + step, nullptr, nullptr);
    }
    if (candidate < g) break;
    b += step;
    g = objective(b, &g1, &g2);
  }
  const double sigma = g2 < 0.0 ? 1.0 / std::sqrt(-g2) : std::sqrt(ts);

  NodeSet ns;
  const double log_phi_norm = -0.5 * std::log(2.0 * std::numbers::pi * ts);
  const double log_jac = std::log(std::sqrt(2.0) * sigma);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double x = rule.nodes[k];
    const double bk = b + std::sqrt(2.0) * sigma * x;
    ns.b.push_back(bk);
    ns.log_weight.push_back(rule.log_weights[k] + x * x + log_jac + log_phi_norm - 0.5 * bk * bk / ts);
  }
  return ns;
}

LikelihoodAndScore evaluate(const PropensityGroup& group, const PropensityParams& params,
                            const QuadratureConfig& quad, bool want_score) {
  params.validate();
  quad.validate();
  const auto p = static_cast<Eigen::Index>(params.theta_x.size());
  if (group.rows.cols() != p) {
    throw DomainError(fmt::format("design has {} columns but theta_x has {} entries", group.rows.cols(), p));
  }
  const Eigen::Index n = group.rows.rows();
  const Eigen::Map<const Eigen::VectorXd> theta(params.theta_x.data(), p);
  const Eigen::VectorXd eta = group.rows * theta;

  const auto& rule = gauss_hermite(quad.num_nodes);
  const NodeSet nodes =
      quad.adaptive ? adaptive_nodes(rule, eta, group.treatment, params) : standard_nodes(rule, params.theta_s);
  const auto K = static_cast<Eigen::Index>(nodes.b.size());

  std::vector<double> log_terms(static_cast<std::size_t>(K));
  Eigen::MatrixXd d1;
  std::vector<double> curvature;
  if (want_score) {
    d1.resize(n, K);
    curvature.resize(static_cast<std::size_t>(K));
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    double lk = nodes.log_weight[ks];
    double sum_d1 = 0.0, sum_d2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto t = member_terms(group.treatment[static_cast<std::size_t>(j)], eta(j) + nodes.b[ks], params.compliance);
      lk += t.value;
      if (want_score) {
        d1(j, k) = t.d1;
        sum_d1 += t.d1;
        sum_d2 += t.d2;
      }
    }
    log_terms[ks] = lk;
    if (want_score) curvature[ks] = sum_d1 * sum_d1 + sum_d2;
  }

  LikelihoodAndScore out;
  out.value = log_sum_exp(log_terms);
  if (!want_score) return out;

  out.score = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd member_weight = Eigen::VectorXd::Zero(n);
  double ds = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double r = std::exp(log_terms[ks] - out.value);
    member_weight += r * d1.col(k);
    ds += r * curvature[ks];
  }
  out.score.head(p) = group.rows.transpose() * member_weight;
  out.score(p) = 0.5 * ds;
  return out;
}

}  // namespace

double group_log_propensity(const PropensityGroup& group, const PropensityParams& params,
                            const QuadratureConfig& quad) {
  return evaluate(group, params, quad, false).value;
}

double group_propensity(const PropensityGroup& group, const PropensityParams& params, const QuadratureConfig& quad) {
  const double lp = group_log_propensity(group, params, quad);
  const double v = std::exp(lp);
  if (!(v > 0.0) || !std::isfinite(lp)) {
    throw NumericalError(fmt::format("group propensity is not positive (log value {}, {} members, {} treated)", lp,
                                     group.treatment.size(),
                                     std::count(group.treatment.begin(), group.treatment.end(), 1)));
  }
  return v;
}

LikelihoodAndScore group_log_likelihood_and_score(const PropensityGroup& group, const PropensityParams& params,
                                                  const QuadratureConfig& quad) {
  return evaluate(group, params, quad, true);
}

Eigen::VectorXd propensity_scores_psi(const PropensityGroup& group, const PropensityParams& params,
                                      const QuadratureConfig& quad) {
  return evaluate(group, params, quad, true).score;
}

PropensityParams default_propensity_init(const StudyData& data, const PropensityDesign& design, double compliance) {
  PropensityParams init;
  init.compliance = compliance;
  init.theta_x.assign(design.dimension(), 0.0);
  init.theta_s = 0.1;
  if (design.intercept) {
    double treated = 0.0, total = 0.0;
    for (const auto& g : data.groups) {
      treated += g.treated_count();
      total += static_cast<double>(g.size());
    }
    const double rate = std::clamp(treated / std::max(1.0, total) / compliance, 0.01, 0.99);
    init.theta_x[0] = std::log(rate / (1.0 - rate));
  }
  return init;
}

PropensityFit fit_propensity(const StudyData& data, const PropensityDesign& design, const PropensityParams& init,
                             const QuadratureConfig& quad, const OptimizerConfig& opt) {
  require_valid(data);
  init.validate();
  quad.validate();
  if (data.groups.size() < 2) throw ModelError("propensity model needs at least two groups");
  if (init.theta_x.size() != design.dimension()) {
    throw DomainError(fmt::format("initial theta_x has {} entries but the design has {} columns", init.theta_x.size(),
                                  design.dimension()));
  }
  std::size_t treated = 0, total = data.num_individuals();
  for (const auto& g : data.groups) treated += static_cast<std::size_t>(g.treated_count());
  if (treated == 0 || treated == total) {
    throw ModelError("propensity model is not identified: every individual has the same treatment (separation)");
  }

  const auto groups = prepare_propensity_groups(data, design);
  const std::size_t p = design.dimension();
  const double m = static_cast<double>(groups.size());

  auto unpack = [&](std::span<const double> u) {
    PropensityParams par;
    par.theta_x.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(p));
    par.theta_s = std::exp(u[p]);
    par.compliance = init.compliance;
    return par;
  };

  Objective objective = [&](std::span<const double> u, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    if (!std::isfinite(u[p]) || u[p] > 30.0 || u[p] < -700.0) return std::numeric_limits<double>::infinity();
    const PropensityParams par = unpack(u);
    double total_ll = 0.0;
    for (const auto& g : groups) {
      const auto ls = evaluate(g, par, quad, true);
      total_ll += ls.value;
      for (std::size_t k = 0; k < p; ++k) grad[k] -= ls.score(static_cast<Eigen::Index>(k)) / m;
      grad[p] -= par.theta_s * ls.score(static_cast<Eigen::Index>(p)) / m;
    }
    return -total_ll / m;
  };

  std::vector<double> u0 = init.theta_x;
  u0.push_back(std::log(init.theta_s));
  const OptimizeResult res = minimize_bfgs(objective, std::move(u0), opt);

  PropensityFit fit;
  fit.params = unpack(res.x);
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.loglik = -res.objective * m;

  Eigen::VectorXd total_score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
  for (const auto& g : groups) total_score += evaluate(g, fit.params, quad, true).score;
  fit.gradient_norm = total_score.head(static_cast<Eigen::Index>(p)).cwiseAbs().maxCoeff() / m;

  constexpr double kSeparationBound = 25.0;
  for (std::size_t k = 0; k < p; ++k) {
    if (std::abs(fit.params.theta_x[k]) > kSeparationBound) {
      fit.warnings.push_back(fmt::format("coefficient '{}' = {:.4g} exceeds {}; possible separation",
                                         design.labels()[k], fit.params.theta_x[k], kSeparationBound));
    }
  }
  if (fit.params.theta_s < 1e-6) {
    fit.warnings.push_back(
        fmt::format("random-intercept variance estimate {:.3g} is at the boundary of the parameter space",
                    fit.params.theta_s));
  }
  return fit;
}

}  // namespace ipcwi
