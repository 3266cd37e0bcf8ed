#include "ipcwi/inference.hpp"

#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

std::string BlockLayout::block_of(std::size_t index) const {
  if (index >= target_offset) return "target";
  if (propensity_size > 0 && index >= propensity_offset) return "propensity";
  return "censoring";
}

BlockLayout make_layout(const StackedModel& model, const StackedTheta& theta) {
  BlockLayout layout;
  std::size_t offset = 0;
  if (model.censoring_in_stack()) {
    if (!theta.gamma) throw DomainError("stacked model has a censoring block but no censoring parameters");
    layout.censoring_offset = offset;
    layout.censoring_size = theta.gamma->theta_c.size() + 2;
    for (const auto& c : model.censoring_design->columns) layout.names.push_back("theta_c[" + c + "]");
    layout.names.emplace_back("theta_h");
    layout.names.emplace_back("theta_r");
    offset += layout.censoring_size;
  }
  layout.propensity_offset = offset;
  if (model.estimate_propensity) {
    layout.propensity_size = theta.beta.theta_x.size() + 1;
    for (const auto& c : model.propensity_design.labels()) layout.names.push_back("theta_x[" + c + "]");
    layout.names.emplace_back("theta_s");
    offset += layout.propensity_size;
  }
  layout.target_offset = offset;
  layout.target_size = model.targets.size();
  for (const auto& t : model.targets) layout.names.push_back(t.label());
  return layout;
}

Eigen::VectorXd pack(const StackedModel& model, const StackedTheta& theta) {
  const BlockLayout layout = make_layout(model, theta);
  if (theta.targets.size() != model.targets.size()) {
    throw DomainError(fmt::format("{} target values for {} targets", theta.targets.size(), model.targets.size()));
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(layout.dimension()));
  Eigen::Index k = 0;
  if (layout.censoring_size > 0) {
    for (double v : theta.gamma->theta_c) flat(k++) = v;
    flat(k++) = theta.gamma->theta_h;
    flat(k++) = theta.gamma->theta_r;
  }
  if (layout.propensity_size > 0) {
    for (double v : theta.beta.theta_x) flat(k++) = v;
    flat(k++) = theta.beta.theta_s;
  }
  for (double v : theta.targets) flat(k++) = v;
  return flat;
}

StackedTheta unpack(const StackedModel& model, const StackedTheta& like, const Eigen::VectorXd& flat) {
  const BlockLayout layout = make_layout(model, like);
  if (static_cast<std::size_t>(flat.size()) != layout.dimension()) throw DomainError("stacked vector has wrong size");
  StackedTheta out = like;
  Eigen::Index k = 0;
  if (layout.censoring_size > 0) {
    for (double& v : out.gamma->theta_c) v = flat(k++);
    out.gamma->theta_h = flat(k++);
    out.gamma->theta_r = flat(k++);
  }
  if (layout.propensity_size > 0) {
    for (double& v : out.beta.theta_x) v = flat(k++);
    out.beta.theta_s = flat(k++);
  }
  out.targets.resize(model.targets.size());
  for (double& v : out.targets) v = flat(k++);
  return out;
}

namespace {

std::optional<CensoringDesign> design_of(const StackedModel& model) { return model.censoring_design; }

struct CensoringState {
  Eigen::VectorXd score;  // empty when the block is not stacked
  std::vector<double> survival;
  int floored = 0;
};

struct PropensityState {
  Eigen::VectorXd score;  // empty when the block is not stacked
  double log_propensity = 0.0;
};

CensoringState censoring_state(const PreparedStudy& study, std::size_t i, const StackedModel& model,
                               const std::optional<CensoringParams>& gamma) {
  CensoringState st;
  const CensoringGroup* cg = study.censoring_group(i);
  st.survival = member_censor_survival(cg, study.group(i).size(), model.censoring_design ? gamma : std::optional<CensoringParams>{},
                                       &st.floored);
  if (model.censoring_in_stack()) st.score = censoring_scores_psi(*cg, *gamma);
  return st;
}

PropensityState propensity_state(const PreparedStudy& study, std::size_t i, const StackedModel& model,
                                 const PropensityParams& beta) {
  PropensityState st;
  if (model.estimate_propensity) {
    auto ls = group_log_likelihood_and_score(study.propensity_group(i), beta, model.quad);
    st.log_propensity = ls.value;
    st.score = std::move(ls.score);
  } else {
    st.log_propensity = group_log_propensity(study.propensity_group(i), beta, model.quad);
  }
  return st;
}

bool underflows(double log_propensity) { return !(log_propensity >= std::log(kPropensityUnderflow)); }

Eigen::VectorXd target_values(const GroupData& group, const StackedModel& model, const CensoringState& cs,
                              const PropensityState& ps) {
  GroupWeights w;
  w.log_propensity = ps.log_propensity;
  w.censor_survival = cs.survival;
  Eigen::VectorXd f(static_cast<Eigen::Index>(model.targets.size()));
  for (std::size_t k = 0; k < model.targets.size(); ++k) {
    f(static_cast<Eigen::Index>(k)) = *group_ipcw(group, model.targets[k], w);
  }
  return f;
}

Eigen::VectorXd assemble(const BlockLayout& layout, const CensoringState& cs, const PropensityState& ps,
                         const Eigen::VectorXd& f, const StackedTheta& theta) {
  Eigen::VectorXd psi(static_cast<Eigen::Index>(layout.dimension()));
  if (layout.censoring_size > 0) psi.segment(static_cast<Eigen::Index>(layout.censoring_offset), cs.score.size()) = cs.score;
  if (layout.propensity_size > 0) psi.segment(static_cast<Eigen::Index>(layout.propensity_offset), ps.score.size()) = ps.score;
  for (std::size_t k = 0; k < layout.target_size; ++k) {
    psi(static_cast<Eigen::Index>(layout.target_offset + k)) = f(static_cast<Eigen::Index>(k)) - theta.targets[k];
  }
  return psi;
}

// d/dx of a vector function at x0. Central difference with step h; when the
// parameter is positive and x0 - h would leave the domain, a second-order
// one-sided difference is used instead.
Eigen::VectorXd derivative(const std::function<Eigen::VectorXd(double)>& fn, double x0, double h, bool positive,
                           const Eigen::VectorXd& f0) {
  if (positive && x0 - h <= 0.0) {
    return (-3.0 * f0 + 4.0 * fn(x0 + h) - fn(x0 + 2.0 * h)) / (2.0 * h);
  }
  return (fn(x0 + h) - fn(x0 - h)) / (2.0 * h);
}

void validate_theta(const StackedModel& model, const StackedTheta& theta) {
  for (const auto& t : model.targets) t.validate();
  theta.beta.validate();
  if (model.censoring_design) {
    if (!theta.gamma) throw DomainError("censoring design given without censoring parameters");
    theta.gamma->validate();
  }
}

}  // namespace

StackedTheta solve_targets(const StudyData& data, const StackedModel& model, StackedTheta theta) {
  WeightModel wm;
  wm.propensity = {theta.beta, model.propensity_design, model.quad};
  if (model.censoring_design) wm.censoring = CensoringModel{*theta.gamma, *model.censoring_design};
  const auto estimates = estimate_mu(data, model.targets, wm);
  theta.targets.clear();
  for (const auto& e : estimates) theta.targets.push_back(e.estimate);
  return theta;
}

Eigen::VectorXd stacked_psi(const PreparedStudy& study, std::size_t i, const StackedModel& model,
                            const StackedTheta& theta) {
  validate_theta(model, theta);
  const BlockLayout layout = make_layout(model, theta);
  const auto cs = censoring_state(study, i, model, theta.gamma);
  const auto ps = propensity_state(study, i, model, theta.beta);
  if (underflows(ps.log_propensity)) {
    throw NumericalError(fmt::format("group '{}' has a numerically zero propensity", study.group(i).group_id));
  }
  return assemble(layout, cs, ps, target_values(study.group(i), model, cs, ps), theta);
}

double SandwichResult::target_se(std::size_t k) const {
  const auto idx = static_cast<Eigen::Index>(layout.target_offset + k);
  return std::sqrt(std::max(0.0, sigma(idx, idx)) / static_cast<double>(m));
}

Eigen::MatrixXd SandwichResult::target_covariance() const {
  const auto off = static_cast<Eigen::Index>(layout.target_offset);
  const auto n = static_cast<Eigen::Index>(layout.target_size);
  return sigma.block(off, off, n, n);
}

double SandwichResult::df(std::size_t targets_involved) const {
  return static_cast<double>(m) - static_cast<double>(layout.nuisance_dimension() + targets_involved);
}

SandwichResult sandwich(const StudyData& data, const StackedModel& model, const StackedTheta& theta_hat,
                        const JacobianConfig& jac) {
  require_valid(data);
  validate_theta(model, theta_hat);
  if (!(jac.relative_step > 0.0)) throw DomainError("Jacobian step must be positive");

  const PreparedStudy study(data, model.propensity_design, design_of(model));
  SandwichResult res;
  res.layout = make_layout(model, theta_hat);
  res.targets = model.targets;
  res.theta = pack(model, theta_hat);
  const BlockLayout& layout = res.layout;
  const auto dim = static_cast<Eigen::Index>(layout.dimension());
  if (dim == 0) throw DomainError("nothing to stack");

  Eigen::MatrixXd jsum = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd vsum = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd psum = Eigen::VectorXd::Zero(dim);

  auto step_for = [&](double x) { return jac.relative_step * std::max(1.0, std::abs(x)); };

  for (std::size_t i = 0; i < study.size(); ++i) {
    const GroupData& group = study.group(i);
    const auto cs0 = censoring_state(study, i, model, theta_hat.gamma);
    const auto ps0 = propensity_state(study, i, model, theta_hat.beta);
    if (underflows(ps0.log_propensity)) {
      ++res.excluded;
      continue;
    }
    res.floored_weights += cs0.floored;
    const Eigen::VectorXd f0 = target_values(group, model, cs0, ps0);
    const Eigen::VectorXd psi0 = assemble(layout, cs0, ps0, f0, theta_hat);
    psum += psi0;
    vsum.noalias() += psi0 * psi0.transpose();

    // Censoring block: perturbing gamma moves psi_c and the target rows only.
    if (layout.censoring_size > 0) {
      const std::size_t q = theta_hat.gamma->theta_c.size();
      for (std::size_t k = 0; k < layout.censoring_size; ++k) {
        auto fn = [&](double x) {
          CensoringParams g = *theta_hat.gamma;
          if (k < q) g.theta_c[k] = x;
          else if (k == q) g.theta_h = x;
          else g.theta_r = x;
          const auto cs = censoring_state(study, i, model, g);
          return assemble(layout, cs, ps0, target_values(group, model, cs, ps0), theta_hat);
        };
        const double x0 = res.theta(static_cast<Eigen::Index>(layout.censoring_offset + k));
        jsum.col(static_cast<Eigen::Index>(layout.censoring_offset + k)) +=
            derivative(fn, x0, step_for(x0), k >= q, psi0);
      }
    }
    // Propensity block: perturbing beta moves psi_x and the target rows only.
    if (layout.propensity_size > 0) {
      const std::size_t p = theta_hat.beta.theta_x.size();
      for (std::size_t k = 0; k < layout.propensity_size; ++k) {
        auto fn = [&](double x) {
          PropensityParams b = theta_hat.beta;
          if (k < p) b.theta_x[k] = x;
          else b.theta_s = x;
          const auto ps = propensity_state(study, i, model, b);
          return assemble(layout, cs0, ps, target_values(group, model, cs0, ps), theta_hat);
        };
        const double x0 = res.theta(static_cast<Eigen::Index>(layout.propensity_offset + k));
        jsum.col(static_cast<Eigen::Index>(layout.propensity_offset + k)) +=
            derivative(fn, x0, step_for(x0), k == p, psi0);
      }
    }
    // Target rows are linear in their own parameter with slope -1.
    for (std::size_t k = 0; k < layout.target_size; ++k) {
      const auto idx = static_cast<Eigen::Index>(layout.target_offset + k);
      jsum(idx, idx) -= 1.0;
    }
  }

  res.m = study.size() - res.excluded;
  if (res.m == 0) throw DomainError("every group was excluded for a numerically zero propensity");
  const double m = static_cast<double>(res.m);
  res.u_matrix = -jsum / m;
  res.v_matrix = vsum / m;
  res.max_abs_psi_sum = psum.cwiseAbs().maxCoeff();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(res.u_matrix, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  res.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(smin > 1e-12 * smax)) {
    const Eigen::VectorXd null_dir = svd.matrixV().col(sv.size() - 1);
    Eigen::Index worst = 0;
    null_dir.cwiseAbs().maxCoeff(&worst);
    const auto w = static_cast<std::size_t>(worst);
    throw NumericalError(fmt::format("bread matrix U is singular (condition number {:.3g}); near-collinear direction "
                                     "loads on '{}' in the {} block",
                                     res.condition_number, layout.names[w], layout.block_of(w)));
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(res.u_matrix);
  const Eigen::MatrixXd u_inv = lu.inverse();
  Eigen::MatrixXd sigma = u_inv * res.v_matrix * u_inv.transpose();
  res.sigma = 0.5 * (sigma + sigma.transpose());
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (res.sigma(k, k) < 0.0 || !std::isfinite(res.sigma(k, k))) {
      throw NumericalError(fmt::format("sandwich variance for '{}' is {}", layout.names[static_cast<std::size_t>(k)],
                                       res.sigma(k, k)));
    }
  }
  return res;
}

ContrastEstimate contrast(const SandwichResult& result, std::span<const double> weights) {
  if (weights.size() != result.num_targets()) {
    throw DomainError(fmt::format("contrast has {} weights for {} targets", weights.size(), result.num_targets()));
  }
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const auto off = static_cast<Eigen::Index>(result.layout.target_offset);
  const Eigen::VectorXd est = result.theta.segment(off, w.size());
  ContrastEstimate out;
  out.estimate = w.dot(est);
  const double var = w.dot(result.target_covariance() * w) / static_cast<double>(result.m);
  out.std_error = std::sqrt(std::max(0.0, var));
  std::size_t involved = 0;
  for (double v : weights) involved += v != 0.0;
  out.df = result.df(std::max<std::size_t>(1, involved));
  return out;
}

Interval wald_ci(double estimate, double std_error, double level, std::optional<double> df) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError(fmt::format("confidence level must lie in (0,1), got {}", level));
  if (!(std_error >= 0.0)) throw DomainError("standard error must be nonnegative");
  const double p = 0.5 + 0.5 * level;
  const double q = df ? student_t_quantile(p, *df) : normal_quantile(p);
  return {estimate - q * std_error, estimate + q * std_error};
}

}  // namespace ipcwi
