#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ipcwi/errors.hpp"
#include "ipcwi/inference.hpp"
#include "ipcwi/simulation.hpp"
#include "test_util.hpp"

using namespace ipcwi;

namespace {

struct Fitted {
  SimulatedStudy sim;
  StackedModel model;
  StackedTheta theta;
};

Fitted fitted_setup(int m, std::uint64_t seed, std::vector<TargetSpec> targets) {
  Fitted f;
  DgpParams dgp;
  dgp.m = m;
  dgp.seed = seed;
  f.sim = simulate_dataset(dgp);
  f.model.propensity_design = simulation_propensity_design();
  f.model.censoring_design = simulation_censoring_design();
  f.model.targets = std::move(targets);
  const auto cf = fit_censoring(f.sim.data, *f.model.censoring_design,
                                default_censoring_init(f.sim.data, *f.model.censoring_design));
  const auto pf = fit_propensity(f.sim.data, f.model.propensity_design,
                                 default_propensity_init(f.sim.data, f.model.propensity_design));
  f.theta.gamma = cf.params;
  f.theta.beta = pf.params;
  f.theta = solve_targets(f.sim.data, f.model, f.theta);
  return f;
}

Fitted known_setup(int m, std::uint64_t seed, std::vector<TargetSpec> targets) {
  Fitted f;
  DgpParams dgp;
  dgp.m = m;
  dgp.seed = seed;
  f.sim = simulate_dataset(dgp);
  f.model.propensity_design = simulation_propensity_design();
  f.model.censoring_design = simulation_censoring_design();
  f.model.estimate_propensity = false;
  f.model.estimate_censoring = false;
  f.model.targets = std::move(targets);
  f.theta.gamma = true_censoring_model(dgp).params;
  f.theta.beta = true_propensity_model(dgp).params;
  f.theta = solve_targets(f.sim.data, f.model, f.theta);
  return f;
}

void check_psd(const Eigen::MatrixXd& sigma) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const double norm = sigma.norm();
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * norm);
  CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

}  // namespace

TEST_CASE("known weights: sandwich SE is the i.i.d. SE of the group values") {
  const std::vector<TargetSpec> targets{{100, 0, 0.3}, {100, 1, 0.3}, {100, std::nullopt, 0.7}, {50, 0, 0.5}};
  const auto f = known_setup(150, 3, targets);
  const auto res = sandwich(f.sim.data, f.model, f.theta);
  CHECK(res.layout.nuisance_dimension() == 0);
  WeightModel wm;
  wm.propensity = {f.theta.beta, f.model.propensity_design, f.model.quad};
  wm.censoring = CensoringModel{*f.theta.gamma, *f.model.censoring_design};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto est = estimate_mu(f.sim.data, targets[k], wm);
    const double m = static_cast<double>(est.group_values.size());
    double ss = 0.0;
    for (double v : est.group_values) ss += (v - est.estimate) * (v - est.estimate);
    // the empirical sandwich divides by m, the i.i.d. plug-in variance too
    const double iid_se = std::sqrt(ss / m / m);
    CHECK(std::abs(res.target_se(k) - iid_se) <= 1e-10);
    CHECK(res.target_estimate(k) == doctest::Approx(est.estimate).epsilon(1e-14));
  }
  check_psd(res.sigma);
}

TEST_CASE("full stack: solution, PSD, Jacobian oracle") {
  const std::vector<TargetSpec> targets{{100, 0, 0.5}, {100, 1, 0.5}, {100, std::nullopt, 0.5}};
  const auto f = fitted_setup(120, 14, targets);
  const auto res = sandwich(f.sim.data, f.model, f.theta);
  CHECK(res.layout.dimension() == 4 + 4 + 3);
  CHECK(res.m == 120);
  check_psd(res.sigma);

  // Sum of psi at the solution, block by block.
  const PreparedStudy study(f.sim.data, f.model.propensity_design, f.model.censoring_design);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(11);
  for (std::size_t i = 0; i < study.size(); ++i) total += stacked_psi(study, i, f.model, f.theta);
  CHECK(total.tail(3).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(total.segment(4, 3).cwiseAbs().maxCoeff() <= 1e-4 * 120);

  // U against a Richardson-extrapolated derivative of the mean psi.
  const Eigen::VectorXd theta0 = pack(f.model, f.theta);
  auto mean_psi = [&](const Eigen::VectorXd& th) {
    const StackedTheta t = unpack(f.model, f.theta, th);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(th.size());
    for (std::size_t i = 0; i < study.size(); ++i) s += stacked_psi(study, i, f.model, t);
    return Eigen::VectorXd(s / static_cast<double>(study.size()));
  };
  for (Eigen::Index k = 0; k < theta0.size(); ++k) {
    auto central = [&](double h) {
      Eigen::VectorXd up = theta0, dn = theta0;
      up(k) += h;
      dn(k) -= h;
      return Eigen::VectorXd((mean_psi(up) - mean_psi(dn)) / (2.0 * h));
    };
    double h = 1e-3 * std::max(std::abs(theta0(k)), 1e-2);
    const std::string name = res.layout.names[static_cast<std::size_t>(k)];
    if (name == "theta_h" || name == "theta_r" || name == "theta_s") h = std::min(h, 0.25 * theta0(k));
    INFO(name, " = ", theta0(k));
    const Eigen::VectorXd rich = (4.0 * central(h / 2.0) - central(h)) / 3.0;
    for (Eigen::Index r = 0; r < theta0.size(); ++r) {
      const double u = -res.u_matrix(r, k);
      CHECK(std::abs(u - rich(r)) <= 1e-3 * std::max(std::abs(rich(r)), 1e-6 * res.u_matrix.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("joint and separate target stacks agree") {
  const std::vector<TargetSpec> both{{100, 0, 0.4}, {100, 1, 0.6}};
  const auto joint = fitted_setup(100, 9, both);
  const auto rj = sandwich(joint.sim.data, joint.model, joint.theta);
  for (std::size_t k = 0; k < both.size(); ++k) {
    auto sep = joint;
    sep.model.targets = {both[k]};
    sep.theta = solve_targets(sep.sim.data, sep.model, sep.theta);
    const auto rs = sandwich(sep.sim.data, sep.model, sep.theta);
    CHECK(std::abs(rs.target_estimate(0) - rj.target_estimate(k)) <= 1e-8);
    CHECK(std::abs(rs.target_se(0) - rj.target_se(k)) <= 1e-8);
  }
}

TEST_CASE("full and known stacks both give finite positive SEs") {
  const std::vector<TargetSpec> t{{100, 0, 0.5}};
  const auto full = fitted_setup(100, 21, t);
  auto known = full;
  known.model.estimate_censoring = false;
  known.model.estimate_propensity = false;
  const double a = sandwich(full.sim.data, full.model, full.theta).target_se(0);
  const double b = sandwich(known.sim.data, known.model, known.theta).target_se(0);
  CHECK(std::isfinite(a));
  CHECK(a > 0.0);
  CHECK(std::isfinite(b));
  CHECK(b > 0.0);
}

TEST_CASE("single-member hand example: target component vanishes at its value") {
  StudyData s;
  s.covariate_names = {"x"};
  s.groups.push_back({"g", {testutil::record("1", {0.0}, 1, 3.0, 1)}});
  StackedModel model;
  model.propensity_design = PropensityDesign{{"x"}, true};
  model.censoring_design = CensoringDesign{{"x"}};
  model.estimate_propensity = false;
  model.estimate_censoring = false;
  model.targets = {{5.0, 1, 0.5}};
  StackedTheta theta;
  theta.beta.theta_x = {0.0, 0.0};
  theta.beta.theta_s = 1e-12;
  // S_C(3) = 0.8 with theta_r = 1: theta_h * 3 = 0.25
  theta.gamma = CensoringParams{{0.0}, 0.25 / 3.0, 1.0};
  theta.targets = {2.5};
  const PreparedStudy study(s, model.propensity_design, model.censoring_design);
  CHECK(std::abs(stacked_psi(study, 0, model, theta)(0)) <= 1e-8);
}

TEST_CASE("contrasts") {
  const auto f = known_setup(80, 2, {{100, 0, 0.5}, {100, 0, 0.5}, {100, 1, 0.5}});
  const auto res = sandwich(f.sim.data, f.model, f.theta);
  const std::vector<double> first{1.0, 0.0, 0.0};
  CHECK(contrast(res, first).std_error == doctest::Approx(res.target_se(0)).epsilon(1e-14));
  CHECK(contrast(res, first).estimate == res.target_estimate(0));
  const std::vector<double> same{1.0, -1.0, 0.0};
  CHECK(contrast(res, same).estimate == 0.0);
  CHECK(contrast(res, same).std_error <= 1e-12);
  const std::vector<double> de{1.0, 0.0, -1.0};
  const auto c = contrast(res, de);
  const auto ci = wald_ci(c.estimate, c.std_error, 0.95);
  CHECK(ci.high - c.estimate == doctest::Approx(1.959963984540054 * c.std_error));
  CHECK(c.df == 80.0 - 2.0);
  CHECK_THROWS_AS(contrast(res, std::vector<double>{1.0}), DomainError);
}

TEST_CASE("Wald intervals") {
  const auto n = wald_ci(0.0, 1.0, 0.95);
  CHECK(n.low == doctest::Approx(-1.959963984540054).epsilon(1e-12));
  CHECK(n.high == doctest::Approx(1.959963984540054).epsilon(1e-12));
  const auto t = wald_ci(0.0, 1.0, 0.95, 1e6);
  CHECK(std::abs(t.high - n.high) <= 1e-4);
  const auto z = wald_ci(0.3, 0.0, 0.9);
  CHECK(z.low == 0.3);
  CHECK(z.high == 0.3);
  CHECK(wald_ci(0.0, 1.0, 0.95, 10.0).high == doctest::Approx(2.228138851986274).epsilon(1e-10));
  CHECK_THROWS_AS(wald_ci(0.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(wald_ci(0.0, -1.0, 0.95), DomainError);
}

TEST_CASE("degrees of freedom count the nuisance parameters and the targets involved") {
  const auto f = fitted_setup(60, 5, {{100, 0, 0.5}, {100, 1, 0.5}});
  const auto res = sandwich(f.sim.data, f.model, f.theta);
  CHECK(res.df(1) == 60.0 - 8.0 - 1.0);
  CHECK(res.df(2) == 60.0 - 8.0 - 2.0);
}

TEST_CASE("collinear propensity design makes U singular and names the block") {
  auto f = known_setup(60, 6, {{100, 0, 0.5}});
  for (auto& g : f.sim.data.groups) {
    for (auto& r : g.members) r.covariates[1] = r.covariates[0];
  }
  f.model.estimate_propensity = true;
  f.theta.beta.theta_x = {0.1, 0.05, 0.05};
  f.theta = solve_targets(f.sim.data, f.model, f.theta);
  try {
    sandwich(f.sim.data, f.model, f.theta);
    FAIL("expected a singular bread matrix");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("propensity") != std::string::npos);
  }
}

TEST_CASE("stacked vector round trip and layout names") {
  const auto f = known_setup(20, 1, {{100, 0, 0.5}});
  StackedModel full = f.model;
  full.estimate_censoring = true;
  full.estimate_propensity = true;
  const auto layout = make_layout(full, f.theta);
  CHECK(layout.names.front() == "theta_c[L1]");
  CHECK(layout.block_of(0) == "censoring");
  CHECK(layout.block_of(4) == "propensity");
  CHECK(layout.block_of(8) == "target");
  const auto flat = pack(full, f.theta);
  const auto back = unpack(full, f.theta, flat);
  CHECK(back.beta.theta_x == f.theta.beta.theta_x);
  CHECK(back.gamma->theta_h == f.theta.gamma->theta_h);
  CHECK(back.targets == f.theta.targets);
}
