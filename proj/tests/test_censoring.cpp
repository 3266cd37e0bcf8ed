#include <doctest.h>

#include <cmath>
#include <vector>

#include "ipcwi/censoring.hpp"
#include "ipcwi/errors.hpp"
#include "ipcwi/simulation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ipcwi;
using testutil::rel_err;

namespace {

CensoringParams params(std::vector<double> tc, double th, double tr) {
  CensoringParams p;
  p.theta_c = std::move(tc);
  p.theta_h = th;
  p.theta_r = tr;
  return p;
}

CensoringGroup make_group(const std::vector<double>& x, const std::vector<double>& time, const std::vector<int>& cens) {
  CensoringGroup g;
  g.rows.resize(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t j = 0; j < x.size(); ++j) g.rows(static_cast<Eigen::Index>(j), 0) = x[j];
  g.time = time;
  g.censored = cens;
  return g;
}

}  // namespace

TEST_CASE("censoring survival examples") {
  CHECK(censor_survival(1.0, 0.0, params({}, 1.0, 1.0)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(censor_survival(0.0, 0.3, params({}, 0.2, 2.0)) == 1.0);
  CHECK(std::abs(censor_survival(100.0, 0.0, params({}, 0.015, 1e-8)) - std::exp(-1.5)) <= 1e-6);
  CHECK_THROWS_AS(censor_survival(-1.0, 0.0, params({}, 1.0, 1.0)), DomainError);
  CHECK_THROWS_AS(censor_survival(1.0, 0.0, params({}, 0.0, 1.0)), DomainError);
}

TEST_CASE("censoring survival shape on grids") {
  for (double tr : {0.1, 1.25, 4.0}) {
    const auto p = params({}, 0.02, tr);
    double prev = 1.0;
    for (int k = 1; k <= 50; ++k) {
      const double s = censor_survival(5.0 * k, 0.1, p);
      CHECK(s < prev);
      CHECK(s > 0.0);
      CHECK(censor_survival(5.0 * k, 0.4, p) < s);
      prev = s;
    }
  }
  // heavier frailty, heavier tail at a fixed cumulative hazard
  double prev = 0.0;
  for (double tr : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0}) {
    const double s = censor_survival(100.0, 0.0, params({}, 0.02, tr));
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("signed Laplace derivative examples") {
  CHECK(laplace_deriv_signed(0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(laplace_deriv_signed(1, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::exp(log_laplace_deriv_signed(4, 2.0, 0.5)) == doctest::Approx(laplace_deriv_signed(4, 2.0, 0.5)));
  CHECK(std::isfinite(log_laplace_deriv_signed(400, 1e3, 1.25)));
  CHECK_THROWS_AS(laplace_deriv_signed(-1, 1.0, 1.0), DomainError);
}

TEST_CASE("signed Laplace derivative matches numerical differentiation, d <= 8") {
  for (double tr : {0.3, 0.7, 1.25, 2.0}) {
    for (double s : {0.5, 2.3, 7.0}) {
      for (int d = 1; d <= 8; ++d) {
        CHECK(rel_err(laplace_deriv_signed(d, s, tr), oracle::laplace_deriv_numeric(d, s, tr)) <= 1e-5);
      }
    }
  }
  // Independently, by the moment integral (-1)^d L^(d)(s) = E[e^d exp(-e s)].
  for (int d = 0; d <= 8; ++d) {
    CHECK(rel_err(laplace_deriv_signed(d, 2.3, 0.7), oracle::laplace_moment(d, 2.3, 0.7)) <= 1e-8);
  }
}

TEST_CASE("group log-likelihood hand examples") {
  const auto p = params({0.0}, 1.0, 1.0);
  CHECK(group_censor_log_likelihood(make_group({0.0}, {1.0}, {1}), p) ==
        doctest::Approx(-1.3862943611198906).epsilon(1e-13));
  for (double t : {0.5, 3.0, 40.0}) {
    const auto q = params({0.4}, 0.05, 1.7);
    CHECK(group_censor_log_likelihood(make_group({1.3}, {t}, {0}), q) ==
          doctest::Approx(std::log(censor_survival(t, 0.4 * 1.3, q))).epsilon(1e-13));
  }
}

TEST_CASE("no-frailty limit") {
  const auto g = make_group({0.5, -1.0, 2.0, 0.0}, {10.0, 25.0, 3.0, 60.0}, {1, 0, 1, 1});
  const auto p = params({0.3}, 0.02, 1e-9);
  double indep = 0.0;
  for (std::size_t j = 0; j < g.time.size(); ++j) {
    const double eta = 0.3 * g.rows(static_cast<Eigen::Index>(j), 0);
    indep += g.censored[j] * (std::log(0.02) + eta) - 0.02 * g.time[j] * std::exp(eta);
  }
  CHECK(std::abs(group_censor_log_likelihood(g, p) - indep) <= 1e-4);
}

TEST_CASE("group likelihood matches brute-force integration over the frailty") {
  DgpParams dgp;
  dgp.m = 60;
  dgp.n = 5;
  dgp.seed = 17;
  const auto sim = simulate_dataset(dgp);
  const auto groups = prepare_censoring_groups(sim.data, simulation_censoring_design());
  for (double tr : {0.3, 1.25, 3.0}) {
    const auto p = params({0.002, 0.015}, 0.015, tr);
    for (const auto& g : groups) {
      CHECK(rel_err(std::exp(group_censor_log_likelihood(g, p)), oracle::censoring_likelihood(g, p)) <= 1e-4);
    }
  }
  // smaller groups, every censoring count
  for (int d = 0; d <= 3; ++d) {
    std::vector<int> cens(3, 0);
    for (int k = 0; k < d; ++k) cens[static_cast<std::size_t>(k)] = 1;
    const auto g = make_group({0.2, 1.0, -0.5}, {4.0, 11.0, 30.0}, cens);
    const auto p = params({0.5}, 0.03, 0.8);
    CHECK(rel_err(std::exp(group_censor_log_likelihood(g, p)), oracle::censoring_likelihood(g, p)) <= 1e-4);
  }
}

TEST_CASE("member permutation leaves the group likelihood unchanged") {
  const auto p = params({0.3}, 0.02, 0.9);
  const auto a = make_group({0.5, -1.0, 2.0}, {10.0, 25.0, 3.0}, {1, 0, 1});
  const auto b = make_group({2.0, 0.5, -1.0}, {3.0, 10.0, 25.0}, {1, 1, 0});
  CHECK(group_censor_log_likelihood(a, p) == doctest::Approx(group_censor_log_likelihood(b, p)).epsilon(1e-13));
}

TEST_CASE("analytic censoring scores match central finite differences") {
  DgpParams dgp;
  dgp.m = 20;
  dgp.seed = 8;
  const auto sim = simulate_dataset(dgp);
  const auto groups = prepare_censoring_groups(sim.data, simulation_censoring_design());
  for (double tr : {1e-3, 0.4, 1.25}) {
    const auto p = params({0.01, 0.02}, 0.014, tr);
    for (const auto& g : groups) {
      const Eigen::VectorXd s = censoring_scores_psi(g, p);
      REQUIRE(s.size() == 4);
      for (int k = 0; k < 4; ++k) {
        auto shifted = [&](double rel) {
          auto q = p;
          if (k < 2) q.theta_c[static_cast<std::size_t>(k)] += rel;
          else if (k == 2) q.theta_h += rel * q.theta_h;
          else q.theta_r += rel * q.theta_r;
          return group_censor_log_likelihood(g, q);
        };
        const double scale = k == 2 ? p.theta_h : (k == 3 ? p.theta_r : 1.0);
        const double h = 1e-5;
        const double fd = (shifted(h) - shifted(-h)) / (2.0 * h * scale);
        CHECK(std::abs(s(k) - fd) <= 1e-4 * std::max(std::abs(fd), 1.0 / scale * 1e-2));
      }
    }
  }
}

TEST_CASE("pseudo-columns for own treatment and the proportion of others treated") {
  auto s = testutil::study({{{0.0, 0.0, 1, 1.0, 1}, {0.0, 0.0, 0, 2.0, 0}, {0.0, 0.0, 1, 3.0, 1}},
                            {{0.0, 0.0, 1, 1.0, 0}}});
  CensoringDesign design{{CensoringDesign::kTreatment, CensoringDesign::kPropOthersTreated, "L1"}};
  const auto groups = prepare_censoring_groups(s, design);
  CHECK(groups[0].rows(0, 0) == 1.0);
  CHECK(groups[0].rows(0, 1) == doctest::Approx(0.5));
  CHECK(groups[0].rows(1, 1) == doctest::Approx(1.0));
  CHECK(groups[1].rows(0, 1) == 0.0);
  CHECK(groups[0].censored_count() == 1);
  CHECK_THROWS_AS(prepare_censoring_groups(s, CensoringDesign{{"nope"}}), InputError);
}

TEST_CASE("fit_censoring on simulated data") {
  DgpParams dgp;
  dgp.m = 300;
  dgp.seed = 4;
  const auto sim = simulate_dataset(dgp);
  const auto design = simulation_censoring_design();
  const auto fit = fit_censoring(sim.data, design, default_censoring_init(sim.data, design));
  CHECK(fit.converged);
  const auto groups = prepare_censoring_groups(sim.data, design);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(4);
  for (const auto& g : groups) total += censoring_scores_psi(g, fit.params);
  // scaled to the optimizer's coordinates: mean log-likelihood, log theta_h, log theta_r
  CHECK(std::abs(total(0)) / 300.0 <= 1e-4);
  CHECK(std::abs(total(1)) / 300.0 <= 1e-4);
  CHECK(std::abs(total(2)) * fit.params.theta_h / 300.0 <= 1e-4);
  CHECK(std::abs(total(3)) * fit.params.theta_r / 300.0 <= 1e-4);

  auto up = fit.params;
  up.theta_h *= 1.05;
  double score_h = 0.0;
  for (const auto& g : groups) score_h += censoring_scores_psi(g, up)(2);
  CHECK(score_h < 0.0);
}

TEST_CASE("no censored observations is a model error") {
  auto s = testutil::study({{{1.0, 0.5, 1, 1.0, 1}, {2.0, 0.1, 0, 1.0, 1}}, {{0.5, 0.2, 1, 2.0, 1}}});
  const auto design = simulation_censoring_design();
  CHECK_THROWS_AS(fit_censoring(s, design, default_censoring_init(s, design)), ModelError);
}
