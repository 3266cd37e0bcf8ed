#include <doctest.h>

#include <cmath>

#include "ipcwi/errors.hpp"
#include "ipcwi/numerics.hpp"
#include "ipcwi/simulation.hpp"

using namespace ipcwi;

TEST_CASE("covariate distribution: mean L1 near 2") {
  DgpParams p;
  p.m = 100'000;
  p.seed = 31;
  const auto sim = simulate_dataset(p);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& g : sim.data.groups) {
    for (const auto& r : g.members) {
      sum += r.covariates[0];
      CHECK_MESSAGE(r.covariates[0] <= 10.0, "L1 is capped");
      ++count;
    }
  }
  CHECK(count == 1'000'000);
  const double mean = sum / static_cast<double>(count);
  CHECK(mean >= 1.97);
  CHECK(mean <= 2.01);
}

TEST_CASE("treatment probability at zero covariates and no group effect") {
  DgpParams p;
  p.m = 10'000;
  p.seed = 32;
  p.treatment_coef = {0.2727, 0.0, 0.0};
  p.treatment_re_variance = 1e-12;
  const auto sim = simulate_dataset(p);
  double treated = 0.0;
  for (const auto& g : sim.data.groups) treated += g.treated_count();
  CHECK(std::abs(treated / 1e5 - expit(0.2727)) <= 0.01);
  CHECK(expit(0.2727) == doctest::Approx(0.5678).epsilon(1e-4));
}

TEST_CASE("determinism and shape") {
  DgpParams p;
  p.m = 50;
  p.n = 7;
  p.seed = 5;
  const auto a = simulate_dataset(p);
  const auto b = simulate_dataset(p);
  REQUIRE(a.data.groups.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    REQUIRE(a.data.groups[i].size() == 7);
    for (std::size_t j = 0; j < 7; ++j) {
      const auto& x = a.data.groups[i].members[j];
      const auto& y = b.data.groups[i].members[j];
      CHECK(x.observed_time == y.observed_time);
      CHECK(x.covariates == y.covariates);
      CHECK(x.treatment == y.treatment);
    }
  }
  p.seed = 6;
  CHECK(simulate_dataset(p).data.groups[0].members[0].observed_time != a.data.groups[0].members[0].observed_time);
  CHECK(a.data.covariate_names == std::vector<std::string>{"L1", "L2"});
}

TEST_CASE("observed data agree with the potential outcomes") {
  DgpParams p;
  p.m = 200;
  p.seed = 8;
  const auto sim = simulate_dataset(p);
  const auto& o = sim.outcomes;
  int censored = 0;
  for (std::size_t i = 0; i < sim.data.groups.size(); ++i) {
    const auto& g = sim.data.groups[i];
    const int treated = g.treated_count();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto& r = g.members[j];
      const double t = o.event_time[i][j];
      const double c = o.censor_time[i][j];
      CHECK(t == o.oracle.groups[i].at(static_cast<int>(j), r.treatment, treated - r.treatment));
      CHECK(r.observed_time == std::min(t, c));
      CHECK(r.event == (c < t ? 0 : 1));
      censored += 1 - r.event;
    }
  }
  CHECK(censored > 0);
}

TEST_CASE("potential times share one uniform per member") {
  DgpParams p;
  p.m = 20;
  p.seed = 9;
  const auto sim = simulate_dataset(p);
  // Exponential times from a common uniform are increasing in their mean.
  for (std::size_t i = 0; i < sim.data.groups.size(); ++i) {
    const auto& g = sim.outcomes.oracle.groups[i];
    for (int j = 0; j < g.n; ++j) {
      for (int k = 0; k + 1 < g.n; ++k) CHECK(g.at(j, 1, k + 1) >= g.at(j, 1, k));
      CHECK(g.at(j, 1, 0) >= g.at(j, 0, 0));
      const double ratio = g.at(j, 1, 0) / g.at(j, 0, 0);
      const auto& r = sim.data.groups[i].members[static_cast<std::size_t>(j)];
      CHECK(ratio == doctest::Approx(p.outcome_mean(1, 0, r.covariates[0], r.covariates[1]) /
                                     p.outcome_mean(0, 0, r.covariates[0], r.covariates[1]))
                         .epsilon(1e-10));
    }
  }
}

TEST_CASE("true_mu limits and ordering") {
  DgpParams p;
  p.m = 300;
  p.seed = 10;
  const auto sim = simulate_dataset(p);
  CHECK(true_mu(sim.outcomes.oracle, {1e15, 0, 0.5}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(true_mu(sim.outcomes.oracle, {1e15, std::nullopt, 0.3}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(true_mu(sim.outcomes.oracle, {1e-12, 1, 0.3}) == 0.0);
  // marginal = alpha * mu(a=1) + (1 - alpha) * mu(a=0)
  const double m0 = true_mu(sim.outcomes.oracle, {100, 0, 0.3});
  const double m1 = true_mu(sim.outcomes.oracle, {100, 1, 0.3});
  CHECK(true_mu(sim.outcomes.oracle, {100, std::nullopt, 0.3}) == doctest::Approx(0.3 * m1 + 0.7 * m0).epsilon(1e-12));
}

TEST_CASE("binomial weights") {
  for (int n : {1, 2, 10, 57, 200}) {
    for (double a : {0.01, 0.5, 0.93}) {
      const auto w = binomial_weights(n, a);
      REQUIRE(w.size() == static_cast<std::size_t>(n));
      double s = 0.0, mean = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        CHECK(w[k] >= 0.0);
        s += w[k];
        mean += static_cast<double>(k) * w[k];
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
      CHECK(mean == doctest::Approx((n - 1) * a).epsilon(1e-10).scale(1.0));
    }
  }
  CHECK(binomial_weights(3, 0.5) == std::vector<double>{0.25, 0.5, 0.25});
}

TEST_CASE("oracle truth: monotone, treatment lowers risk, thread independent") {
  DgpParams p;
  const std::vector<TargetSpec> targets{{50, 0, 0.5}, {100, 0, 0.5}, {100, 1, 0.5}, {100, 0, 0.1}, {100, 0, 0.9}};
  const auto one = compute_truth(p, targets, 20'000, 3, 1);
  const auto many = compute_truth(p, targets, 20'000, 3, 3);
  CHECK(one == many);
  CHECK(one[0] < one[1]);
  CHECK(one[2] < one[1]);
  CHECK(one[3] > one[4]);
  CHECK(compute_truth(p, targets, 20'000, 4, 1) != one);
}

TEST_CASE("parameter validation and seeds") {
  DgpParams p;
  p.frailty_variance = 0.0;
  CHECK_THROWS_AS(simulate_dataset(p), DomainError);
  p = {};
  p.m = 0;
  CHECK_THROWS_AS(simulate_dataset(p), DomainError);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(1, 5) == derive_seed(1, 5));
}
