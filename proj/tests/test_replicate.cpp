#include <doctest.h>

#include <cmath>

#include "ipcwi/errors.hpp"
#include "ipcwi/replicate.hpp"

using namespace ipcwi;

namespace {

ReplicationConfig small_config(WeightMode mode) {
  ReplicationConfig c;
  c.dgp.m = 40;
  c.dgp.seed = 77;
  c.reps = 4;
  c.mode = mode;
  const std::vector<double> alphas{0.3, 0.6};
  c.targets = grid_targets(100.0, alphas);
  c.truth = std::vector<double>{0.37, 0.27, 0.36, 0.26};
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("grid targets pair a = 0 and a = 1 per alpha") {
  const std::vector<double> alphas{0.2, 0.8};
  const auto g = grid_targets(50.0, alphas);
  REQUIRE(g.size() == 4);
  CHECK(g[0].own_treatment == 0);
  CHECK(g[1].own_treatment == 1);
  CHECK(g[2].alpha == 0.8);
  CHECK(g[3].time_horizon == 50.0);
}

TEST_CASE("a replicate is a pure function of its index") {
  const auto c = small_config(WeightMode::known);
  const auto a = run_replicate(c, 2);
  const auto b = run_replicate(c, 2);
  REQUIRE(a.ok);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);
  CHECK(a.df == 40.0 - 1.0);
  CHECK(run_replicate(c, 3).estimate != a.estimate);
}

TEST_CASE("fitted replicate counts the nuisance parameters in df") {
  auto c = small_config(WeightMode::fitted);
  c.dgp.m = 60;
  const auto r = run_replicate(c, 0);
  REQUIRE(r.ok);
  CHECK(r.df == 60.0 - 8.0 - 1.0);
  for (double se : r.std_error) CHECK(se > 0.0);
}

TEST_CASE("table does not depend on the thread count") {
  auto c = small_config(WeightMode::known);
  const auto one = replicate(c);
  c.threads = 3;
  const auto three = replicate(c);
  REQUIRE(one.rows.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(one.rows[k].mean_estimate == three.rows[k].mean_estimate);
    CHECK(one.rows[k].ase == three.rows[k].ase);
    CHECK(one.rows[k].n_ok == 4);
  }
  CHECK(one.m == 40);
  CHECK(one.mode == WeightMode::known);
}

TEST_CASE("summary statistics by hand, failures counted") {
  ReplicationConfig c;
  c.targets = {{100, 0, 0.5}};
  c.level = 0.95;
  std::vector<ReplicateResult> rs(4);
  const double est[] = {0.30, 0.34, 0.38, 0.0};
  const double se[] = {0.02, 0.02, 0.01, 0.0};
  for (int i = 0; i < 4; ++i) {
    rs[i].index = i;
    rs[i].ok = i < 3;
    rs[i].estimate = {est[i]};
    rs[i].std_error = {se[i]};
    rs[i].df = 5.0;
  }
  rs[3].failure = "propensity fit did not converge";
  const std::vector<double> truth{0.35};
  const auto t = summarize(c, truth, rs);
  const auto& row = t.rows.at(0);
  CHECK(row.n_ok == 3);
  CHECK(row.n_failed == 1);
  REQUIRE(t.failures.size() == 1);
  CHECK(t.failures[0] == "replicate 3: propensity fit did not converge");
  CHECK(row.mean_estimate == doctest::Approx(0.34));
  CHECK(row.bias == doctest::Approx(0.01));
  CHECK(row.ese == doctest::Approx(0.04));
  CHECK(row.ase == doctest::Approx(0.05 / 3.0));
  // |0.30-0.35| = 0.05 > 1.96*0.02; 0.01 covered; |0.03| > 1.96*0.01
  CHECK(row.ec == doctest::Approx(1.0 / 3.0));
  // t(5) quantile 2.5706: 0.05 <= 0.0514 now covered
  CHECK(row.ec_t == doctest::Approx(2.0 / 3.0));
  CHECK(row.mc_error() == doctest::Approx(0.04 / std::sqrt(3.0)));
}

TEST_CASE("configuration checks") {
  auto c = small_config(WeightMode::known);
  c.reps = 1;
  CHECK_THROWS_AS(replicate(c), DomainError);
  c = small_config(WeightMode::known);
  c.truth = std::vector<double>{0.1};
  CHECK_THROWS_AS(replicate(c), DomainError);
  CHECK(parse_weight_mode("known-weights") == WeightMode::known);
  CHECK(parse_weight_mode("fitted") == WeightMode::fitted);
  CHECK_THROWS_AS(parse_weight_mode("oracle"), InputError);
  CHECK(weight_mode_name(WeightMode::fitted) == "fitted");
}
