#include <doctest.h>

#include <cmath>
#include <vector>

#include "ipcwi/errors.hpp"
#include "ipcwi/policy.hpp"

using namespace ipcwi;

namespace {

// Direct product, the obvious oracle for small vectors.
double direct(const std::vector<int>& a, double alpha) {
  double p = 1.0;
  for (int x : a) p *= x ? alpha : 1.0 - alpha;
  return p;
}

}  // namespace

TEST_CASE("group policy probability examples") {
  CHECK(group_policy_prob(std::vector<int>{1, 0, 0}, 0.1) == doctest::Approx(0.081).epsilon(1e-14));
  CHECK(group_policy_prob(std::vector<int>{1, 1, 1, 1}, 0.5) == doctest::Approx(0.0625).epsilon(1e-14));
  CHECK(group_policy_prob(std::vector<int>{}, 0.3) == 1.0);
}

TEST_CASE("leave-one-out examples (0-based index)") {
  CHECK(leave_one_out_policy_prob(std::vector<int>{1, 0, 1}, 1, 0.5) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(leave_one_out_policy_prob(std::vector<int>{1}, 0, 0.7) == 1.0);
  CHECK(leave_one_out_policy_prob(std::vector<int>{1, 0}, 0, 0.3) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(group_policy_prob(std::vector<int>{1}, 0.0), DomainError);
  CHECK_THROWS_AS(group_policy_prob(std::vector<int>{1}, 1.0), DomainError);
  CHECK_THROWS_AS(group_policy_prob(std::vector<int>{1}, NAN), DomainError);
  CHECK_THROWS_AS(group_policy_prob(std::vector<int>{2}, 0.5), DomainError);
  CHECK_THROWS_AS(leave_one_out_policy_prob(std::vector<int>{1, 0}, 2, 0.5), DomainError);
  CHECK_THROWS_AS(leave_one_out_policy_prob(std::vector<int>{}, 0, 0.5), DomainError);
}

TEST_CASE("normalisation over all treatment vectors, n <= 12") {
  for (int n = 1; n <= 12; ++n) {
    for (double alpha : {0.05, 0.3, 0.5, 0.77, 0.95}) {
      double total = 0.0;
      std::vector<int> a(static_cast<std::size_t>(n));
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        for (int k = 0; k < n; ++k) a[static_cast<std::size_t>(k)] = (mask >> k) & 1u;
        const double p = group_policy_prob(a, alpha);
        CHECK(p == doctest::Approx(direct(a, alpha)).epsilon(1e-13));
        total += p;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("factorisation and symmetry") {
  const std::vector<int> a{1, 0, 0, 1, 1, 0, 1};
  const std::vector<int> permuted{0, 1, 1, 0, 1, 1, 0};
  for (double alpha : {0.1, 0.45, 0.9}) {
    const double full = group_policy_prob(a, alpha);
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double own = a[j] ? alpha : 1.0 - alpha;
      CHECK(full == doctest::Approx(leave_one_out_policy_prob(a, j, alpha) * own).epsilon(1e-13));
    }
    CHECK(full == doctest::Approx(group_policy_prob(permuted, alpha)).epsilon(1e-14));
    CHECK(std::log(full) == doctest::Approx(log_policy_prob(4, 7, alpha)).epsilon(1e-14));
  }
}

TEST_CASE("large groups stay representable in log space") {
  const double lp = log_policy_prob(300, 700, 0.5);
  CHECK(lp == doctest::Approx(700 * std::log(0.5)).epsilon(1e-13));
  std::vector<int> a(700, 0);
  CHECK(group_policy_prob(a, 0.5) == doctest::Approx(std::exp(700 * std::log(0.5))).epsilon(1e-12));
}
