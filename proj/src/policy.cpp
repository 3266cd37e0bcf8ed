#include "ipcwi/policy.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError(fmt::format("allocation probability must lie in (0,1), got {}", alpha));
  }
}

double log_policy_prob(int treated, int size, double alpha) {
  check_alpha(alpha);
  if (treated < 0 || treated > size) throw DomainError("treated count outside [0, size]");
  return treated * std::log(alpha) + (size - treated) * std::log1p(-alpha);
}

namespace {

int count_treated(std::span<const int> a) {
  int k = 0;
  for (int v : a) {
    if (v != 0 && v != 1) throw DomainError("treatment entries must be 0 or 1");
    k += v;
  }
  return k;
}

}  // namespace

double group_policy_prob(std::span<const int> a, double alpha) {
  const int k = count_treated(a);
  return std::exp(log_policy_prob(k, static_cast<int>(a.size()), alpha));
}

double leave_one_out_policy_prob(std::span<const int> a, std::size_t j, double alpha) {
  if (j >= a.size()) {
    throw DomainError(fmt::format("index {} out of range for treatment vector of length {}", j, a.size()));
  }
  const int k = count_treated(a) - a[j];
  return std::exp(log_policy_prob(k, static_cast<int>(a.size()) - 1, alpha));
}

}  // namespace ipcwi
