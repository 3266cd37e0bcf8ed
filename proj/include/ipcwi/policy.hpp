#pragma once

#include <cstddef>
#include <span>

namespace ipcwi {

// Bernoulli allocation strategy: every member independently treated with
// probability alpha. All probabilities are formed in log space so that
// groups of several hundred members do not underflow.

// log pi for a group of `size` members of whom `treated` are treated.
double log_policy_prob(int treated, int size, double alpha);

// pi(a, alpha); the empty vector has probability 1.
double group_policy_prob(std::span<const int> a, double alpha);

// pi(a_{-j}, alpha): the same product with entry j (0-based) removed.
double leave_one_out_policy_prob(std::span<const int> a, std::size_t j, double alpha);

void check_alpha(double alpha);

}  // namespace ipcwi
