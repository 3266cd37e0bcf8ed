#include "ipcwi/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_multimin.h>

namespace ipcwi {

namespace {

void disable_gsl_abort() {
  static std::once_flag flag;
  std::call_once(flag, [] { gsl_set_error_handler_off(); });
}

struct FixedWorkspaceDeleter {
  void operator()(gsl_integration_fixed_workspace* w) const { gsl_integration_fixed_free(w); }
};

GaussHermiteRule compute_rule(int n) {
  disable_gsl_abort();
  std::unique_ptr<gsl_integration_fixed_workspace, FixedWorkspaceDeleter> ws(
      gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, static_cast<std::size_t>(n), 0.0, 1.0, 0.0, 0.0));
  if (!ws) throw NumericalError(fmt::format("failed to build {}-point Gauss-Hermite rule", n));
  const double* x = gsl_integration_fixed_nodes(ws.get());
  const double* w = gsl_integration_fixed_weights(ws.get());
  GaussHermiteRule rule;
  for (int k = 0; k < n; ++k) {
    if (w[k] <= 0.0) continue;  // underflowed tail weights carry no mass
    rule.nodes.push_back(x[k]);
    rule.log_weights.push_back(std::log(w[k]));
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int num_nodes) {
  if (num_nodes < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[num_nodes];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(compute_rule(num_nodes));
  return *slot;
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------

namespace {

struct MinimizerDeleter {
  void operator()(gsl_multimin_fdfminimizer* s) const { gsl_multimin_fdfminimizer_free(s); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

struct Callback {
  const Objective* objective;
  std::vector<double> x;
  std::vector<double> g;
  long evaluations = 0;

  double eval(const gsl_vector* v, gsl_vector* grad) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = gsl_vector_get(v, i);
    double f = (*objective)(x, g);
    ++evaluations;
    if (!std::isfinite(f)) f = std::numeric_limits<double>::max();
    if (grad) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        gsl_vector_set(grad, i, std::isfinite(g[i]) ? g[i] : 0.0);
      }
    }
    return f;
  }
};

double cb_f(const gsl_vector* v, void* p) {
  return static_cast<Callback*>(p)->eval(v, nullptr);
}
void cb_df(const gsl_vector* v, void* p, gsl_vector* grad) { static_cast<Callback*>(p)->eval(v, grad); }
void cb_fdf(const gsl_vector* v, void* p, double* f, gsl_vector* grad) {
  *f = static_cast<Callback*>(p)->eval(v, grad);
}

double inf_norm(const gsl_vector* v) {
  double m = 0.0;
  for (std::size_t i = 0; i < v->size; ++i) m = std::max(m, std::abs(gsl_vector_get(v, i)));
  return m;
}

}  // namespace

OptimizeResult minimize_bfgs(const Objective& objective, std::vector<double> x0, const OptimizerConfig& config) {
  disable_gsl_abort();
  const std::size_t n = x0.size();
  if (n == 0) throw DomainError("optimizer needs at least one parameter");

  Callback cb{&objective, std::vector<double>(n), std::vector<double>(n)};
  gsl_multimin_function_fdf fdf{cb_f, cb_df, cb_fdf, n, &cb};

  OptimizeResult result;
  result.x = std::move(x0);
  std::unique_ptr<gsl_vector, VectorDeleter> start(gsl_vector_alloc(n));

  // GSL's bfgs2 gives up (ENOPROG) when the line search stalls; a stall away
  // from a stationary point is retried from the current iterate with a
  // fresh Hessian approximation.
  constexpr int kMaxRestarts = 8;
  int iter = 0;
  for (int restart = 0; restart <= kMaxRestarts && iter < config.max_iterations; ++restart) {
    for (std::size_t i = 0; i < n; ++i) gsl_vector_set(start.get(), i, result.x[i]);
    std::unique_ptr<gsl_multimin_fdfminimizer, MinimizerDeleter> s(
        gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n));
    const double step = config.initial_step / std::pow(4.0, restart);
    gsl_multimin_fdfminimizer_set(s.get(), &fdf, start.get(), step, config.line_search_tolerance);

    bool stalled = false;
    while (true) {
      const double f = s->f;
      const double gnorm = inf_norm(s->gradient);
      result.trace.push_back({iter, f, gnorm});
      for (std::size_t i = 0; i < n; ++i) result.x[i] = gsl_vector_get(s->x, i);
      result.objective = f;
      result.gradient_norm = gnorm;
      if (gnorm <= config.gradient_tolerance * std::max(1.0, std::abs(f))) {
        result.converged = true;
        break;
      }
      if (iter >= config.max_iterations) break;
      ++iter;
      const int status = gsl_multimin_fdfminimizer_iterate(s.get());
      if (status != GSL_SUCCESS) {
        stalled = true;
        break;
      }
    }
    if (result.converged || !stalled) break;
  }
  result.iterations = iter;

  if (!result.converged && config.throw_on_failure) {
    throw ConvergenceError(fmt::format("optimizer did not converge after {} iterations (max |grad| = {:.3g}, f = {:.10g})",
                                       iter, result.gradient_norm, result.objective),
                           result.trace);
  }
  return result;
}

// ---------------------------------------------------------------------------

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1)");
  return gsl_cdf_ugaussian_Pinv(p);
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1)");
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  return gsl_cdf_tdist_Pinv(p, df);
}

// ---------------------------------------------------------------------------

int default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 0) threads = default_thread_count();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ipcwi
