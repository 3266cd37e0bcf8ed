#include "ipcwi/effects.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"
#include "ipcwi/policy.hpp"

namespace ipcwi {

std::string effect_name(EffectKind kind) {
  switch (kind) {
    case EffectKind::direct: return "DE";
    case EffectKind::indirect: return "IE";
    case EffectKind::total: return "TE";
    case EffectKind::overall: return "OE";
  }
  return "?";
}

namespace {

std::vector<double> alpha_levels(std::span<const double> grid, double reference) {
  std::vector<double> out(grid.begin(), grid.end());
  if (std::find(out.begin(), out.end(), reference) == out.end()) out.push_back(reference);
  return out;
}

}  // namespace

std::vector<TargetSpec> effect_targets(std::span<const double> times, std::span<const double> alpha_grid,
                                       double reference_alpha) {
  check_alpha(reference_alpha);
  for (double a : alpha_grid) check_alpha(a);
  std::vector<TargetSpec> out;
  for (double t : times) {
    for (double a : alpha_levels(alpha_grid, reference_alpha)) {
      out.push_back({t, 0, a});
      out.push_back({t, 1, a});
      out.push_back({t, std::nullopt, a});
    }
  }
  for (const auto& s : out) s.validate();
  return out;
}

EffectsResult estimate_effects(const StudyData& data, std::span<const double> times,
                               std::span<const double> alpha_grid, double reference_alpha, StackedModel model,
                               const StackedTheta& nuisance, const EffectOptions& options) {
  if (times.empty() || alpha_grid.empty()) throw DomainError("effect table needs at least one time and one alpha");
  model.targets = effect_targets(times, alpha_grid, reference_alpha);
  const StackedTheta theta = solve_targets(data, model, nuisance);

  EffectsResult out;
  out.sandwich = sandwich(data, model, theta, options.jac);
  const SandwichResult& sw = out.sandwich;

  for (std::size_t k = 0; k < model.targets.size(); ++k) {
    TargetEstimate te;
    te.spec = model.targets[k];
    te.estimate = sw.target_estimate(k);
    te.std_error = sw.target_se(k);
    te.excluded = static_cast<int>(sw.excluded);
    out.mu.push_back(std::move(te));
  }

  const std::size_t levels = alpha_levels(alpha_grid, reference_alpha).size();
  auto index_of = [&](std::size_t time_idx, double alpha, std::optional<int> a) {
    const auto all = alpha_levels(alpha_grid, reference_alpha);
    const auto pos = static_cast<std::size_t>(std::find(all.begin(), all.end(), alpha) - all.begin());
    const std::size_t base = (time_idx * levels + pos) * 3;
    return base + (a ? static_cast<std::size_t>(*a) : 2u);
  };

  auto add_row = [&](EffectKind kind, std::size_t ti, double a1, std::optional<double> a2, std::size_t plus,
                     std::size_t minus) {
    std::vector<double> w(model.targets.size(), 0.0);
    w[plus] += 1.0;
    w[minus] -= 1.0;
    const ContrastEstimate c = contrast(sw, w);
    const Interval ci = wald_ci(c.estimate, c.std_error, options.level,
                                options.t_intervals ? std::optional<double>(c.df) : std::nullopt);
    out.effects.rows.push_back({kind, times[ti], a1, a2, c.estimate, c.std_error, ci.low, ci.high});
  };

  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (double a : alpha_grid) {
      add_row(EffectKind::direct, ti, a, std::nullopt, index_of(ti, a, 0), index_of(ti, a, 1));
    }
    const double ref = reference_alpha;
    for (double a : alpha_grid) {
      add_row(EffectKind::indirect, ti, a, ref, index_of(ti, a, 0), index_of(ti, ref, 0));
    }
    for (double a : alpha_grid) {
      add_row(EffectKind::total, ti, a, ref, index_of(ti, a, 0), index_of(ti, ref, 1));
    }
    for (double a : alpha_grid) {
      add_row(EffectKind::overall, ti, a, ref, index_of(ti, a, std::nullopt), index_of(ti, ref, std::nullopt));
    }
  }
  out.effects.excluded_groups = sw.excluded;
  out.effects.level = options.level;
  out.effects.t_intervals = options.t_intervals;
  return out;
}

}  // namespace ipcwi
