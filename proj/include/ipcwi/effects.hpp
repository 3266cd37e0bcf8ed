#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipcwi/inference.hpp"

namespace ipcwi {

enum class EffectKind { direct, indirect, total, overall };

// "DE", "IE", "TE", "OE"
std::string effect_name(EffectKind kind);

struct EffectRow {
  EffectKind kind = EffectKind::direct;
  double time = 0.0;
  double alpha1 = 0.0;
  std::optional<double> alpha2;  // absent for DE
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct EffectTable {
  std::vector<EffectRow> rows;
  std::size_t excluded_groups = 0;
  double level = 0.95;
  bool t_intervals = false;
};

struct EffectOptions {
  double level = 0.95;
  bool t_intervals = false;
  JacobianConfig jac;
};

struct EffectsResult {
  EffectTable effects;
  std::vector<TargetEstimate> mu;  // every stacked target with its SE
  SandwichResult sandwich;
};

// Targets stacked for an effect table: for every time and every alpha in
// the grid plus the reference, mu(t,0,alpha), mu(t,1,alpha) and mu(t,alpha).
std::vector<TargetSpec> effect_targets(std::span<const double> times, std::span<const double> alpha_grid,
                                       double reference_alpha);

// DE(t, alpha) for every grid alpha; IE, TE and OE for every grid alpha
// against the reference. Standard errors come from one joint sandwich over
// all targets and the estimated nuisance blocks of `model`; the targets of
// `model` are replaced by effect_targets(...).
EffectsResult estimate_effects(const StudyData& data, std::span<const double> times,
                               std::span<const double> alpha_grid, double reference_alpha, StackedModel model,
                               const StackedTheta& nuisance, const EffectOptions& options = {});

}  // namespace ipcwi
