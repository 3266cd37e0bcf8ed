#include "ipcwi/data.hpp"

#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

int GroupData::treated_count() const {
  int k = 0;
  for (const auto& r : members) k += r.treatment;
  return k;
}

std::size_t StudyData::num_individuals() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

std::size_t StudyData::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < covariate_names.size(); ++i) {
    if (covariate_names[i] == name) return i;
  }
  throw InputError(fmt::format("unknown covariate column '{}'", name));
}

void TargetSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError(fmt::format("alpha must lie in (0,1), got {}", alpha));
  }
  if (!(time_horizon > 0.0) || !std::isfinite(time_horizon)) {
    throw DomainError(fmt::format("time horizon must be positive, got {}", time_horizon));
  }
  if (own_treatment && *own_treatment != 0 && *own_treatment != 1) {
    throw DomainError("own treatment must be 0 or 1");
  }
}

std::string TargetSpec::label() const {
  if (own_treatment) return fmt::format("mu(t={},a={},alpha={})", time_horizon, *own_treatment, alpha);
  return fmt::format("mu(t={},alpha={})", time_horizon, alpha);
}

std::string ValidationReport::summary(std::size_t max_items) const {
  if (violations.empty()) return "ok";
  std::string out = fmt::format("{} violation(s)", violations.size());
  for (std::size_t i = 0; i < violations.size() && i < max_items; ++i) {
    const auto& v = violations[i];
    out += fmt::format("\n  group '{}'", v.group_id);
    if (!v.individual_id.empty()) out += fmt::format(" individual '{}'", v.individual_id);
    out += ": " + v.message;
  }
  return out;
}

ValidationReport validate_study(const StudyData& data) {
  ValidationReport report;
  auto add = [&](const std::string& g, const std::string& ind, std::string msg) {
    report.violations.push_back({g, ind, std::move(msg)});
  };
  if (data.groups.empty()) add("", "", "study has no groups");

  const std::size_t ncov = data.covariate_names.size();
  std::unordered_set<std::string> group_ids;
  for (const auto& g : data.groups) {
    if (!group_ids.insert(g.group_id).second) add(g.group_id, "", "duplicate group_id");
    if (g.members.empty()) add(g.group_id, "", "group has no members");
    std::unordered_set<std::string> ids;
    for (const auto& r : g.members) {
      if (!ids.insert(r.individual_id).second) add(g.group_id, r.individual_id, "duplicate individual_id");
      if (!(r.observed_time >= 0.0) || !std::isfinite(r.observed_time)) {
        add(g.group_id, r.individual_id, fmt::format("observed_time must be finite and >= 0, got {}", r.observed_time));
      }
      if (r.event != 0 && r.event != 1) add(g.group_id, r.individual_id, "event must be 0 or 1");
      if (r.treatment != 0 && r.treatment != 1) add(g.group_id, r.individual_id, "treatment must be 0 or 1");
      if (r.covariates.size() != ncov) {
        add(g.group_id, r.individual_id,
            fmt::format("expected {} covariates, found {}", ncov, r.covariates.size()));
      } else {
        for (double v : r.covariates) {
          if (!std::isfinite(v)) {
            add(g.group_id, r.individual_id, "non-finite covariate value");
            break;
          }
        }
      }
    }
  }
  return report;
}

void require_valid(const StudyData& data) {
  auto report = validate_study(data);
  if (!report.ok()) throw InputError("invalid study data: " + report.summary());
}

}  // namespace ipcwi
