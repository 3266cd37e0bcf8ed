#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ipcwi {

struct IndividualRecord {
  std::string individual_id;
  std::vector<double> covariates;  // design columns, aligned with StudyData::covariate_names
  int treatment = 0;               // A_ij
  double observed_time = 0.0;      // X_ij = min(T_ij, C_ij)
  int event = 0;                   // 1 = event observed, 0 = censored
};

struct GroupData {
  std::string group_id;
  std::vector<IndividualRecord> members;

  std::size_t size() const { return members.size(); }
  int treated_count() const;
};

struct StudyData {
  std::vector<GroupData> groups;
  std::vector<std::string> covariate_names;

  std::size_t num_groups() const { return groups.size(); }
  std::size_t num_individuals() const;

  // Index of a covariate column; throws InputError if absent.
  std::size_t covariate_index(const std::string& name) const;
};

// A target of estimation: mu(t, a, alpha) when own_treatment is set,
// otherwise the marginal mu(t, alpha).
struct TargetSpec {
  double time_horizon = 0.0;
  std::optional<int> own_treatment;
  double alpha = 0.5;

  bool marginal() const { return !own_treatment.has_value(); }
  void validate() const;  // throws DomainError
  std::string label() const;
};

struct Violation {
  std::string group_id;
  std::string individual_id;  // empty for group/study level problems
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary(std::size_t max_items = 10) const;
};

ValidationReport validate_study(const StudyData& data);

// Throws InputError carrying the report summary when validation fails.
void require_valid(const StudyData& data);

}  // namespace ipcwi
