#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipcwi/censoring.hpp"
#include "ipcwi/data.hpp"
#include "ipcwi/effects.hpp"
#include "ipcwi/propensity.hpp"
#include "ipcwi/replicate.hpp"
#include "ipcwi/simulation.hpp"

namespace ipcwi {

using Json = nlohmann::ordered_json;

// Round-trippable decimal form (17 significant digits).
std::string format_real(double x);

// Study CSV: header `group_id,individual_id,<covariates...>,treatment,time,event`.
// Columns other than the five reserved names are covariates, in header
// order. Groups are formed by first appearance of group_id. Throws
// InputError with the offending line on malformed input.
StudyData parse_study_csv(std::istream& in, const std::string& source = "<input>");
StudyData read_study_csv(const std::filesystem::path& path);
void write_study_csv(std::ostream& out, const StudyData& data);
void write_study_csv(const std::filesystem::path& path, const StudyData& data);

Json to_json(const PropensityFit& fit, const PropensityDesign& design, const QuadratureConfig& quad);
Json to_json(const CensoringFit& fit, const CensoringDesign& design);
// Inverse of the above; `design` and `quad` are filled when present.
PropensityParams propensity_params_from_json(const Json& j, PropensityDesign* design = nullptr,
                                             QuadratureConfig* quad = nullptr);
CensoringParams censoring_params_from_json(const Json& j, CensoringDesign* design = nullptr);

// Missing keys keep their defaults; unknown keys are rejected.
DgpParams dgp_from_json(const Json& j, DgpParams base = {});
Json to_json(const DgpParams& p);

Json to_json(const SandwichResult& s);

Json truth_json(std::span<const TargetSpec> targets, std::span<const double> truth, std::size_t oracle_groups,
                std::uint64_t seed);

// `scale` multiplies estimates, SEs and limits (1000 for per-1000 tables).
void write_effects_csv(std::ostream& out, const EffectTable& table, double scale = 1.0);
void write_mu_csv(std::ostream& out, std::span<const TargetEstimate> mu, double level, bool t_intervals,
                  const SandwichResult* sandwich = nullptr);
// Cumulative-risk curves: one row per (t, a, alpha) with a empty for the marginal risk.
void write_plotdata_csv(std::ostream& out, std::span<const TargetEstimate> curve);
void write_replication_csv(std::ostream& out, const ReplicationTable& table);

// Human-readable summary with 3-4 significant digits.
std::string format_replication_table(const ReplicationTable& table);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ipcwi
