#include "ipcwi/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "ipcwi/errors.hpp"
#include "ipcwi/numerics.hpp"

namespace ipcwi {

std::string format_real(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  return fmt::format("{:.17g}", x);
}

namespace {

constexpr const char* kReserved[] = {"group_id", "individual_id", "treatment", "time", "event"};

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_real(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || s.empty()) {
    throw InputError(fmt::format("{}: '{}' is not a number", where, s));
  }
  return v;
}

int parse_binary(const std::string& s, const std::string& where) {
  const double v = parse_real(s, where);
  if (v != 0.0 && v != 1.0) throw InputError(fmt::format("{}: expected 0 or 1, got '{}'", where, s));
  return static_cast<int>(v);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string a_field(const TargetSpec& spec) { return spec.own_treatment ? std::to_string(*spec.own_treatment) : ""; }

template <class T>
void read_key(const Json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

}  // namespace

StudyData parse_study_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw InputError(fmt::format("{}: empty file", source));

  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw InputError(fmt::format("{}:{}: empty column name", source, line_no));
    if (!pos.emplace(header[i], i).second) {
      throw InputError(fmt::format("{}:{}: duplicate column '{}'", source, line_no, header[i]));
    }
  }
  for (const char* r : kReserved) {
    if (!pos.contains(r)) throw InputError(fmt::format("{}: missing required column '{}'", source, r));
  }
  StudyData data;
  std::vector<std::size_t> cov_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    bool reserved = false;
    for (const char* r : kReserved) reserved = reserved || header[i] == r;
    if (!reserved) {
      cov_cols.push_back(i);
      data.covariate_names.push_back(header[i]);
    }
  }

  std::unordered_map<std::string, std::size_t> group_index;
  while (next_line()) {
    const auto fields = split_csv_line(line);
    const std::string where = fmt::format("{}:{}", source, line_no);
    if (fields.size() != header.size()) {
      throw InputError(fmt::format("{}: expected {} fields, found {}", where, header.size(), fields.size()));
    }
    const std::string& gid = fields[pos["group_id"]];
    if (gid.empty()) throw InputError(fmt::format("{}: empty group_id", where));
    IndividualRecord rec;
    rec.individual_id = fields[pos["individual_id"]];
    rec.treatment = parse_binary(fields[pos["treatment"]], where + " treatment");
    rec.observed_time = parse_real(fields[pos["time"]], where + " time");
    rec.event = parse_binary(fields[pos["event"]], where + " event");
    for (std::size_t c : cov_cols) rec.covariates.push_back(parse_real(fields[c], where + " " + header[c]));
    auto [it, inserted] = group_index.emplace(gid, data.groups.size());
    if (inserted) data.groups.push_back(GroupData{gid, {}});
    data.groups[it->second].members.push_back(std::move(rec));
  }
  if (data.groups.empty()) throw InputError(fmt::format("{}: no data rows", source));
  const auto report = validate_study(data);
  if (!report.ok()) throw InputError(fmt::format("{}: {}", source, report.summary()));
  return data;
}

StudyData read_study_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  return parse_study_csv(in, path.string());
}

void write_study_csv(std::ostream& out, const StudyData& data) {
  out << "group_id,individual_id";
  for (const auto& c : data.covariate_names) out << ',' << csv_field(c);
  out << ",treatment,time,event\n";
  for (const auto& g : data.groups) {
    for (const auto& r : g.members) {
      out << csv_field(g.group_id) << ',' << csv_field(r.individual_id);
      for (double v : r.covariates) out << ',' << format_real(v);
      out << ',' << r.treatment << ',' << format_real(r.observed_time) << ',' << r.event << '\n';
    }
  }
}

void write_study_csv(const std::filesystem::path& path, const StudyData& data) {
  std::ostringstream os;
  write_study_csv(os, data);
  write_text_file(path, os.str());
}

Json to_json(const PropensityFit& fit, const PropensityDesign& design, const QuadratureConfig& quad) {
  Json j;
  j["model"] = "propensity";
  j["columns"] = design.columns;
  j["intercept"] = design.intercept;
  j["labels"] = design.labels();
  j["theta_x"] = fit.params.theta_x;
  j["theta_s"] = fit.params.theta_s;
  j["compliance"] = fit.params.compliance;
  j["quadrature_nodes"] = quad.num_nodes;
  j["adaptive_quadrature"] = quad.adaptive;
  j["converged"] = fit.converged;
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = fit.gradient_norm;
  j["warnings"] = fit.warnings;
  return j;
}

Json to_json(const CensoringFit& fit, const CensoringDesign& design) {
  Json j;
  j["model"] = "censoring";
  j["columns"] = design.columns;
  j["theta_c"] = fit.params.theta_c;
  j["theta_h"] = fit.params.theta_h;
  j["theta_r"] = fit.params.theta_r;
  j["converged"] = fit.converged;
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = fit.gradient_norm;
  j["warnings"] = fit.warnings;
  return j;
}

PropensityParams propensity_params_from_json(const Json& j, PropensityDesign* design, QuadratureConfig* quad) {
  try {
    PropensityParams p;
    p.theta_x = j.at("theta_x").get<std::vector<double>>();
    p.theta_s = j.at("theta_s").get<double>();
    read_key(j, "compliance", p.compliance);
    p.validate();
    PropensityDesign local;
    PropensityDesign& d = design ? *design : local;
    read_key(j, "columns", d.columns);
    read_key(j, "intercept", d.intercept);
    if (j.contains("columns") && d.dimension() != p.theta_x.size()) {
      throw InputError("propensity parameters do not match the listed columns");
    }
    if (quad) {
      read_key(j, "quadrature_nodes", quad->num_nodes);
      read_key(j, "adaptive_quadrature", quad->adaptive);
    }
    return p;
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("invalid propensity parameters: {}", e.what()));
  } catch (const DomainError& e) {
    throw InputError(fmt::format("invalid propensity parameters: {}", e.what()));
  }
}

CensoringParams censoring_params_from_json(const Json& j, CensoringDesign* design) {
  try {
    CensoringParams p;
    p.theta_c = j.at("theta_c").get<std::vector<double>>();
    p.theta_h = j.at("theta_h").get<double>();
    p.theta_r = j.at("theta_r").get<double>();
    p.validate();
    CensoringDesign local;
    CensoringDesign& d = design ? *design : local;
    read_key(j, "columns", d.columns);
    if (j.contains("columns") && d.dimension() != p.theta_c.size()) {
      throw InputError("censoring parameters do not match the listed columns");
    }
    return p;
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("invalid censoring parameters: {}", e.what()));
  } catch (const DomainError& e) {
    throw InputError(fmt::format("invalid censoring parameters: {}", e.what()));
  }
}

DgpParams dgp_from_json(const Json& j, DgpParams p) {
  if (!j.is_object()) throw InputError("simulation parameters must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "v_mean") p.v_mean = value.get<double>();
      else if (key == "r1_variance") p.r1_variance = value.get<double>();
      else if (key == "r2_variance") p.r2_variance = value.get<double>();
      else if (key == "age_cap") p.age_cap = value.get<double>();
      else if (key == "age_divisor") p.age_divisor = value.get<double>();
      else if (key == "log_distance_variance") p.log_distance_variance = value.get<double>();
      else if (key == "treatment_coef") p.treatment_coef = value.get<std::array<double, 3>>();
      else if (key == "treatment_re_variance") p.treatment_re_variance = value.get<double>();
      else if (key == "outcome_intercept") p.outcome_intercept = value.get<double>();
      else if (key == "outcome_treatment") p.outcome_treatment = value.get<double>();
      else if (key == "outcome_l1") p.outcome_l1 = value.get<double>();
      else if (key == "outcome_l2") p.outcome_l2 = value.get<double>();
      else if (key == "outcome_spillover") p.outcome_spillover = value.get<double>();
      else if (key == "spillover_over_others") p.spillover_over_others = value.get<bool>();
      else if (key == "frailty_variance") p.frailty_variance = value.get<double>();
      else if (key == "censor_base") p.censor_base = value.get<double>();
      else if (key == "censor_l1") p.censor_l1 = value.get<double>();
      else if (key == "censor_l2") p.censor_l2 = value.get<double>();
      else if (key == "m") p.m = value.get<int>();
      else if (key == "n") p.n = value.get<int>();
      else if (key == "seed") p.seed = value.get<std::uint64_t>();
      else throw InputError(fmt::format("unknown simulation parameter '{}'", key));
    }
    p.validate();
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("invalid simulation parameters: {}", e.what()));
  } catch (const DomainError& e) {
    throw InputError(fmt::format("invalid simulation parameters: {}", e.what()));
  }
  return p;
}

Json to_json(const DgpParams& p) {
  Json j;
  j["v_mean"] = p.v_mean;
  j["r1_variance"] = p.r1_variance;
  j["r2_variance"] = p.r2_variance;
  j["age_cap"] = p.age_cap;
  j["age_divisor"] = p.age_divisor;
  j["log_distance_variance"] = p.log_distance_variance;
  j["treatment_coef"] = p.treatment_coef;
  j["treatment_re_variance"] = p.treatment_re_variance;
  j["outcome_intercept"] = p.outcome_intercept;
  j["outcome_treatment"] = p.outcome_treatment;
  j["outcome_l1"] = p.outcome_l1;
  j["outcome_l2"] = p.outcome_l2;
  j["outcome_spillover"] = p.outcome_spillover;
  j["spillover_over_others"] = p.spillover_over_others;
  j["frailty_variance"] = p.frailty_variance;
  j["censor_base"] = p.censor_base;
  j["censor_l1"] = p.censor_l1;
  j["censor_l2"] = p.censor_l2;
  j["m"] = p.m;
  j["n"] = p.n;
  j["seed"] = p.seed;
  return j;
}

Json to_json(const SandwichResult& s) {
  auto matrix = [](const Eigen::MatrixXd& mtx) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < mtx.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < mtx.cols(); ++c) row.push_back(mtx(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  Json j;
  j["dimension"] = s.layout.dimension();
  j["names"] = s.layout.names;
  j["m"] = s.m;
  j["excluded_groups"] = s.excluded;
  j["condition_number"] = s.condition_number;
  j["max_abs_psi_sum"] = s.max_abs_psi_sum;
  std::vector<double> theta(s.theta.data(), s.theta.data() + s.theta.size());
  j["theta"] = theta;
  j["sigma"] = matrix(s.sigma);
  j["u"] = matrix(s.u_matrix);
  j["v"] = matrix(s.v_matrix);
  return j;
}

Json truth_json(std::span<const TargetSpec> targets, std::span<const double> truth, std::size_t oracle_groups,
                std::uint64_t seed) {
  Json j;
  j["oracle_groups"] = oracle_groups;
  j["seed"] = seed;
  Json rows = Json::array();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Json r;
    r["t"] = targets[k].time_horizon;
    if (targets[k].own_treatment) r["a"] = *targets[k].own_treatment;
    else r["a"] = nullptr;
    r["alpha"] = targets[k].alpha;
    r["mu"] = truth[k];
    rows.push_back(std::move(r));
  }
  j["targets"] = std::move(rows);
  return j;
}

void write_effects_csv(std::ostream& out, const EffectTable& table, double scale) {
  out << "effect,t,alpha1,alpha2,estimate,se,ci_low,ci_high,scale\n";
  for (const auto& r : table.rows) {
    out << effect_name(r.kind) << ',' << format_real(r.time) << ',' << format_real(r.alpha1) << ','
        << (r.alpha2 ? format_real(*r.alpha2) : "") << ',' << format_real(scale * r.estimate) << ','
        << format_real(scale * r.std_error) << ',' << format_real(scale * r.ci_low) << ','
        << format_real(scale * r.ci_high) << ',' << format_real(scale) << '\n';
  }
}

void write_mu_csv(std::ostream& out, std::span<const TargetEstimate> mu, double level, bool t_intervals,
                  const SandwichResult* sandwich) {
  out << "t,a,alpha,estimate,se,ci_low,ci_high,excluded\n";
  for (const auto& e : mu) {
    std::optional<double> df;
    if (t_intervals && sandwich) df = sandwich->df(1);
    const Interval ci = std::isfinite(e.std_error) ? wald_ci(e.estimate, e.std_error, level, df)
                                                   : Interval{NAN, NAN};
    out << format_real(e.spec.time_horizon) << ',' << a_field(e.spec) << ',' << format_real(e.spec.alpha) << ','
        << format_real(e.estimate) << ',' << format_real(e.std_error) << ',' << format_real(ci.low) << ','
        << format_real(ci.high) << ',' << e.excluded << '\n';
  }
}

void write_plotdata_csv(std::ostream& out, std::span<const TargetEstimate> curve) {
  out << "t,a,alpha,risk\n";
  for (const auto& e : curve) {
    out << format_real(e.spec.time_horizon) << ',' << a_field(e.spec) << ',' << format_real(e.spec.alpha) << ','
        << format_real(e.estimate) << '\n';
  }
}

void write_replication_csv(std::ostream& out, const ReplicationTable& table) {
  out << "alpha,a,truth,bias,ese,ase,ec,ec_t,n_failed\n";
  for (const auto& r : table.rows) {
    out << format_real(r.spec.alpha) << ',' << a_field(r.spec) << ',' << format_real(r.truth) << ','
        << format_real(r.bias) << ',' << format_real(r.ese) << ',' << format_real(r.ase) << ','
        << format_real(r.ec) << ',' << format_real(r.ec_t) << ',' << r.n_failed << '\n';
  }
}

std::string format_replication_table(const ReplicationTable& table) {
  std::string out = fmt::format("m = {}, n = {}, {} weights, {} replicates ({} failed)\n", table.m, table.n,
                                weight_mode_name(table.mode), table.replicates.size(), table.failures.size());
  out += fmt::format("{:>6} {:>3} {:>7} {:>8} {:>7} {:>7} {:>6} {:>6}\n", "alpha", "a", "truth", "bias", "ESE",
                     "ASE", "EC", "EC_t");
  for (const auto& r : table.rows) {
    out += fmt::format("{:>6.2f} {:>3} {:>7.4f} {:>8.4f} {:>7.4f} {:>7.4f} {:>5.1f}% {:>5.1f}%\n", r.spec.alpha,
                       r.spec.own_treatment ? std::to_string(*r.spec.own_treatment) : "-", r.truth, r.bias, r.ese,
                       r.ase, 100.0 * r.ec, 100.0 * r.ec_t);
  }
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw InputError(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace ipcwi
