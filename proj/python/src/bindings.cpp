#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ipcwi/cli.hpp"
#include "ipcwi/effects.hpp"
#include "ipcwi/errors.hpp"
#include "ipcwi/io.hpp"
#include "ipcwi/policy.hpp"
#include "ipcwi/replicate.hpp"
#include "ipcwi/simulation.hpp"

namespace py = pybind11;
using namespace ipcwi;

namespace {

using PyTarget = std::tuple<double, std::optional<int>, double>;

std::vector<TargetSpec> to_targets(const std::vector<PyTarget>& in) {
  std::vector<TargetSpec> out;
  for (const auto& [t, a, alpha] : in) {
    TargetSpec s{t, a, alpha};
    s.validate();
    out.push_back(s);
  }
  return out;
}

Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw InputError(e.what());
  }
}

// Fitted nuisance models as read back from their JSON form.
struct Nuisance {
  StackedModel model;
  StackedTheta theta;
};

Nuisance load_nuisance(const std::string& propensity_json, const std::optional<std::string>& censoring_json) {
  Nuisance n;
  n.theta.beta = propensity_params_from_json(parse(propensity_json), &n.model.propensity_design, &n.model.quad);
  if (censoring_json) {
    CensoringDesign d;
    n.theta.gamma = censoring_params_from_json(parse(*censoring_json), &d);
    n.model.censoring_design = d;
  }
  return n;
}

Json mu_json(const TargetEstimate& e) {
  Json j;
  j["t"] = e.spec.time_horizon;
  j["a"] = e.spec.own_treatment ? Json(*e.spec.own_treatment) : Json(nullptr);
  j["alpha"] = e.spec.alpha;
  j["estimate"] = e.estimate;
  j["se"] = std::isfinite(e.std_error) ? Json(e.std_error) : Json(nullptr);
  j["excluded"] = e.excluded;
  return j;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "IPCW estimators of direct, indirect, total and overall effects under partial interference";

  auto base = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  auto model_error = py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", model_error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  (void)base;

  py::class_<StudyData>(m, "Study")
      .def_property_readonly("num_groups", &StudyData::num_groups)
      .def_property_readonly("num_individuals", &StudyData::num_individuals)
      .def_readonly("covariate_names", &StudyData::covariate_names)
      .def("rows",
           [](const StudyData& s) {
             py::list out;
             for (const auto& g : s.groups) {
               for (const auto& r : g.members) {
                 out.append(py::make_tuple(g.group_id, r.individual_id, r.covariates, r.treatment, r.observed_time,
                                           r.event));
               }
             }
             return out;
           },
           "(group_id, individual_id, covariates, treatment, time, event) per individual")
      .def("to_csv", [](const StudyData& s, const std::string& path) { write_study_csv(path, s); })
      .def("csv_text", [](const StudyData& s) {
        std::ostringstream out;
        write_study_csv(out, s);
        return out.str();
      });

  m.def("read_csv", [](const std::string& path) { return read_study_csv(path); });
  m.def("parse_csv", [](const std::string& text) {
    std::istringstream in(text);
    return parse_study_csv(in, "<string>");
  });

  m.def("simulate", [](const std::string& params_json) { return simulate_dataset(dgp_from_json(parse(params_json))).data; },
        py::arg("params_json") = "{}");

  m.def("default_simulation", []() { return to_json(DgpParams{}).dump(); });

  m.def(
      "fit_propensity",
      [](const StudyData& s, const std::vector<std::string>& columns, bool intercept, double compliance, int nodes,
         bool adaptive) {
        const PropensityDesign design{columns, intercept};
        QuadratureConfig quad;
        quad.num_nodes = nodes;
        quad.adaptive = adaptive;
        const auto fit = fit_propensity(s, design, default_propensity_init(s, design, compliance), quad);
        return to_json(fit, design, quad).dump();
      },
      py::arg("study"), py::arg("columns"), py::arg("intercept") = true, py::arg("compliance") = 1.0,
      py::arg("nodes") = 25, py::arg("adaptive") = false);

  m.def(
      "fit_censoring",
      [](const StudyData& s, const std::vector<std::string>& columns) {
        const CensoringDesign design{columns};
        return to_json(fit_censoring(s, design, default_censoring_init(s, design)), design).dump();
      },
      py::arg("study"), py::arg("columns"));

  m.def(
      "estimate_mu",
      [](const StudyData& s, const std::string& propensity_json, const std::optional<std::string>& censoring_json,
         const std::vector<PyTarget>& targets) {
        const auto n = load_nuisance(propensity_json, censoring_json);
        WeightModel wm;
        wm.propensity = {n.theta.beta, n.model.propensity_design, n.model.quad};
        if (n.model.censoring_design) wm.censoring = CensoringModel{*n.theta.gamma, *n.model.censoring_design};
        Json out = Json::array();
        for (const auto& e : estimate_mu(s, to_targets(targets), wm)) out.push_back(mu_json(e));
        return out.dump();
      },
      py::arg("study"), py::arg("propensity_json"), py::arg("censoring_json"), py::arg("targets"));

  m.def(
      "estimate_effects",
      [](const StudyData& s, const std::string& propensity_json, const std::optional<std::string>& censoring_json,
         const std::vector<double>& times, const std::vector<double>& alphas, double reference, double level,
         bool t_intervals) {
        const auto n = load_nuisance(propensity_json, censoring_json);
        EffectOptions opt;
        opt.level = level;
        opt.t_intervals = t_intervals;
        const auto res = estimate_effects(s, times, alphas, reference, n.model, n.theta, opt);
        Json out;
        out["mu"] = Json::array();
        for (const auto& e : res.mu) out["mu"].push_back(mu_json(e));
        out["effects"] = Json::array();
        for (const auto& r : res.effects.rows) {
          Json j;
          j["effect"] = effect_name(r.kind);
          j["t"] = r.time;
          j["alpha1"] = r.alpha1;
          j["alpha2"] = r.alpha2 ? Json(*r.alpha2) : Json(nullptr);
          j["estimate"] = r.estimate;
          j["se"] = r.std_error;
          j["ci_low"] = r.ci_low;
          j["ci_high"] = r.ci_high;
          out["effects"].push_back(std::move(j));
        }
        out["excluded_groups"] = res.effects.excluded_groups;
        out["sandwich"] = to_json(res.sandwich);
        return out.dump();
      },
      py::arg("study"), py::arg("propensity_json"), py::arg("censoring_json"), py::arg("times"), py::arg("alphas"),
      py::arg("reference_alpha"), py::arg("level") = 0.95, py::arg("t_intervals") = false);

  m.def(
      "compute_truth",
      [](const std::string& params_json, const std::vector<PyTarget>& targets, std::size_t oracle_groups,
         std::uint64_t seed, int threads) {
        const auto specs = to_targets(targets);
        py::gil_scoped_release release;
        return compute_truth(dgp_from_json(parse(params_json)), specs, oracle_groups, seed, threads);
      },
      py::arg("params_json"), py::arg("targets"), py::arg("oracle_groups") = 1'000'000, py::arg("seed") = 7,
      py::arg("threads") = 0);

  m.def(
      "replicate",
      [](const std::string& params_json, const std::vector<PyTarget>& targets, int reps, const std::string& mode,
         std::optional<std::vector<double>> truth, std::size_t oracle_groups, std::uint64_t truth_seed,
         int threads) {
        ReplicationConfig c;
        c.dgp = dgp_from_json(parse(params_json));
        c.targets = to_targets(targets);
        c.reps = reps;
        c.mode = parse_weight_mode(mode);
        c.truth = std::move(truth);
        c.truth_groups = oracle_groups;
        c.truth_seed = truth_seed;
        c.threads = threads;
        ReplicationTable t;
        {
          py::gil_scoped_release release;
          t = replicate(c);
        }
        Json out;
        out["m"] = t.m;
        out["n"] = t.n;
        out["mode"] = weight_mode_name(t.mode);
        out["rows"] = Json::array();
        for (const auto& r : t.rows) {
          Json j;
          j["t"] = r.spec.time_horizon;
          j["a"] = r.spec.own_treatment ? Json(*r.spec.own_treatment) : Json(nullptr);
          j["alpha"] = r.spec.alpha;
          j["truth"] = r.truth;
          j["mean_estimate"] = r.mean_estimate;
          j["bias"] = r.bias;
          j["ese"] = r.ese;
          j["ase"] = r.ase;
          j["ec"] = r.ec;
          j["ec_t"] = r.ec_t;
          j["n_ok"] = r.n_ok;
          j["n_failed"] = r.n_failed;
          out["rows"].push_back(std::move(j));
        }
        out["failures"] = t.failures;
        return out.dump();
      },
      py::arg("params_json"), py::arg("targets"), py::arg("reps") = 200, py::arg("mode") = "fitted",
      py::arg("truth") = std::nullopt, py::arg("oracle_groups") = 1'000'000, py::arg("truth_seed") = 7,
      py::arg("threads") = 0);

  m.def("policy_prob", [](const std::vector<int>& a, double alpha) { return group_policy_prob(a, alpha); });
  m.def("log_policy_prob", &log_policy_prob, py::arg("treated"), py::arg("size"), py::arg("alpha"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
