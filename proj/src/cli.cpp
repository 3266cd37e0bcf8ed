#include "ipcwi/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ipcwi/errors.hpp"

namespace ipcwi {

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& target) {
  if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw InputError(fmt::format("unknown config key '{}{}'", where, key));
    }
  }
}

Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception&) {
    return Json(text);
  }
}

std::filesystem::path fit_path(const RunConfig& c, const std::optional<std::filesystem::path>& p, const char* name) {
  return p ? *p : c.output_dir / name;
}

void prepare_output(const RunConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.output_dir, ec);
  if (ec) throw InputError(fmt::format("cannot create output directory '{}': {}", c.output_dir.string(), ec.message()));
}

std::vector<TargetSpec> truth_targets(const RunConfig& c) {
  std::vector<double> levels = c.alphas;
  if (std::find(levels.begin(), levels.end(), c.reference_alpha) == levels.end()) levels.push_back(c.reference_alpha);
  std::vector<TargetSpec> out;
  for (double t : c.times) {
    for (double a : levels) {
      out.push_back({t, 0, a});
      out.push_back({t, 1, a});
      out.push_back({t, std::nullopt, a});
    }
  }
  return out;
}

std::string to_text(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("invalid config: " + msg); };
  if (times.empty()) fail("targets.times is empty");
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) fail(fmt::format("time {} must be finite and nonnegative", t));
  }
  if (alphas.empty()) fail("targets.alphas is empty");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) fail(fmt::format("alpha {} must lie in (0, 1)", a));
  }
  if (!(reference_alpha > 0.0 && reference_alpha < 1.0)) fail("reference_alpha must lie in (0, 1)");
  for (double t : plot_times) {
    if (!(t >= 0.0) || !std::isfinite(t)) fail("plot_times must be finite and nonnegative");
  }
  if (!(level > 0.0 && level < 1.0)) fail("ci.level must lie in (0, 1)");
  if (!(compliance > 0.0 && compliance <= 1.0)) fail("propensity.compliance must lie in (0, 1]");
  if (quad.num_nodes < 5) fail("quadrature.nodes must be at least 5");
  if (!(opt.gradient_tolerance > 0.0) || opt.max_iterations < 1) fail("optimizer settings must be positive");
  if (!(jac.relative_step > 0.0)) fail("jacobian.relative_step must be positive");
  if (!(effects_scale > 0.0)) fail("effects_scale must be positive");
  if (reps < 2) fail("replicate.reps must be at least 2");
  if (truth_groups < 1) fail("truth.oracle_groups must be at least 1");
  for (int m : m_values) {
    if (m < 1) fail("replicate.m_values must be positive");
  }
  try {
    dgp.validate();
  } catch (const DomainError& e) {
    fail(e.what());
  }
}

Json apply_overrides(Json base, const std::vector<std::string>& overrides) {
  if (base.is_null()) base = Json::object();
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError(fmt::format("override '{}' is not key=value", ov));
    const std::string key = ov.substr(0, eq);
    Json* node = &base;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw InputError(fmt::format("override key '{}' has an empty component", key));
      if (!node->is_object()) {
        if (!node->is_null()) throw InputError(fmt::format("override '{}' descends into a non-object", key));
        *node = Json::object();
      }
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = parse_override_value(ov.substr(eq + 1));
  }
  return base;
}

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw InputError("config must be a JSON object");
  try {
    reject_unknown(j,
                   {"command", "data", "output_dir", "propensity_fit", "censoring_fit", "propensity", "censoring",
                    "quadrature", "optimizer", "jacobian", "targets", "plot_times", "ci", "effects_scale",
                    "simulation", "truth", "replicate", "threads", "seed"},
                   "");
    if (j.contains("data")) c.data = j.at("data").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("propensity_fit")) c.propensity_fit = j.at("propensity_fit").get<std::string>();
    if (j.contains("censoring_fit")) c.censoring_fit = j.at("censoring_fit").get<std::string>();
    if (j.contains("propensity")) {
      const auto& p = j.at("propensity");
      reject_unknown(p, {"columns", "intercept", "compliance"}, "propensity.");
      read_opt(p, "columns", c.propensity_design.columns);
      read_opt(p, "intercept", c.propensity_design.intercept);
      read_opt(p, "compliance", c.compliance);
    }
    if (j.contains("censoring")) {
      const auto& p = j.at("censoring");
      if (p.is_null() || p == false) {
        c.censoring_design.reset();
      } else {
        reject_unknown(p, {"columns"}, "censoring.");
        CensoringDesign d;
        read_opt(p, "columns", d.columns);
        c.censoring_design = d;
      }
    }
    if (j.contains("quadrature")) {
      const auto& q = j.at("quadrature");
      reject_unknown(q, {"nodes", "adaptive"}, "quadrature.");
      read_opt(q, "nodes", c.quad.num_nodes);
      read_opt(q, "adaptive", c.quad.adaptive);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"gradient_tolerance", "max_iterations", "initial_step", "line_search_tolerance"},
                     "optimizer.");
      read_opt(o, "gradient_tolerance", c.opt.gradient_tolerance);
      read_opt(o, "max_iterations", c.opt.max_iterations);
      read_opt(o, "initial_step", c.opt.initial_step);
      read_opt(o, "line_search_tolerance", c.opt.line_search_tolerance);
    }
    if (j.contains("jacobian")) {
      reject_unknown(j.at("jacobian"), {"relative_step"}, "jacobian.");
      read_opt(j.at("jacobian"), "relative_step", c.jac.relative_step);
    }
    if (j.contains("targets")) {
      const auto& t = j.at("targets");
      reject_unknown(t, {"times", "alphas", "reference_alpha"}, "targets.");
      read_opt(t, "times", c.times);
      read_opt(t, "alphas", c.alphas);
      read_opt(t, "reference_alpha", c.reference_alpha);
    }
    read_opt(j, "plot_times", c.plot_times);
    if (j.contains("ci")) {
      const auto& ci = j.at("ci");
      reject_unknown(ci, {"level", "type"}, "ci.");
      read_opt(ci, "level", c.level);
      if (ci.contains("type")) {
        const auto type = ci.at("type").get<std::string>();
        if (type != "normal" && type != "t") throw InputError(fmt::format("ci.type '{}' is not normal or t", type));
        c.t_intervals = type == "t";
      }
    }
    read_opt(j, "effects_scale", c.effects_scale);
    if (j.contains("simulation")) c.dgp = dgp_from_json(j.at("simulation"));
    if (j.contains("seed")) c.dgp.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      reject_unknown(t, {"oracle_groups", "seed"}, "truth.");
      read_opt(t, "oracle_groups", c.truth_groups);
      read_opt(t, "seed", c.truth_seed);
    }
    if (j.contains("replicate")) {
      const auto& r = j.at("replicate");
      reject_unknown(r, {"reps", "mode", "m_values"}, "replicate.");
      read_opt(r, "reps", c.reps);
      if (r.contains("mode")) c.mode = parse_weight_mode(r.at("mode").get<std::string>());
      read_opt(r, "m_values", c.m_values);
    }
    read_opt(j, "threads", c.threads);
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("invalid config: {}", e.what()));
  }
  c.validate();
  return c;
}

void cmd_simulate(const RunConfig& c, std::ostream& log) {
  c.validate();
  prepare_output(c);
  const SimulatedStudy sim = simulate_dataset(c.dgp);
  write_study_csv(c.output_dir / "data.csv", sim.data);
  const auto targets = truth_targets(c);
  const auto truth = compute_truth(c.dgp, targets, c.truth_groups, c.truth_seed, c.threads);
  Json j = truth_json(targets, truth, c.truth_groups, c.truth_seed);
  j["simulation"] = to_json(c.dgp);
  write_json_file(c.output_dir / "truth.json", j);
  log << fmt::format("simulated {} groups x {} members (seed {}) -> {}\n", c.dgp.m, c.dgp.n, c.dgp.seed,
                     (c.output_dir / "data.csv").string());
  log << fmt::format("true mu over {} targets from {} oracle groups -> {}\n", targets.size(), c.truth_groups,
                     (c.output_dir / "truth.json").string());
}

void cmd_fit(const RunConfig& c, std::ostream& log) {
  c.validate();
  if (c.data.empty()) throw InputError("fit needs an input data file (config key 'data' or --data)");
  const StudyData data = read_study_csv(c.data);
  prepare_output(c);

  if (c.censoring_design) {
    const auto fit = fit_censoring(data, *c.censoring_design, default_censoring_init(data, *c.censoring_design), c.opt);
    write_json_file(fit_path(c, c.censoring_fit, "censoring.json"), to_json(fit, *c.censoring_design));
    log << fmt::format("censoring: converged={} loglik={:.6g} theta_h={:.4g} theta_r={:.4g}\n", fit.converged,
                       fit.loglik, fit.params.theta_h, fit.params.theta_r);
    for (const auto& w : fit.warnings) log << "  warning: " << w << '\n';
  }
  const auto fit = fit_propensity(data, c.propensity_design,
                                  default_propensity_init(data, c.propensity_design, c.compliance), c.quad, c.opt);
  write_json_file(fit_path(c, c.propensity_fit, "propensity.json"), to_json(fit, c.propensity_design, c.quad));
  log << fmt::format("propensity: converged={} loglik={:.6g} theta_s={:.4g}\n", fit.converged, fit.loglik,
                     fit.params.theta_s);
  for (const auto& w : fit.warnings) log << "  warning: " << w << '\n';
}

void cmd_estimate(const RunConfig& c, std::ostream& log) {
  c.validate();
  if (c.data.empty()) throw InputError("estimate needs an input data file (config key 'data' or --data)");
  const StudyData data = read_study_csv(c.data);

  StackedModel model;
  model.propensity_design = c.propensity_design;
  model.quad = c.quad;
  StackedTheta theta;
  const auto ppath = fit_path(c, c.propensity_fit, "propensity.json");
  if (!std::filesystem::exists(ppath)) {
    throw InputError(fmt::format("propensity fit '{}' not found; run 'fit' first", ppath.string()));
  }
  theta.beta = propensity_params_from_json(read_json_file(ppath), &model.propensity_design, &model.quad);
  if (c.censoring_design) {
    const auto cpath = fit_path(c, c.censoring_fit, "censoring.json");
    if (!std::filesystem::exists(cpath)) {
      throw InputError(fmt::format("censoring fit '{}' not found; run 'fit' first", cpath.string()));
    }
    CensoringDesign design = *c.censoring_design;
    theta.gamma = censoring_params_from_json(read_json_file(cpath), &design);
    model.censoring_design = design;
  }
  prepare_output(c);

  EffectOptions opts;
  opts.level = c.level;
  opts.t_intervals = c.t_intervals;
  opts.jac = c.jac;
  const EffectsResult res = estimate_effects(data, c.times, c.alphas, c.reference_alpha, model, theta, opts);

  write_text_file(c.output_dir / "mu.csv", to_text([&](std::ostream& os) {
                    write_mu_csv(os, res.mu, c.level, c.t_intervals, &res.sandwich);
                  }));
  write_text_file(c.output_dir / "effects.csv",
                  to_text([&](std::ostream& os) { write_effects_csv(os, res.effects, c.effects_scale); }));

  std::vector<double> plot_times = c.plot_times;
  if (plot_times.empty()) {
    double max_time = 0.0;
    for (const auto& g : data.groups) {
      for (const auto& r : g.members) max_time = std::max(max_time, r.observed_time);
    }
    constexpr int kPoints = 50;
    for (int k = 1; k <= kPoints; ++k) plot_times.push_back(max_time * k / kPoints);
  }
  RunConfig curve_cfg = c;
  curve_cfg.times = plot_times;
  WeightModel wm;
  wm.propensity = {theta.beta, model.propensity_design, model.quad};
  if (model.censoring_design) wm.censoring = CensoringModel{*theta.gamma, *model.censoring_design};
  const auto curve = estimate_mu(data, truth_targets(curve_cfg), wm);
  write_text_file(c.output_dir / "plotdata.csv", to_text([&](std::ostream& os) { write_plotdata_csv(os, curve); }));

  log << fmt::format("{} groups ({} excluded), {} targets, {} effect rows\n", data.num_groups(),
                     res.effects.excluded_groups, res.mu.size(), res.effects.rows.size());
  log << fmt::format("{:>3} {:>7} {:>6} {:>6} {:>10} {:>9}  {}\n", "eff", "t", "alpha1", "alpha2", "estimate", "se",
                     "interval");
  for (const auto& r : res.effects.rows) {
    log << fmt::format("{:>3} {:>7.4g} {:>6.3g} {:>6} {:>10.4g} {:>9.3g}  [{:.4g}, {:.4g}]\n", effect_name(r.kind),
                       r.time, r.alpha1, r.alpha2 ? fmt::format("{:.3g}", *r.alpha2) : "", c.effects_scale * r.estimate,
                       c.effects_scale * r.std_error, c.effects_scale * r.ci_low, c.effects_scale * r.ci_high);
  }
}

void cmd_replicate(const RunConfig& c, std::ostream& log) {
  c.validate();
  prepare_output(c);
  ReplicationConfig rc;
  rc.dgp = c.dgp;
  rc.reps = c.reps;
  for (double t : c.times) {
    const auto tg = grid_targets(t, c.alphas);
    rc.targets.insert(rc.targets.end(), tg.begin(), tg.end());
  }
  rc.mode = c.mode;
  rc.quad = c.quad;
  rc.opt = c.opt;
  rc.jac = c.jac;
  rc.level = c.level;
  rc.threads = c.threads;
  rc.truth_groups = c.truth_groups;
  rc.truth_seed = c.truth_seed;

  // The truth depends on the group size only, so one oracle serves the sweep.
  const auto truth = compute_truth(rc.dgp, rc.targets, rc.truth_groups, rc.truth_seed, rc.threads);
  write_json_file(c.output_dir / "truth.json", truth_json(rc.targets, truth, rc.truth_groups, rc.truth_seed));
  rc.truth = truth;

  std::vector<int> ms = c.m_values.empty() ? std::vector<int>{c.dgp.m} : c.m_values;
  for (int m : ms) {
    rc.dgp.m = m;
    const ReplicationTable table = replicate(rc);
    const auto name = fmt::format("replication_m{}.csv", m);
    write_text_file(c.output_dir / name, to_text([&](std::ostream& os) { write_replication_csv(os, table); }));
    if (!table.failures.empty()) {
      std::string text;
      for (const auto& f : table.failures) text += f + "\n";
      write_text_file(c.output_dir / fmt::format("failures_m{}.txt", m), text);
    }
    log << format_replication_table(table) << "-> " << (c.output_dir / name).string() << "\n\n";
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e)) return 1;
  if (dynamic_cast<const DomainError*>(&e)) return 1;
  if (dynamic_cast<const ModelError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 3;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"IPCW estimation of treatment effects under partial interference"};
  app.require_subcommand(1);
  std::string config_file, data_file, output_dir, ci;
  std::vector<std::string> overrides;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "JSON config file");
    sub->add_option("--set", overrides, "Override a config key (dotted path), e.g. --set simulation.m=50")
        ->take_all()
        ->allow_extra_args(false);
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
    sub->add_option("--seed", seed, "Simulation master seed");
    sub->add_option("--ci", ci, "Interval type")->check(CLI::IsMember({"normal", "t"}));
    sub->add_option("-o,--output-dir", output_dir, "Output directory");
  };
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset and its true target values");
  auto* fit = app.add_subcommand("fit", "Fit the propensity and censoring models");
  auto* est = app.add_subcommand("estimate", "Estimate mu and the effect contrasts with sandwich SEs");
  auto* rep = app.add_subcommand("replicate", "Run the simulation study");
  for (auto* s : {sim, fit, est, rep}) add_common(s);
  for (auto* s : {fit, est}) s->add_option("-d,--data", data_file, "Input CSV");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::ostringstream os;
    app.exit(e, os, err);
    err << os.str();
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    Json j = config_file.empty() ? Json::object() : read_json_file(config_file);
    j = apply_overrides(std::move(j), overrides);
    if (!data_file.empty()) j["data"] = data_file;
    if (!output_dir.empty()) j["output_dir"] = output_dir;
    if (threads) j["threads"] = *threads;
    if (seed) j["seed"] = *seed;
    if (!ci.empty()) j["ci"]["type"] = ci;
    RunConfig c = config_from_json(j);
    // Relative paths inside a config file resolve against the working directory.
    if (sim->parsed()) cmd_simulate(c, out);
    else if (fit->parsed()) cmd_fit(c, out);
    else if (est->parsed()) cmd_estimate(c, out);
    else cmd_replicate(c, out);
    return 0;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << "error: " << e.what() << '\n';
    if (const auto* ce = dynamic_cast<const ConvergenceError*>(&e); ce && !ce->trace().empty()) {
      const auto& last = ce->trace().back();
      err << fmt::format("  last iterate: iteration {} objective {:.10g} max|grad| {:.3g}\n", last.iteration,
                         last.objective, last.gradient_norm);
    }
    return code;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ipcwi
