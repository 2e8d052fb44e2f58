// Command-line front end: minimize, check-nd, expand, short-time, mc-validate
// and replay. Reports are JSON (default) or CSV; every JSON report embeds a
// run manifest from which `replay` reproduces it.

#include "smallnoise/parallel.hpp"
#include "smallnoise/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace smallnoise;

namespace {

enum Exit { kOk = 0, kFailure = 1, kNotCertified = 2, kNoControl = 3 };

struct Options {
  std::string command;
  std::string model;
  std::vector<std::string> params;
  std::string target;
  double horizon = 1.0;
  int multistart = 128;
  std::uint64_t seed = 20240601;
  int steps = kDefaultSteps;
  std::string out;
  std::string format = "json";
  bool hessian_oracle = false;
  bool strict_nd = false;
  std::string epsilons = "0.4,0.3,0.2,0.15,0.1";
  int paths = 100000;
  int euler_steps = 400;
  std::string radii;
  std::string reference;
  std::string plot_data;
  std::string emit_path;
  std::string projection;
  int jobs = 0;
};

// shortest decimal that reads back to the same double
std::string num(double v) {
  char buf[32];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) fail(ErrorKind::InvalidArgument, "malformed " + what + ": '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::InvalidArgument, "empty " + what);
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Params parse_params(const std::vector<std::string>& items) {
  Params out;
  for (const auto& item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::InvalidArgument, "--param expects k=v, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    if (out.count(key)) fail(ErrorKind::InvalidArgument, "--param " + key + " given twice");
    out[key] = parse_list(item.substr(eq + 1), "value of --param " + key).at(0);
  }
  return out;
}

std::vector<int> parse_projection(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_list(text, "projection")) {
    if (v != std::floor(v) || v < 0) fail(ErrorKind::InvalidArgument, "projection entries are coordinate indices");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

struct LoadedModel {
  SystemPtr sys;
  Json config_path = nullptr;
};

LoadedModel load_model(const Options& o) {
  LoadedModel out;
  const Params params = parse_params(o.params);
  const std::vector<int> proj = o.projection.empty() ? std::vector<int>{} : parse_projection(o.projection);
  const std::string prefix = "builtin:";
  if (o.model.rfind(prefix, 0) == 0) {
    out.sys = make_builtin(o.model.substr(prefix.size()), params, proj);
    return out;
  }
  Json doc = read_model_document(o.model);
  out.config_path = o.model;
  if (!params.empty()) {
    if (!doc.contains("builtin")) fail(ErrorKind::Config, "--param applies to builtin models only");
    for (const auto& [k, v] : params) doc["params"][k] = v;
  }
  if (!proj.empty()) {
    if (doc.contains("projection") || doc.contains("projection_mask")) {
      fail(ErrorKind::Config, "--projection conflicts with the projection given in " + o.model);
    }
    doc["projection"] = proj;
  }
  out.sys = load_system(doc);
  return out;
}

MultistartConfig multistart_config(const Options& o) {
  if (o.multistart < 1) fail(ErrorKind::InvalidArgument, "--multistart must be positive");
  MultistartConfig cfg;
  cfg.low_discrepancy = o.multistart / 2;
  cfg.random = o.multistart - cfg.low_discrepancy;
  cfg.seed = o.seed;
  cfg.steps = o.steps;
  cfg.newton.jobs = o.jobs;
  return cfg;
}

NdOptions nd_options(const Options& o) {
  NdOptions nd;
  nd.steps = o.steps;
  nd.hessian_oracle = o.hessian_oracle;
  nd.jobs = o.jobs;
  return nd;
}

// Canonical argument list: re-parsing it reproduces the run.
std::vector<std::string> canonical_argv(const Options& o) {
  std::vector<std::string> a = {o.command, "--model", o.model};
  Params params = parse_params(o.params);
  for (const auto& [k, v] : params) {
    a.push_back("--param");
    a.push_back(k + "=" + num(v));
  }
  std::string target;
  for (double v : parse_list(o.target, "target")) target += (target.empty() ? "" : ",") + num(v);
  a.insert(a.end(), {"--target", target});
  if (o.command != "short-time") a.insert(a.end(), {"--horizon", num(o.horizon)});
  if (o.command != "mc-validate") {
    a.insert(a.end(), {"--multistart", std::to_string(o.multistart), "--steps", std::to_string(o.steps)});
  }
  a.insert(a.end(), {"--seed", std::to_string(o.seed), "--format", o.format, "--jobs",
                     std::to_string(resolve_jobs(o.jobs))});
  if (!o.projection.empty()) a.insert(a.end(), {"--projection", o.projection});
  if (o.hessian_oracle) a.push_back("--hessian-oracle");
  if (o.strict_nd) a.push_back("--strict-nd");
  if (o.command == "expand" || o.command == "short-time" || o.command == "mc-validate") {
    a.insert(a.end(), {"--epsilons", o.epsilons});
  }
  if (o.command == "mc-validate") {
    a.insert(a.end(), {"--paths", std::to_string(o.paths), "--euler-steps", std::to_string(o.euler_steps)});
    if (!o.radii.empty()) a.insert(a.end(), {"--radii", o.radii});
    if (!o.reference.empty()) a.insert(a.end(), {"--reference", o.reference});
  }
  return a;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json manifest(const Options& o, const LoadedModel& model) {
  const auto ms = multistart_config(o);
  const NdOptions nd = nd_options(o);
  Json resolved = {{"target", to_json(to_vec(parse_list(o.target, "target")))},
                   {"horizon", o.command == "short-time" ? 1.0 : o.horizon},
                   {"params", parse_params(o.params)},
                   {"projection", o.projection},
                   {"steps", o.steps},
                   {"multistart",
                    {{"low_discrepancy", ms.low_discrepancy},
                     {"random", ms.random},
                     {"box_scale", 2.0 * std::numbers::pi},
                     {"tol_energy_tie", ms.tol_energy_tie},
                     {"continuum_threshold", ms.continuum_threshold},
                     {"newton",
                      {{"max_iterations", ms.newton.max_iterations},
                       {"tol_bvp", ms.newton.tol_bvp},
                       {"tol_dedup", ms.newton.tol_dedup},
                       {"polish_iterations", ms.newton.polish_iterations}}}}},
                   {"nd",
                    {{"hessian_oracle", nd.hessian_oracle},
                     {"hessian_grid", nd.hessian_grid},
                     {"tol_sv", nd.thresholds.tol_sv},
                     {"tol_focal", nd.thresholds.tol_focal},
                     {"undecided_band", nd.thresholds.undecided_band},
                     {"tol_eig", nd.thresholds.tol_eig}}},
                   {"strict_nd", o.strict_nd},
                   {"format", o.format},
                   {"jobs", resolve_jobs(o.jobs)}};
  if (o.command == "expand" || o.command == "short-time" || o.command == "mc-validate") {
    resolved["epsilons"] = parse_list(o.epsilons, "epsilons");
  }
  if (o.command == "mc-validate") {
    resolved["paths"] = o.paths;
    resolved["euler_steps"] = o.euler_steps;
    resolved["bandwidth"] = "silverman";
    resolved["bootstrap"] = 100;
    resolved["radii"] = o.radii.empty() ? std::vector<double>{} : parse_list(o.radii, "radii");
    resolved["reference"] = o.reference.empty() ? Json(nullptr) : Json(o.reference);
  }
  return {{"command", o.command},
          {"model", o.model},
          {"config_path", model.config_path},
          {"options", resolved},
          {"seed", o.seed},
          {"tool_version", std::string(kVersion)},
          {"timestamp", utc_now()},
          {"argv", canonical_argv(o)}};
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out);
  if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + o.out);
  f << text;
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + path);
  body(f);
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// exit code from an ND outcome
int nd_exit(const Options& o, const NdReport& nd, const MinimizerSet& set) {
  if (set.degenerate_zero_control) {
    std::cerr << "error: the target is reached by the zero control, where the Malliavin covariance C(0) is "
                 "singular";
    if (!nd.records.empty()) {
      std::cerr << " (det C(0) = " << nd.records.front().malliavin.determinant() << ", smallest singular value "
                << nd.records.front().invertibility.smallest_singular_value << ")";
    }
    std::cerr << "; no density expansion at this point\n";
    return kNoControl;
  }
  if (nd.verdict != Verdict::NdHolds) {
    std::cerr << "warning: ND verdict " << to_string(nd.verdict) << ": results are not certified\n";
    if (o.strict_nd) return kNotCertified;
  }
  return kOk;
}

int cmd_minimize(const Options& o) {
  auto model = load_model(o);
  const auto& sys = *model.sys;
  TargetSpec target{to_vec(parse_list(o.target, "target")), o.horizon};
  auto set = enumerate_minimizers(sys, target, multistart_config(o));
  if (!o.emit_path.empty()) {
    write_file(o.emit_path, [&](std::ostream& f) { write_path_csv(f, set.minimizers.front().path); });
  }
  if (o.format == "csv") {
    std::ostringstream s;
    write_minimizers_csv(s, sys, set);
    emit(o, s.str());
  } else {
    Json r = {{"report", "minimizer_set"},
              {"manifest", manifest(o, model)},
              {"system", system_json(sys)},
              {"target", {{"a", to_json(target.a)}, {"T", target.T}}},
              {"minimizer_set", to_json(sys, set)}};
    emit(o, r.dump(2) + "\n");
  }
  return kOk;
}

int cmd_check_nd(const Options& o) {
  auto model = load_model(o);
  const auto& sys = *model.sys;
  TargetSpec target{to_vec(parse_list(o.target, "target")), o.horizon};
  auto set = enumerate_minimizers(sys, target, multistart_config(o));
  auto nd = assemble_nd_report(sys, set, target, nd_options(o));
  if (o.format == "csv") {
    std::ostringstream s;
    write_nd_csv(s, nd);
    emit(o, s.str());
  } else {
    Json r = {{"report", "nd_report"},
              {"manifest", manifest(o, model)},
              {"system", system_json(sys)},
              {"target", {{"a", to_json(target.a)}, {"T", target.T}}},
              {"nd_report", to_json(nd)},
              {"minimizer_set", to_json(sys, set)}};
    emit(o, r.dump(2) + "\n");
  }
  return nd_exit(o, nd, set);
}

int finish_expansion(const Options& o, const LoadedModel& model, const VectorFieldSystem& sys,
                     const ExpansionResult& r) {
  warn(r.warnings);
  if (!o.plot_data.empty()) {
    auto pts = plot_data(r, parse_list(o.epsilons, "epsilons"));
    write_file(o.plot_data, [&](std::ostream& f) { write_plot_csv(f, pts); });
  }
  if (o.format == "csv") {
    std::ostringstream s;
    write_expansion_csv(s, r);
    emit(o, s.str());
  } else {
    Json j = {{"report", "expansion"},
              {"manifest", manifest(o, model)},
              {"system", system_json(sys)},
              {"expansion", to_json(sys, r)}};
    emit(o, j.dump(2) + "\n");
  }
  return nd_exit(o, r.nd_report, r.minimizers);
}

ExpansionOptions expansion_options(const Options& o) {
  ExpansionOptions opt;
  opt.multistart = multistart_config(o);
  opt.nd = nd_options(o);
  opt.jobs = o.jobs;
  return opt;
}

int cmd_expand(const Options& o) {
  auto model = load_model(o);
  const auto& sys = *model.sys;
  TargetSpec target{to_vec(parse_list(o.target, "target")), o.horizon};
  auto r = expand(sys, target, expansion_options(o));
  return finish_expansion(o, model, sys, r);
}

int cmd_short_time(const Options& o) {
  auto model = load_model(o);
  auto r = short_time(model.sys, to_vec(parse_list(o.target, "target")), expansion_options(o));
  auto scaled = make_short_time_system(model.sys);
  return finish_expansion(o, model, *scaled, r);
}

int cmd_mc_validate(const Options& o) {
  auto model = load_model(o);
  const auto& sys = *model.sys;
  McConfig cfg;
  cfg.epsilons = parse_list(o.epsilons, "epsilons");
  cfg.n_paths = o.paths;
  cfg.euler_steps = o.euler_steps;
  cfg.seed = o.seed;
  cfg.a = to_vec(parse_list(o.target, "target"));
  cfg.T = o.horizon;
  if (!o.radii.empty()) cfg.radii = parse_list(o.radii, "radii");
  cfg.jobs = o.jobs;
  std::optional<double> c1, c2;
  if (!o.reference.empty()) {
    std::ifstream f(o.reference);
    if (!f) fail(ErrorKind::Config, "cannot read reference report " + o.reference);
    Json ref = Json::parse(f);
    const Json& e = ref.contains("expansion") ? ref["expansion"] : ref;
    if (!e.contains("c1") || !e.contains("c2")) fail(ErrorKind::Config, o.reference + " is not an expansion report");
    c1 = e["c1"].get<double>();
    c2 = e["c2"].get<double>();
  }
  auto rep = mc_validate(sys, cfg, c1, c2);
  warn(rep.warnings);
  if (!o.plot_data.empty()) {
    write_file(o.plot_data, [&](std::ostream& f) { write_mc_plot_csv(f, rep, sys.l()); });
  }
  if (o.format == "csv") {
    std::ostringstream s;
    write_mc_csv(s, rep);
    emit(o, s.str());
  } else {
    Json j = {{"report", "mc_report"},
              {"manifest", manifest(o, model)},
              {"system", system_json(sys)},
              {"mc_report", to_json(rep)}};
    emit(o, j.dump(2) + "\n");
  }
  return rep.valid ? kOk : kFailure;
}

void add_model_options(CLI::App* sub, Options& o, bool horizon) {
  sub->add_option("--model", o.model, "builtin:<name> or a model file (.json/.toml)")->required();
  sub->add_option("--param", o.params, "builtin parameter k=v (repeatable)");
  sub->add_option("--projection", o.projection, "projected coordinates, comma list");
  sub->add_option("--target", o.target, "target a, comma list")->required();
  if (horizon) sub->add_option("--horizon", o.horizon, "time horizon T")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "report path (default stdout)");
  sub->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--jobs", o.jobs, "worker threads (default SMALLNOISE_JOBS or all cores)");
}

void add_solver_options(CLI::App* sub, Options& o) {
  sub->add_option("--multistart", o.multistart, "number of shooting starts");
  sub->add_option("--steps", o.steps, "RK4 steps (even)");
}

void add_nd_options(CLI::App* sub, Options& o) {
  sub->add_flag("--hessian-oracle", o.hessian_oracle, "also run the second-variation check");
  sub->add_flag("--strict-nd", o.strict_nd, "exit 2 unless the ND verdict is ND_HOLDS");
}

int run(int argc, const char* const* argv);

int cmd_replay(const std::string& report_path, const std::string& out) {
  std::ifstream f(report_path);
  if (!f) fail(ErrorKind::Config, "cannot read " + report_path);
  Json rep = Json::parse(f);
  if (!rep.contains("manifest") || !rep["manifest"].contains("argv")) {
    fail(ErrorKind::Config, report_path + " carries no run manifest");
  }
  std::vector<std::string> args = {"smallnoise"};
  for (const auto& a : rep["manifest"]["argv"]) args.push_back(a.get<std::string>());
  if (!out.empty()) args.insert(args.end(), {"--out", out});
  std::vector<const char*> ptrs;
  for (const auto& a : args) ptrs.push_back(a.c_str());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Small-noise density expansions for projected hypoelliptic diffusions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Options o;

  auto* minimize = app.add_subcommand("minimize", "enumerate minimizing controls");
  add_model_options(minimize, o, true);
  add_solver_options(minimize, o);
  minimize->add_option("--emit-path", o.emit_path, "CSV of the first minimizer's extremal");

  auto* check = app.add_subcommand("check-nd", "non-degeneracy report");
  add_model_options(check, o, true);
  add_solver_options(check, o);
  add_nd_options(check, o);

  auto* exp = app.add_subcommand("expand", "small-noise expansion (c1, c2, l)");
  add_model_options(exp, o, true);
  add_solver_options(exp, o);
  add_nd_options(exp, o);
  exp->add_option("--epsilons", o.epsilons, "eps list for --emit-plot-data");
  exp->add_option("--emit-plot-data", o.plot_data, "CSV of the predicted log-density");

  auto* st = app.add_subcommand("short-time", "short-time expansion at T = 1");
  add_model_options(st, o, false);
  add_solver_options(st, o);
  add_nd_options(st, o);
  st->add_option("--epsilons", o.epsilons, "eps list for --emit-plot-data");
  st->add_option("--emit-plot-data", o.plot_data, "CSV of the predicted log-density");

  auto* mc = app.add_subcommand("mc-validate", "Monte Carlo check of (c1, c2)");
  add_model_options(mc, o, true);
  mc->add_option("--epsilons", o.epsilons, "strictly decreasing eps ladder");
  mc->add_option("--paths", o.paths, "paths per eps");
  mc->add_option("--euler-steps", o.euler_steps, "Euler-Maruyama steps");
  mc->add_option("--radii", o.radii, "localization radii, comma list");
  mc->add_option("--reference", o.reference, "expansion report with reference c1, c2");
  mc->add_option("--emit-plot-data", o.plot_data, "CSV of eps, g(eps) and the fitted curve");

  std::string replay_path, replay_out;
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a report");
  replay->add_option("report", replay_path, "report with a run manifest")->required();
  replay->add_option("--out", replay_out, "report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kFailure;
  }

  try {
    if (*replay) return cmd_replay(replay_path, replay_out);
    o.command = app.get_subcommands().front()->get_name();
    if (o.command == "minimize") return cmd_minimize(o);
    if (o.command == "check-nd") return cmd_check_nd(o);
    if (o.command == "expand") return cmd_expand(o);
    if (o.command == "short-time") return cmd_short_time(o);
    return cmd_mc_validate(o);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == ErrorKind::NoAdmissibleControl ? kNoControl : kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
