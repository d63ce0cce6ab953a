// Single-binary front end: one subcommand per study plus sampling, constants,
// exact distances, and regularity audits. Exit codes: 0 success, 1 failed
// assertion or runtime error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowlab/experiments.hpp"
#include "flowlab/io.hpp"

namespace {

using namespace flowlab;
using nlohmann::json;

struct CommandSpec {
  std::string config_path;
  std::string out_dir = "out";
  bool force = false;
  bool json_summary = false;
  int workers = 0;

  // sample-style overrides
  std::string flow;
  std::string perturb;
  int steps = -1;
  double delta = -1;
  int particles = -1;
  double eps = -1;
  long seed = -1;
};

void add_common(CLI::App* cmd, CommandSpec& spec, const char* config_flag) {
  cmd->add_option(config_flag, spec.config_path, "Run configuration file")->required();
  cmd->add_option("--out", spec.out_dir, "Output directory (kept as-is only with --force)");
  cmd->add_flag("--force", spec.force, "Allow writing into an existing, non-empty --out");
  cmd->add_flag("--json", spec.json_summary, "Emit the summary line as a JSON object");
  cmd->add_option("--workers", spec.workers, "Worker threads (default: machine core count)");
  cmd->add_option("--seed", spec.seed, "Override [experiment] seed");
}

void add_sample_overrides(CLI::App* cmd, CommandSpec& spec) {
  cmd->add_option("--flow", spec.flow, "Flow kind: follmer|rectified|prob-ode")
      ->check(CLI::IsMember({"follmer", "rectified", "prob-ode"}));
  cmd->add_option("--steps", spec.steps, "Override [schedule] steps");
  cmd->add_option("--delta", spec.delta, "Override [schedule] delta (early stop)");
  cmd->add_option("--particles", spec.particles, "Override [metric] particles");
  cmd->add_option("--eps", spec.eps, "Override [perturbation] eps");
  cmd->add_option("--perturb", spec.perturb, "Perturbation mode: none|random|adversarial")
      ->check(CLI::IsMember({"none", "random", "adversarial"}));
}

Config load_config(const CommandSpec& spec) {
  Config cfg = Config::parse_file(spec.config_path);
  if (!spec.flow.empty()) cfg.set("flow", "kind", ConfigValue(spec.flow));
  if (!spec.perturb.empty()) cfg.set("perturbation", "mode", ConfigValue(spec.perturb));
  if (spec.steps >= 0) cfg.set("schedule", "steps", ConfigValue(double(spec.steps)));
  if (spec.delta >= 0) cfg.set("schedule", "delta", ConfigValue(spec.delta));
  if (spec.particles >= 0) cfg.set("metric", "particles", ConfigValue(double(spec.particles)));
  if (spec.eps >= 0) cfg.set("perturbation", "eps", ConfigValue(spec.eps));
  if (spec.seed >= 0) cfg.set("experiment", "seed", ConfigValue(double(spec.seed)));
  std::cout << "# resolved configuration (digest " << hex64(cfg.digest()) << ")\n"
            << cfg.canonical() << std::flush;
  return cfg;
}

ExperimentContext make_context(const CommandSpec& spec) {
  ExperimentContext ctx;
  ctx.out_dir = spec.out_dir;
  ctx.workers = spec.workers;
  if (std::filesystem::exists(ctx.out_dir) && !std::filesystem::is_empty(ctx.out_dir) &&
      !spec.force)
    throw ConfigError("output directory '" + ctx.out_dir.string() +
                      "' is not empty; pass --force to reuse it");
  return ctx;
}

void summarize(const CommandSpec& spec, const std::string& command, bool ok, json details) {
  if (spec.json_summary) {
    json j;
    j["command"] = command;
    j["ok"] = ok;
    j["details"] = std::move(details);
    std::cout << j.dump() << "\n";
    return;
  }
  std::cout << command << ": " << (ok ? "ok" : "FAIL");
  for (auto it = details.begin(); it != details.end(); ++it)
    std::cout << " " << it.key() << "=" << it.value().dump();
  std::cout << "\n";
}

int cmd_sample(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto ctx = make_context(spec);
  const auto report = run_sample(cfg, ctx);
  summarize(spec, "sample", true,
            {{"particles", report.run.samples.rows()},
             {"dim", report.run.samples.cols()},
             {"flow", report.run.flow},
             {"samples", report.samples_path}});
  return 0;
}

int cmd_constants(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto ctx = make_context(spec);
  TargetPtr target = make_target(cfg);

  CoefficientSet coeffs;
  const std::string variant = cfg.string_or("experiment", "variant", "base");
  if (variant == "base") {
    coeffs = compute_base_constants(*target);
  } else if (variant == "rectified") {
    coeffs = compute_rectified_constants(*target);
  } else if (variant == "manifold") {
    auto bounded = std::dynamic_pointer_cast<const BoundedSupportTarget>(target);
    if (!bounded) throw ConfigError("constants: manifold variant needs an atoms/ball target");
    coeffs = compute_manifold_constants(bounded->diameter(), bounded->early_stop());
  } else if (variant == "bayes") {
    auto bayes = std::dynamic_pointer_cast<const BayesPosteriorTarget>(target);
    if (!bayes) throw ConfigError("constants: bayes variant needs a bayes_posterior target");
    coeffs = compute_bayes_constants(*bayes);
  } else {
    throw ConfigError("constants: unknown variant '" + variant + "'");
  }

  std::printf("%-18s %s\n", "coefficient", "value");
  std::ostringstream csv;
  csv.precision(17);
  csv << "name,value\n";
  for (const auto& [name, value] : coeffs.entries()) {
    std::printf("%-18s %.12g\n", name.c_str(), value);
    csv << name << ',' << value << '\n';
  }
  std::filesystem::create_directories(ctx.out_dir);
  write_text_file(ctx.out_dir / "constants.csv", csv.str());
  summarize(spec, "constants", true,
            {{"variant", variant}, {"K5", coeffs.k5}, {"K9", coeffs.k9}});
  return 0;
}

int cmd_w2(CommandSpec& spec, const std::string& file_a, const std::string& file_b) {
  const Eigen::MatrixXd a = read_samples(file_a);
  const Eigen::MatrixXd b = read_samples(file_b);
  std::string method;
  double value = 0, err = 0;
  if (a.rows() <= kExactAssignmentCap) {
    value = w2_exact(a, b, spec.workers).w2;
    method = "exact";
  } else {
    const auto sliced = sliced_w2(a, b, 128, 0x517Cull);
    value = sliced.value;
    err = sliced.std_err;
    method = "sliced";
  }
  std::printf("w2,%.12g,%s,%.12g\n", value, method.c_str(), err);
  summarize(spec, "w2", true, {{"value", value}, {"method", method}});
  return 0;
}

int cmd_audit(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto ctx = make_context(spec);
  TargetPtr target = make_target(cfg);
  auto field = make_field(cfg, target);
  const Schedule schedule = make_schedule(cfg);
  const auto perturbation = make_perturbation(cfg, *target);

  CoefficientSet coeffs = field->kind() == FlowKind::Rectified
                              ? compute_rectified_constants(*target)
                              : compute_base_constants(*target);
  if (perturbation) coeffs.k8 = perturbation->jacobian_budget();

  AuditProbeSpec probe = default_audit_probe();
  probe.points = static_cast<int>(cfg.number_or("experiment", "probe_points", 64));
  const AuditReport report =
      regularity_audit(*field, coeffs, probe, schedule, perturbation ? &*perturbation : nullptr);
  std::filesystem::create_directories(ctx.out_dir);
  write_text_file(ctx.out_dir / "audit.csv", report.to_csv());
  summarize(spec, "audit", report.pass,
            {{"rows", report.rows.size()},
             {"budget_lhs", report.budget_lhs},
             {"budget_rhs", report.budget_rhs}});
  return report.pass ? 0 : 1;
}

int cmd_curve(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = convergence_curve(cfg, make_context(spec));
  const bool ok = report.slope_in_band && report.under_bounds;
  summarize(spec, "curve", ok,
            {{"slope", report.slope}, {"under_bounds", report.under_bounds}});
  return ok ? 0 : 1;
}

int cmd_scaling(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = dimension_scaling(cfg, make_context(spec));
  bool ratios_ok = !report.ratios.empty();
  for (double r : report.ratios) ratios_ok = ratios_ok && r >= 1.5 && r <= 2.7;
  const bool ok =
      report.censored == 0 && report.slope >= 0.35 && report.slope <= 0.65 && ratios_ok;
  summarize(spec, "scaling", ok,
            {{"slope", report.slope}, {"censored", report.censored}, {"eps0", report.eps0}});
  return ok ? 0 : 1;
}

int cmd_eps_sweep(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = epsilon_sweep(cfg, make_context(spec));
  bool ok = report.fit.r2 >= 0.95 && report.fit.slope <= report.coefficient &&
            report.self_test_pass;
  if (report.mode == "adversarial")
    ok = ok && report.fit.slope >= 0.25 * report.coefficient;
  summarize(spec, "eps-sweep", ok,
            {{"slope", report.fit.slope},
             {"r2", report.fit.r2},
             {"coefficient", report.coefficient}});
  return ok ? 0 : 1;
}

int cmd_early_stop(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = early_stopping_study(cfg, make_context(spec));
  bool ok = true;
  for (const auto& row : report.rows)
    ok = ok && row.monotone && row.drift_rms <= row.drift_bound;
  summarize(spec, "early-stop", ok, {{"deltas", report.rows.size()}});
  return ok ? 0 : 1;
}

int cmd_compare(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = flow_comparison(cfg, make_context(spec));
  bool ok = report.gaps_shrink;
  json flows = json::object();
  for (const auto& e : report.entries) {
    ok = ok && e.w2 <= e.bound + report.floor;
    flows[e.flow] = e.w2;
  }
  summarize(spec, "compare", ok, {{"gaps_shrink", report.gaps_shrink}, {"w2", flows}});
  return ok ? 0 : 1;
}

int cmd_bayes(CommandSpec& spec) {
  const Config cfg = load_config(spec);
  const auto report = bayes_posterior_demo(cfg, make_context(spec));
  const bool ok = report.linear
                      ? (report.mean_rel_err <= 0.02 && report.cov_rel_err <= 0.03)
                      : (report.mean_abs_err <= report.mean_tolerance);
  summarize(spec, "bayes", ok,
            {{"mean_rel_err", report.mean_rel_err}, {"cov_rel_err", report.cov_rel_err}});
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowlab: deterministic transport sampling laboratory"};
  app.name("flowlab");
  app.require_subcommand(1);

  CommandSpec spec;
  std::string file_a, file_b;

  auto* sample = app.add_subcommand("sample", "Integrate the flow and write a sample batch");
  add_common(sample, spec, "--target");
  add_sample_overrides(sample, spec);

  auto* constants =
      app.add_subcommand("constants", "Print the coefficient table for a target");
  add_common(constants, spec, "--target");

  auto* w2 = app.add_subcommand("w2", "Exact (or sliced) W2 between two sample files");
  w2->add_option("a", file_a, "First sample file")->required();
  w2->add_option("b", file_b, "Second sample file")->required();
  w2->add_flag("--json", spec.json_summary, "Emit the summary line as a JSON object");
  w2->add_option("--workers", spec.workers, "Worker threads (default: machine core count)");

  auto* audit = app.add_subcommand("audit", "Regularity audit of a velocity field");
  add_common(audit, spec, "--config");

  auto* curve = app.add_subcommand("curve", "W2-vs-step-size convergence study");
  add_common(curve, spec, "--config");
  auto* scaling = app.add_subcommand("scaling", "Iteration complexity vs dimension");
  add_common(scaling, spec, "--config");
  auto* sweep = app.add_subcommand("eps-sweep", "W2 response to velocity-field error");
  add_common(sweep, spec, "--config");
  auto* early = app.add_subcommand("early-stop", "Early-stopping study for bounded supports");
  add_common(early, spec, "--config");
  auto* compare = app.add_subcommand("compare", "Side-by-side flow comparison");
  add_common(compare, spec, "--config");
  auto* bayes = app.add_subcommand("bayes", "Posterior sampling demo");
  add_common(bayes, spec, "--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sample->parsed()) return cmd_sample(spec);
    if (constants->parsed()) return cmd_constants(spec);
    if (w2->parsed()) return cmd_w2(spec, file_a, file_b);
    if (audit->parsed()) return cmd_audit(spec);
    if (curve->parsed()) return cmd_curve(spec);
    if (scaling->parsed()) return cmd_scaling(spec);
    if (sweep->parsed()) return cmd_eps_sweep(spec);
    if (early->parsed()) return cmd_early_stop(spec);
    if (compare->parsed()) return cmd_compare(spec);
    if (bayes->parsed()) return cmd_bayes(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
