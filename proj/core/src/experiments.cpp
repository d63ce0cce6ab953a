#include "flowlab/experiments.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowlab/io.hpp"

namespace flowlab {

namespace {

using nlohmann::json;

json coefficients_json(const CoefficientSet& cs) {
  json j;
  for (const auto& [name, value] : cs.entries()) j[name] = value;
  return j;
}

json bound_json(const BoundReport& b) {
  json j;
  j["value"] = b.value;
  j["step"] = b.step;
  j["eps"] = b.eps;
  j["m0"] = b.m0;
  j["prefactor"] = b.prefactor;
  if (b.empirical) j["empirical"] = *b.empirical;
  if (b.slack) j["slack"] = *b.slack;
  return j;
}

json base_manifest(const Config& cfg, const std::string& experiment) {
  json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["experiment"] = experiment;
  j["config"] = {{"digest", hex64(cfg.digest())}, {"canonical", cfg.canonical()}};
  return j;
}

std::string write_manifest(const ExperimentContext& ctx, json manifest,
                           std::vector<std::string> artifacts) {
  if (!ctx.write_artifacts) return {};
  std::sort(artifacts.begin(), artifacts.end());
  manifest["artifacts"] = artifacts;
  std::filesystem::create_directories(ctx.out_dir);
  const auto path = ctx.out_dir / "manifest.json";
  write_text_file(path, manifest.dump(2) + "\n");
  return path.string();
}

void write_artifact(const ExperimentContext& ctx, const std::string& name,
                    const std::string& text, std::vector<std::string>& artifacts) {
  if (!ctx.write_artifacts) return;
  std::filesystem::create_directories(ctx.out_dir);
  write_text_file(ctx.out_dir / name, text);
  artifacts.push_back(name);
}

std::string constants_csv(const CoefficientSet& cs) {
  std::ostringstream os;
  os.precision(17);
  os << "name,value\n";
  for (const auto& [name, value] : cs.entries()) os << name << ',' << value << '\n';
  return os.str();
}

std::uint64_t seed_of(const Config& cfg, std::uint64_t fallback = 1234) {
  return static_cast<std::uint64_t>(cfg.number_or("experiment", "seed", static_cast<double>(fallback)));
}

int particles_of(const Config& cfg, int fallback = 2048) {
  return static_cast<int>(cfg.number_or("metric", "particles", fallback));
}

std::vector<int> int_list(const Config& cfg, const std::string& section, const std::string& key,
                          std::vector<int> fallback) {
  if (!cfg.has(section, key)) return fallback;
  std::vector<int> out;
  for (double v : cfg.get(section, key).as_number_list()) out.push_back(static_cast<int>(v));
  return out;
}

}  // namespace

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::domain_error("fit_line: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LineFit fit;
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pred = fit.intercept + fit.slope * x[i];
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

Eigen::MatrixXd coupled_oracle_batch(const Target& target, int particles, std::uint64_t seed) {
  const auto view = target.mixture_view();
  if (!view || view->size() != 1)
    throw UnsupportedFamilyError("coupled_oracle_batch: needs a single-Gaussian target");
  const auto& comp = view->front();
  Eigen::LLT<Eigen::MatrixXd> llt(comp.cov);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("coupled_oracle_batch: covariance not SPD");
  Eigen::MatrixXd z = initial_normals(particles, target.dim(), seed);
  Eigen::MatrixXd out = z * Eigen::MatrixXd(llt.matrixL()).transpose();
  out.rowwise() += comp.mean.transpose();
  return out;
}

// ------------------------------------------------------------------- sample

SampleRunReport run_sample(const Config& cfg, const ExperimentContext& ctx) {
  TargetPtr target = make_target(cfg);
  const FlowSpec spec = make_flow_spec(cfg);
  auto field = make_field(cfg, target);
  Schedule schedule = make_schedule(cfg);
  const auto perturbation = make_perturbation(cfg, *target);
  const int particles = particles_of(cfg);
  const std::uint64_t seed = seed_of(cfg);
  RunOptions ropts{ctx.workers};

  SampleRunReport report;
  if (spec.exponential_stepper) {
    report.run = exp_euler_prob_ode_run(*field, schedule, particles, seed, ropts);
  } else {
    report.run = euler_run(*field, schedule, particles, seed,
                           perturbation ? &*perturbation : nullptr, ropts);
  }

  std::vector<std::string> artifacts;
  if (ctx.write_artifacts) {
    std::filesystem::create_directories(ctx.out_dir);
    const auto bin = ctx.out_dir / "samples.bin";
    write_samples(bin, report.run.samples, seed, schedule.digest());
    report.samples_path = bin.string();
    artifacts.push_back("samples.bin");
    artifacts.push_back("samples.bin.hdr");

    std::ostringstream diag;
    diag.precision(12);
    diag << "step,t,h,max_abs_velocity,min_ess\n";
    for (std::size_t i = 0; i < report.run.steps.size(); ++i) {
      const auto& s = report.run.steps[i];
      diag << i << ',' << s.t << ',' << s.h << ',' << s.max_abs_velocity << ',' << s.min_ess
           << '\n';
    }
    write_artifact(ctx, "diagnostics.csv", diag.str(), artifacts);
    report.diagnostics_path = (ctx.out_dir / "diagnostics.csv").string();
  }

  json manifest = base_manifest(cfg, "sample");
  manifest["seeds"] = {{"run", report.run.seed}};
  manifest["flow"] = report.run.flow;
  manifest["schedule"] = {{"steps", schedule.steps()},
                          {"delta", schedule.delta},
                          {"digest", hex64(schedule.digest())}};
  manifest["results"] = {{"particles", particles},
                         {"dim", target->dim()},
                         {"final_step_max_velocity",
                          report.run.steps.empty() ? 0.0
                                                   : report.run.steps.back().max_abs_velocity}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// -------------------------------------------------------------------- curve

CurveReport convergence_curve(const Config& cfg, const ExperimentContext& ctx) {
  TargetPtr target = make_target(cfg);
  auto field = make_field(cfg, target);
  const std::uint64_t seed = seed_of(cfg);
  const int particles = particles_of(cfg);
  const auto steps_grid =
      int_list(cfg, "experiment", "steps_grid", {32, 64, 128, 256, 512, 1024});
  RunOptions ropts{ctx.workers};

  const CoefficientSet coeffs = compute_base_constants(*target);
  const MomentSummary moments = target->moments();
  const Eigen::MatrixXd oracle = coupled_oracle_batch(*target, particles, seed);

  CurveReport report;
  report.m0 = moments.m0;
  report.floor = mc_floor(moments.m0, particles, 2.0);
  report.under_bounds = true;
  for (int n_steps : steps_grid) {
    const Schedule schedule = uniform_schedule(n_steps, 0.0);
    const RunResult run = euler_run(*field, schedule, particles, seed, nullptr, ropts);
    const double w2 = w2_exact(run.samples, oracle, ctx.workers).w2;
    const double h = schedule.uniform_step();
    const BoundReport bound = theoretical_w2_bound(coeffs, h, 0.0, moments.m0);
    report.steps.push_back(n_steps);
    report.step_sizes.push_back(h);
    report.w2.push_back(w2);
    report.bounds.push_back(bound.value);
    if (w2 > bound.value + report.floor) report.under_bounds = false;
  }

  std::vector<double> log_h, log_w2;
  for (std::size_t i = 0; i < report.w2.size(); ++i) {
    log_h.push_back(std::log(report.step_sizes[i]));
    log_w2.push_back(std::log(std::max(report.w2[i], 1e-300)));
  }
  const LineFit fit = fit_line(log_h, log_w2);
  report.slope = fit.slope;
  const double lo = cfg.number_or("experiment", "slope_lo", 0.8);
  const double hi = cfg.number_or("experiment", "slope_hi", 1.2);
  report.slope_in_band = fit.slope >= lo && fit.slope <= hi;

  std::vector<std::string> artifacts;
  {
    std::ostringstream csv;
    csv.precision(12);
    csv << "steps,h,w2,bound\n";
    for (std::size_t i = 0; i < report.w2.size(); ++i)
      csv << report.steps[i] << ',' << report.step_sizes[i] << ',' << report.w2[i] << ','
          << report.bounds[i] << '\n';
    write_artifact(ctx, "curve.csv", csv.str(), artifacts);
    write_artifact(ctx, "constants.csv", constants_csv(coeffs), artifacts);
    PlotSeries measured{"measured W2", report.step_sizes, report.w2};
    PlotSeries bound_series{"bound", report.step_sizes, report.bounds};
    write_artifact(ctx, "plot.svg",
                   render_line_plot_svg("W2 vs step size", {measured, bound_series}, true, true),
                   artifacts);
  }

  json manifest = base_manifest(cfg, "curve");
  manifest["seeds"] = {{"run", seed}};
  manifest["coefficients"] = coefficients_json(coeffs);
  {
    BoundReport finest = theoretical_w2_bound(coeffs, report.step_sizes.back(), 0.0, moments.m0);
    finest.attach_empirical(report.w2.back());
    manifest["bound"] = bound_json(finest);
  }
  manifest["results"] = {{"slope", report.slope},
                         {"floor", report.floor},
                         {"m0", report.m0},
                         {"under_bounds", report.under_bounds},
                         {"w2", report.w2},
                         {"bounds", report.bounds},
                         {"steps", report.steps}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// ------------------------------------------------------------------ scaling

namespace {

// Per-direction Euler amplification of the centered Gaussian flow with
// reference variance 1.
double euler_gaussian_factor(double sigma2, int steps) {
  const double h = 1.0 / steps;
  double p = 1.0;
  for (int n = 0; n < steps; ++n) {
    const double t = n * h;
    const double cov_t = t * t * sigma2 + (1 - t * t);
    p *= 1.0 + h * t * (sigma2 - 1.0) / cov_t;
  }
  return p;
}

Eigen::VectorXd scaling_spectrum(const Config& cfg, int d) {
  const double lo = cfg.number_or("experiment", "cov_lo", 2.0);
  const double hi = cfg.number_or("experiment", "cov_hi", 4.0);
  Eigen::VectorXd s(d);
  for (int i = 0; i < d; ++i)
    s[i] = d == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (d - 1);
  return s;
}

double scaling_oracle_w2(const Eigen::VectorXd& sigma2, int steps) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < sigma2.size(); ++i) {
    const double diff = euler_gaussian_factor(sigma2[i], steps) - std::sqrt(sigma2[i]);
    acc.add(diff * diff);
  }
  return std::sqrt(acc.value());
}

}  // namespace

ScalingReport dimension_scaling(const Config& cfg, const ExperimentContext& ctx) {
  const auto dims = int_list(cfg, "experiment", "dims", {2, 8, 32, 128});
  const int particles = particles_of(cfg);
  const std::uint64_t seed = seed_of(cfg);
  const long cap = static_cast<long>(cfg.number_or("experiment", "n_cap", 65536));
  RunOptions ropts{ctx.workers};

  ScalingReport report;
  // eps0 "auto" anchors to the sampling floor at the smallest dimension.
  if (cfg.has("experiment", "eps0") && cfg.get("experiment", "eps0").is_number()) {
    report.eps0 = cfg.get("experiment", "eps0").as_number();
  } else {
    const Eigen::VectorXd s0 = scaling_spectrum(cfg, dims.front());
    const double m0 = std::max<double>(dims.front(), s0.sum());
    report.eps0 = 5.0 * mc_floor(m0, particles, 2.0);
  }

  for (int d : dims) {
    const Eigen::VectorXd sigma2 = scaling_spectrum(cfg, d);
    const double m0 = std::max<double>(d, sigma2.sum());
    report.floors.push_back(mc_floor(m0, particles, 2.0));

    auto accepted = [&](long n) {
      return scaling_oracle_w2(sigma2, static_cast<int>(n)) <= report.eps0;
    };
    long lo = 1, hi = 1;
    while (hi <= cap && !accepted(hi)) {
      lo = hi;
      hi *= 2;
    }
    if (hi > cap) {
      report.dims.push_back(d);
      report.n_star.push_back(-1);
      report.oracle_w2.push_back(std::numeric_limits<double>::quiet_NaN());
      report.empirical_w2.push_back(std::numeric_limits<double>::quiet_NaN());
      ++report.censored;
      continue;
    }
    while (lo + 1 < hi) {
      const long mid = (lo + hi) / 2;
      (accepted(mid) ? hi : lo) = mid;
    }
    long n_star = accepted(lo) ? lo : hi;

    report.dims.push_back(d);
    report.n_star.push_back(n_star);
    report.oracle_w2.push_back(scaling_oracle_w2(sigma2, static_cast<int>(n_star)));

    // Particle validation at the found step count.
    auto target = std::make_shared<GaussianTarget>(
        Eigen::VectorXd::Zero(d), Eigen::MatrixXd(sigma2.asDiagonal()),
        Eigen::MatrixXd::Identity(d, d));
    VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
    const RunResult run =
        euler_run(field, uniform_schedule(static_cast<int>(n_star), 0.0), particles, seed,
                  nullptr, ropts);
    const Eigen::MatrixXd oracle = coupled_oracle_batch(*target, particles, seed);
    report.empirical_w2.push_back(w2_exact(run.samples, oracle, ctx.workers).w2);
  }

  std::vector<double> log_d, log_n;
  for (std::size_t i = 0; i < report.dims.size(); ++i) {
    if (report.n_star[i] < 0) continue;
    log_d.push_back(std::log(static_cast<double>(report.dims[i])));
    log_n.push_back(std::log(static_cast<double>(report.n_star[i])));
  }
  if (log_d.size() >= 2) report.slope = fit_line(log_d, log_n).slope;
  for (std::size_t i = 0; i + 1 < report.n_star.size(); ++i)
    if (report.n_star[i] > 0 && report.n_star[i + 1] > 0)
      report.ratios.push_back(static_cast<double>(report.n_star[i + 1]) /
                              static_cast<double>(report.n_star[i]));

  std::vector<std::string> artifacts;
  {
    std::ostringstream csv;
    csv.precision(12);
    csv << "dim,n_star,oracle_w2,empirical_w2,floor\n";
    for (std::size_t i = 0; i < report.dims.size(); ++i)
      csv << report.dims[i] << ',' << report.n_star[i] << ',' << report.oracle_w2[i] << ','
          << report.empirical_w2[i] << ',' << report.floors[i] << '\n';
    write_artifact(ctx, "curve.csv", csv.str(), artifacts);
    PlotSeries series{"N*(d)", {}, {}};
    for (std::size_t i = 0; i < report.dims.size(); ++i) {
      if (report.n_star[i] < 0) continue;
      series.x.push_back(report.dims[i]);
      series.y.push_back(static_cast<double>(report.n_star[i]));
    }
    write_artifact(ctx, "plot.svg",
                   render_line_plot_svg("steps to reach eps0 vs dimension", {series}, true, true),
                   artifacts);
  }

  json manifest = base_manifest(cfg, "scaling");
  manifest["seeds"] = {{"run", seed}};
  manifest["results"] = {{"dims", report.dims},        {"n_star", report.n_star},
                         {"slope", report.slope},      {"ratios", report.ratios},
                         {"eps0", report.eps0},        {"censored", report.censored},
                         {"oracle_w2", report.oracle_w2}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// -------------------------------------------------------------------- sweep

SweepReport epsilon_sweep(const Config& cfg, const ExperimentContext& ctx) {
  TargetPtr target = make_target(cfg);
  auto field = make_field(cfg, target);
  const std::uint64_t seed = seed_of(cfg);
  const int particles = particles_of(cfg);
  const int n_steps = static_cast<int>(cfg.number_or("schedule", "steps", 512));
  RunOptions ropts{ctx.workers};

  SweepReport report;
  report.mode = cfg.string_or("perturbation", "mode", "random");
  report.eps_list = cfg.has("experiment", "eps_list")
                        ? cfg.get("experiment", "eps_list").as_number_list()
                        : std::vector<double>{0.0, 0.01, 0.02, 0.04};

  const Schedule schedule = uniform_schedule(n_steps, 0.0);
  const Eigen::MatrixXd oracle = coupled_oracle_batch(*target, particles, seed);
  const CoefficientSet base = compute_base_constants(*target);

  double k8 = 0;
  report.self_test_pass = true;
  for (double eps : report.eps_list) {
    std::optional<PerturbationModel> model;
    if (eps > 0) {
      Config local = cfg;
      local.set("perturbation", "eps", ConfigValue(eps));
      if (!local.has("perturbation", "mode"))
        local.set("perturbation", "mode", ConfigValue(std::string("random")));
      model = make_perturbation(local, *target);
      k8 = std::max(k8, model->jacobian_budget());
      const auto st = model->self_test(*target, 4096, seed ^ 0x5157ull);
      report.self_test_pass = report.self_test_pass && st.pass;
    }
    const RunResult run =
        euler_run(*field, schedule, particles, seed, model ? &*model : nullptr, ropts);
    report.w2.push_back(w2_exact(run.samples, oracle, ctx.workers).w2);
  }
  report.k8 = k8;

  CoefficientSet with_budget = base;
  with_budget.k8 = k8;
  report.coefficient = 2.0 * lipschitz_bounds(with_budget).learned;
  report.fit = fit_line(report.eps_list, report.w2);

  std::vector<std::string> artifacts;
  {
    std::ostringstream csv;
    csv.precision(12);
    csv << "eps,w2\n";
    for (std::size_t i = 0; i < report.w2.size(); ++i)
      csv << report.eps_list[i] << ',' << report.w2[i] << '\n';
    write_artifact(ctx, "curve.csv", csv.str(), artifacts);
    write_artifact(ctx, "constants.csv", constants_csv(with_budget), artifacts);
    write_artifact(ctx, "plot.svg",
                   render_line_plot_svg("W2 vs velocity error",
                                        {PlotSeries{"measured", report.eps_list, report.w2}}),
                   artifacts);
  }

  json manifest = base_manifest(cfg, "eps-sweep");
  manifest["seeds"] = {{"run", seed}};
  manifest["coefficients"] = coefficients_json(with_budget);
  {
    BoundReport b = theoretical_w2_bound(with_budget, schedule.uniform_step(),
                                         report.eps_list.back(), target->moments().m0);
    b.attach_empirical(report.w2.back());
    manifest["bound"] = bound_json(b);
  }
  manifest["results"] = {{"mode", report.mode},
                         {"eps", report.eps_list},
                         {"w2", report.w2},
                         {"slope", report.fit.slope},
                         {"intercept", report.fit.intercept},
                         {"r2", report.fit.r2},
                         {"coefficient", report.coefficient},
                         {"self_test_pass", report.self_test_pass}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// --------------------------------------------------------------- early stop

EarlyStopReport early_stopping_study(const Config& cfg, const ExperimentContext& ctx) {
  const Eigen::MatrixXd points = cfg.get("target", "points").as_matrix();
  const Eigen::VectorXd weights = cfg.get("target", "weights").as_vector();
  const std::vector<double> deltas = cfg.has("experiment", "delta_list")
                                         ? cfg.get("experiment", "delta_list").as_number_list()
                                         : std::vector<double>{0.1, 0.03, 0.01};
  const auto steps_list = int_list(cfg, "experiment", "steps_grid", {16, 64, 256});
  const int particles = particles_of(cfg);
  const std::uint64_t seed = seed_of(cfg);
  const int drift_samples = static_cast<int>(cfg.number_or("experiment", "drift_samples", 1000000));
  RunOptions ropts{ctx.workers};

  EarlyStopReport report;
  report.dim = static_cast<int>(points.cols());
  const int d = report.dim;

  for (double delta : deltas) {
    auto target = BoundedSupportTarget::atoms(points, weights, delta);
    report.diameter = target->diameter();
    EarlyStopReport::DeltaRow row;
    row.delta = delta;
    row.drift_bound = std::sqrt(2.0 * d * delta);
    const CoefficientSet star = compute_manifold_constants(target->diameter(), delta);
    row.k0_star = star.k0;
    const double r_diam = target->diameter();
    row.bound_log_prefactor = 3 * r_diam * r_diam / (2 * delta * delta) + 1 / (2 * delta);
    const double m0 = target->moments().m0;
    const double h_finest = (1.0 - delta) / steps_list.back();
    row.bound_step_term = std::sqrt(3.0) * (star.k5 * std::sqrt(m0) + star.k9) * h_finest;

    // Coupled forward displacement over one smoothing interval.
    {
      const Eigen::MatrixXd x0 = target->sample(drift_samples, seed ^ 0xD21F7ull, StreamPurpose::TargetOracle);
      CompensatedSum acc;
      const double noise_sd = std::sqrt(delta * (2 - delta));
      for (int i = 0; i < drift_samples; ++i) {
        CounterRng rng(seed ^ 0xD21F7ull, StreamPurpose::Generic, static_cast<std::uint64_t>(i));
        double sq = 0;
        for (int j = 0; j < d; ++j) {
          const double move = -delta * x0(i, j) + noise_sd * rng.normal(static_cast<std::uint64_t>(j));
          sq += move * move;
        }
        acc.add(sq);
      }
      row.drift_rms = std::sqrt(acc.value() / drift_samples);
    }

    // Smoothed-target oracle at the stop time, shared across step counts.
    const Eigen::MatrixXd oracle =
        sample_forward_marginal(*target, delta, particles, seed ^ 0x0A7Eull,
                                StreamPurpose::TargetOracle);
    VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
    for (int n_steps : steps_list) {
      const Schedule schedule = uniform_schedule(n_steps, delta);
      const RunResult run = euler_run(field, schedule, particles, seed, nullptr, ropts);
      row.steps.push_back(n_steps);
      row.w2.push_back(w2_exact(run.samples, oracle, ctx.workers).w2);
    }
    row.monotone = true;
    for (std::size_t i = 0; i + 1 < row.w2.size(); ++i)
      if (!(row.w2[i + 1] < row.w2[i])) row.monotone = false;
    report.rows.push_back(std::move(row));
  }

  std::vector<std::string> artifacts;
  {
    std::ostringstream csv;
    csv.precision(12);
    csv << "delta,steps,w2,drift_rms,drift_bound,k0_star,bound_log_prefactor,"
           "bound_step_term\n";
    for (const auto& row : report.rows)
      for (std::size_t i = 0; i < row.w2.size(); ++i)
        csv << row.delta << ',' << row.steps[i] << ',' << row.w2[i] << ',' << row.drift_rms
            << ',' << row.drift_bound << ',' << row.k0_star << ',' << row.bound_log_prefactor
            << ',' << row.bound_step_term << '\n';
    write_artifact(ctx, "curve.csv", csv.str(), artifacts);
    std::vector<PlotSeries> series;
    for (const auto& row : report.rows) {
      PlotSeries sline{"delta " + std::to_string(row.delta), {}, {}};
      for (std::size_t i = 0; i < row.w2.size(); ++i) {
        sline.x.push_back(row.steps[i]);
        sline.y.push_back(row.w2[i]);
      }
      series.push_back(std::move(sline));
    }
    write_artifact(ctx, "plot.svg",
                   render_line_plot_svg("smoothed-target distance vs steps", series, true, false),
                   artifacts);
  }

  json manifest = base_manifest(cfg, "early-stop");
  manifest["seeds"] = {{"run", seed}};
  json rows = json::array();
  for (const auto& row : report.rows)
    rows.push_back({{"delta", row.delta},
                    {"drift_rms", row.drift_rms},
                    {"drift_bound", row.drift_bound},
                    {"k0_star", row.k0_star},
                    {"bound_log_prefactor", row.bound_log_prefactor},
                    {"bound_step_term", row.bound_step_term},
                    {"steps", row.steps},
                    {"w2", row.w2},
                    {"monotone", row.monotone}});
  manifest["results"] = {{"dim", report.dim}, {"rows", rows}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// ------------------------------------------------------------------ compare

CompareReport flow_comparison(const Config& cfg, const ExperimentContext& ctx) {
  TargetPtr target = make_target(cfg);
  const std::uint64_t seed = seed_of(cfg);
  const int particles = particles_of(cfg);
  const int n_steps = static_cast<int>(cfg.number_or("schedule", "steps", 64));
  const auto gap_grid = int_list(cfg, "experiment", "gap_grid", {16, 64, 256});
  RunOptions ropts{ctx.workers};

  const MomentSummary moments = target->moments();
  const Eigen::MatrixXd oracle =
      target->sample(particles, seed ^ 0x0A7Eull, StreamPurpose::TargetOracle);
  const CoefficientSet base = compute_base_constants(*target);
  const CoefficientSet rect = compute_rectified_constants(*target);

  CompareReport report;
  report.floor = mc_floor(moments.m0, particles, 2.0);

  const Schedule uniform = uniform_schedule(n_steps, 0.0);
  const Schedule geometric = geometric_schedule(n_steps, 1.0 / n_steps, 0.0);
  AuditProbeSpec audit_spec = default_audit_probe();
  audit_spec.points = 24;

  auto audit_rate = [&](const VelocityField& f, const CoefficientSet& cs) {
    const AuditReport audit = regularity_audit(f, cs, audit_spec, uniform, nullptr);
    int passed = audit.budget_pass ? 1 : 0, total = 1;
    for (const auto& row : audit.rows) {
      ++total;
      if (row.pass) ++passed;
    }
    return static_cast<double>(passed) / total;
  };

  {
    VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
    const RunResult run = euler_run(field, uniform, particles, seed, nullptr, ropts);
    CompareReport::Entry e;
    e.flow = "follmer";
    e.w2 = w2_exact(run.samples, oracle, ctx.workers).w2;
    e.bound = theoretical_w2_bound(base, uniform.uniform_step(), 0.0, moments.m0).value;
    e.wallclock_s = run.wallclock_s;
    e.audit_pass_rate = audit_rate(field, base);
    report.entries.push_back(e);
  }
  {
    VelocityField field(target, FlowKind::Rectified, EvalMode::ClosedForm);
    const RunResult run = euler_run(field, uniform, particles, seed, nullptr, ropts);
    CompareReport::Entry e;
    e.flow = "rectified";
    e.w2 = w2_exact(run.samples, oracle, ctx.workers).w2;
    e.bound = theoretical_w2_bound(rect, uniform.uniform_step(), 0.0, moments.m0).value;
    e.wallclock_s = run.wallclock_s;
    e.audit_pass_rate = audit_rate(field, rect);
    report.entries.push_back(e);
  }
  {
    VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
    const RunResult run = exp_euler_prob_ode_run(field, geometric, particles, seed, ropts);
    double max_h = 0;
    for (int n = 0; n < geometric.steps(); ++n)
      max_h = std::max(max_h, geometric.t[n + 1] - geometric.t[n]);
    CompareReport::Entry e;
    e.flow = "prob-ode";
    e.w2 = w2_exact(run.samples, oracle, ctx.workers).w2;
    e.bound = theoretical_w2_bound(base, max_h, 0.0, moments.m0).value;
    e.wallclock_s = run.wallclock_s;
    e.audit_pass_rate = audit_rate(field, base);
    report.entries.push_back(e);
  }

  // Discretization gap between the two steppers of the same flow.
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  for (int n : gap_grid) {
    const RunResult euler = euler_run(field, uniform_schedule(n, 0.0), particles, seed, nullptr,
                                      ropts);
    const RunResult expo = exp_euler_prob_ode_run(field, geometric_schedule(n, 1.0 / n, 0.0),
                                                  particles, seed, ropts);
    report.gap_steps.push_back(n);
    report.gaps.push_back(w2_exact(euler.samples, expo.samples, ctx.workers).w2);
  }
  report.gaps_shrink = true;
  for (std::size_t i = 0; i + 1 < report.gaps.size(); ++i)
    if (!(report.gaps[i + 1] < report.gaps[i])) report.gaps_shrink = false;

  std::vector<std::string> artifacts;
  {
    std::ostringstream csv;
    csv.precision(12);
    csv << "flow,w2,bound,wallclock_s,audit_pass_rate\n";
    for (const auto& e : report.entries)
      csv << e.flow << ',' << e.w2 << ',' << e.bound << ',' << e.wallclock_s << ','
          << e.audit_pass_rate << '\n';
    write_artifact(ctx, "curve.csv", csv.str(), artifacts);
    PlotSeries gaps{"stepper gap", {}, {}};
    for (std::size_t i = 0; i < report.gaps.size(); ++i) {
      gaps.x.push_back(report.gap_steps[i]);
      gaps.y.push_back(report.gaps[i]);
    }
    write_artifact(ctx, "plot.svg",
                   render_line_plot_svg("stepper gap vs steps", {gaps}, true, true), artifacts);
  }

  json manifest = base_manifest(cfg, "compare");
  manifest["seeds"] = {{"run", seed}};
  json entries = json::array();
  for (const auto& e : report.entries)
    entries.push_back({{"flow", e.flow},
                       {"w2", e.w2},
                       {"bound", e.bound},
                       {"audit_pass_rate", e.audit_pass_rate}});
  manifest["results"] = {{"entries", entries},
                         {"gap_steps", report.gap_steps},
                         {"gaps", report.gaps},
                         {"gaps_shrink", report.gaps_shrink},
                         {"floor", report.floor}};
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

// -------------------------------------------------------------------- bayes

BayesReport bayes_posterior_demo(const Config& cfg, const ExperimentContext& ctx) {
  TargetPtr target_base = make_target(cfg);
  auto target = std::dynamic_pointer_cast<const BayesPosteriorTarget>(target_base);
  if (!target) throw ConfigError("bayes_posterior_demo: [target] family must be bayes_posterior");
  if (target->dim() > 3) throw ConfigError("bayes_posterior_demo: needs d <= 3");
  const std::uint64_t seed = seed_of(cfg);
  const int particles = particles_of(cfg, 4096);
  const int n_steps = static_cast<int>(cfg.number_or("schedule", "steps", 512));
  RunOptions ropts{ctx.workers};

  BayesReport report;
  report.linear = target->op().linear;
  report.coeffs = compute_bayes_constants(*target);

  auto field = make_field(cfg, target_base);
  const Schedule schedule = uniform_schedule(n_steps, 0.0);
  const RunResult run = euler_run(*field, schedule, particles, seed, nullptr, ropts);

  report.sampler_mean = run.samples.colwise().mean().transpose();
  Eigen::MatrixXd centered = run.samples.rowwise() - report.sampler_mean.transpose();
  report.sampler_cov = centered.transpose() * centered / (particles - 1);

  double grid_tol = 0;
  if (report.linear) {
    auto [mu, cov] = target->linear_posterior();
    report.oracle_mean = mu;
    report.oracle_cov = cov;
  } else {
    const auto oracle = target->grid_posterior_oracle();
    report.oracle_mean = oracle.mean;
    report.oracle_cov = oracle.cov;
    grid_tol = oracle.spacing * oracle.spacing;
  }

  report.mean_abs_err = (report.sampler_mean - report.oracle_mean).norm();
  report.mean_rel_err = report.mean_abs_err / std::max(report.oracle_mean.norm(), 1e-300);
  double worst_cov = 0;
  for (int i = 0; i < target->dim(); ++i)
    worst_cov = std::max(worst_cov, std::abs(report.sampler_cov(i, i) - report.oracle_cov(i, i)) /
                                        report.oracle_cov(i, i));
  report.cov_rel_err = worst_cov;
  const double mean_floor = std::sqrt(report.oracle_cov.trace() / particles);
  report.mean_tolerance = 3.0 * (grid_tol + mean_floor);

  const MomentSummary moments = target->moments();
  report.bound = theoretical_w2_bound(report.coeffs, schedule.uniform_step(), 0.0, moments.m0).value;

  std::vector<std::string> artifacts;
  write_artifact(ctx, "constants.csv", constants_csv(report.coeffs), artifacts);
  if (ctx.write_artifacts) {
    write_samples(ctx.out_dir / "samples.bin", run.samples, seed, schedule.digest());
    artifacts.push_back("samples.bin");
    artifacts.push_back("samples.bin.hdr");
  }

  json manifest = base_manifest(cfg, "bayes");
  manifest["seeds"] = {{"run", seed}};
  manifest["coefficients"] = coefficients_json(report.coeffs);
  {
    BoundReport b = theoretical_w2_bound(report.coeffs, schedule.uniform_step(), 0.0,
                                         moments.m0);
    manifest["bound"] = bound_json(b);
  }
  json results;
  results["linear"] = report.linear;
  results["mean_rel_err"] = report.mean_rel_err;
  results["mean_abs_err"] = report.mean_abs_err;
  results["cov_rel_err"] = report.cov_rel_err;
  results["mean_tolerance"] = report.mean_tolerance;
  results["bound"] = report.bound;
  results["sampler_mean"] = std::vector<double>(report.sampler_mean.data(),
                                                report.sampler_mean.data() +
                                                    report.sampler_mean.size());
  results["oracle_mean"] = std::vector<double>(report.oracle_mean.data(),
                                               report.oracle_mean.data() +
                                                   report.oracle_mean.size());
  manifest["results"] = results;
  report.manifest_path = write_manifest(ctx, manifest, artifacts);
  return report;
}

}  // namespace flowlab
