//! Command-line front end: simulate data, fit models, select budgets by
//! cross-validation, evaluate fitted curves, and run the shipped studies.
//!
//! Every run writes a JSON config echo next to its outputs, named
//! `<out stem>.config.json`, recording the command, crate version, all
//! parameters, the seed where one applies, and a timestamp. Outputs
//! themselves are deterministic functions of the parameters, so re-running a
//! command reproduces them byte for byte.
//!
//! Exit codes: 0 on success, 2 on a usage error (bad flags or unparseable
//! flag values), 3 on any data, numerical, or filesystem failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use halkit::basis::{HalModel, PiecewiseConstantFn};
use halkit::density::{fit_density, DensityModel};
use halkit::io::{
    read_density_csv, read_regression_csv, read_survival_csv, write_density_csv,
    write_survival_csv,
};
use halkit::losses::{density_risk, pl_risk, sq_error_risk};
use halkit::regression::fit_regression;
use halkit::select::{cv_select_m, default_m_grid, CvData};
use halkit::sieve::{
    product_target_moments, project_l2_moments, step_target_moments, Projection,
};
use halkit::sim::{gen_density_data, gen_survival_study, DensitySpec, SurvivalStudyParams};
use halkit::solver::{SolveOptions, SolveReport, StepRule};
use halkit::study::{
    run_basis_count_study, run_parametrization_comparison, run_rate_study, ExperimentReport,
    RateStudyConfig, RateTask,
};
use halkit::survival::{fit_hazard, HazardModel};
use halkit::{HalError, Result};

#[derive(Parser)]
#[command(name = "halkit", version, about = "Variation-budgeted estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Solver duality-gap tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,

    /// Solver iteration cap.
    #[arg(long, global = true, default_value_t = 50_000)]
    max_iter: usize,

    /// Solver step rule.
    #[arg(long, global = true, value_enum, default_value_t = StepRuleArg::Apg)]
    step_rule: StepRuleArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StepRuleArg {
    Apg,
    Fw,
}

impl StepRuleArg {
    fn to_rule(self) -> StepRule {
        match self {
            StepRuleArg::Apg => StepRule::Apg,
            StepRuleArg::Fw => StepRule::Fw,
        }
    }
    fn name(self) -> &'static str {
        match self {
            StepRuleArg::Apg => "apg",
            StepRuleArg::Fw => "fw",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Regression,
    Hazard,
    Density,
}

impl TaskArg {
    fn name(self) -> &'static str {
        match self {
            TaskArg::Regression => "regression",
            TaskArg::Hazard => "hazard",
            TaskArg::Density => "density",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Uniform,
    Mixture,
}

#[derive(Args)]
struct MixtureFlags {
    /// Generating law for the draws.
    #[arg(long, value_enum, default_value_t = DistArg::Mixture)]
    dist: DistArg,

    /// Beta shape a for the mixture law.
    #[arg(long, default_value_t = 4.0)]
    a: f64,

    /// Beta shape b for the mixture law.
    #[arg(long, default_value_t = 2.0)]
    b: f64,

    /// Beta component weight for the mixture law.
    #[arg(long, default_value_t = 0.7)]
    weight: f64,
}

impl MixtureFlags {
    fn to_spec(&self) -> DensitySpec {
        match self.dist {
            DistArg::Uniform => DensitySpec::Uniform,
            DistArg::Mixture => DensitySpec::BetaUniformMixture {
                a: self.a,
                b: self.b,
                weight: self.weight,
            },
        }
    }
    fn echo(&self) -> serde_json::Value {
        match self.dist {
            DistArg::Uniform => json!({"dist": "uniform"}),
            DistArg::Mixture => {
                json!({"dist": "mixture", "a": self.a, "b": self.b, "weight": self.weight})
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Simulate {
        #[command(subcommand)]
        target: SimulateTarget,
    },
    /// Fit a regression surface and write the model as JSON.
    FitRegression {
        #[arg(long)]
        input: PathBuf,
        /// Variation budget.
        #[arg(long)]
        m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a conditional hazard and write the model as JSON.
    FitHazard {
        #[arg(long)]
        input: PathBuf,
        /// Variation budget.
        #[arg(long)]
        m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a conditional density and write the model as JSON.
    FitDensity {
        #[arg(long)]
        input: PathBuf,
        /// Variation budget, or `auto` for cross-validated selection.
        #[arg(long)]
        m: String,
        /// Folds for `--m auto`.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Shuffle seed for `--m auto`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the variation budget by K-fold cross-validation.
    Cv {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// `auto` for the default geometric grid, or comma-separated budgets.
        #[arg(long, default_value = "auto")]
        grid: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project an analytic target onto the span of an indicator basis.
    Project {
        /// `step:<t1,..,td>`, `linear`, or `product`.
        #[arg(long)]
        target: String,
        /// Basis knot points: coordinates comma-separated, points
        /// semicolon-separated, e.g. `0.2,0.3;0.5,0.7`.
        #[arg(long)]
        knots: String,
        /// Variation budget.
        #[arg(long)]
        m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted hazard model's survival curve on a time grid.
    SurvivalCurve {
        #[arg(long)]
        model: PathBuf,
        /// Covariate values, comma-separated; empty for none.
        #[arg(long, default_value = "")]
        w: String,
        /// Number of grid points on [0, 1].
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted density model on a grid.
    DensityEval {
        #[arg(long)]
        model: PathBuf,
        /// Covariate values, comma-separated; empty for none.
        #[arg(long, default_value = "")]
        w: String,
        /// Number of grid points on [0, 1].
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the convergence-rate study.
    RateStudy {
        #[arg(long, value_enum, default_value_t = RateTaskArg::Regression)]
        task: RateTaskArg,
        /// Comma-separated, strictly increasing sample sizes.
        #[arg(long, default_value = "125,250,500,1000,2000,4000")]
        n_list: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fixed variation budget for every fit.
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        /// Additive Gaussian noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        noise_sd: f64,
        /// Truth step-function breakpoints, comma-separated.
        #[arg(long, default_value = "0.5,0.8")]
        truth_breakpoints: String,
        /// Truth step-function values, comma-separated, one more than
        /// breakpoints.
        #[arg(long, default_value = "0,1,0.5")]
        truth_values: String,
        /// JSON report path; rows also land next to it as CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Count lattice versus linear basis sizes on uniform draws.
    BasisCountStudy {
        /// Comma-separated dimensions.
        #[arg(long, default_value = "2")]
        d: String,
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "64,128,256,512")]
        n: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the same sample through the density and hazard routes.
    CompareParametrizations {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        mixture: MixtureFlags,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// `auto` for the default geometric grid, or comma-separated budgets.
        #[arg(long, default_value = "auto")]
        grid: String,
        /// JSON report path; rows also land next to it as CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SimulateTarget {
    /// Two-covariate right-censored survival data.
    Survival {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        base_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        young_ratio: f64,
        #[arg(long, default_value_t = 2.0)]
        old_ratio: f64,
        #[arg(long, default_value_t = 0.3)]
        censor_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Univariate density data.
    Density {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        mixture: MixtureFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RateTaskArg {
    Regression,
}

/// A flag value that parsed but cannot be used as given.
struct UsageError(String);

enum CliError {
    Usage(UsageError),
    Run(HalError),
}

impl From<HalError> for CliError {
    fn from(e: HalError) -> Self {
        CliError::Run(e)
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(HalError::from(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(HalError::from(e))
    }
}

fn parse_floats(s: &str, what: &str) -> std::result::Result<Vec<f64>, UsageError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("{what}: cannot parse {p:?} as a float")))
        })
        .collect()
}

fn parse_usizes(s: &str, what: &str) -> std::result::Result<Vec<usize>, UsageError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| UsageError(format!("{what}: cannot parse {p:?} as an integer")))
        })
        .collect()
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, UsageError> {
    if s.trim() == "auto" {
        Ok(default_m_grid())
    } else {
        parse_floats(s, "--grid")
    }
}

/// Points given as `x1,x2;y1,y2;...` on the command line.
fn parse_points(s: &str) -> std::result::Result<Vec<Vec<f64>>, UsageError> {
    let pts: Vec<Vec<f64>> = s
        .split(';')
        .map(|p| parse_floats(p, "--knots"))
        .collect::<std::result::Result<_, _>>()?;
    if pts.is_empty() || pts.iter().any(Vec::is_empty) {
        return Err(UsageError("--knots: need at least one point".into()));
    }
    Ok(pts)
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_file_name(format!(
        "{}.{suffix}",
        out.file_stem().and_then(|s| s.to_str()).unwrap_or("out")
    ))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_echo(
    out: &Path,
    command: &str,
    params: serde_json::Value,
    seed: Option<u64>,
) -> Result<()> {
    let echo = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "params": params,
        "seed": seed,
        "timestamp": unix_now(),
    });
    std::fs::write(sidecar(out, "config.json"), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}

fn write_model_and_report(out: &Path, model: &HalModel, report: &serde_json::Value) -> Result<()> {
    std::fs::write(out, model.to_json()?)?;
    std::fs::write(
        sidecar(out, "report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

fn solve_report_json(report: &SolveReport, extra: serde_json::Value) -> serde_json::Value {
    let mut v = serde_json::to_value(report).unwrap_or_else(|_| json!({}));
    if let (Some(obj), serde_json::Value::Object(extra)) = (v.as_object_mut(), extra) {
        for (k, val) in extra {
            obj.insert(k, val);
        }
    }
    v
}

fn write_experiment(out: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::write(out, serde_json::to_string_pretty(report)?)?;
    std::fs::write(out.with_extension("csv"), report.to_csv())?;
    Ok(())
}

fn solver_opts(cli: &Cli) -> SolveOptions {
    SolveOptions {
        tol: cli.tol,
        max_iter: cli.max_iter,
        step_rule: cli.step_rule.to_rule(),
        ..SolveOptions::default()
    }
}

fn solver_echo(cli: &Cli) -> serde_json::Value {
    json!({
        "tol": cli.tol,
        "max_iter": cli.max_iter,
        "step_rule": cli.step_rule.name(),
    })
}

fn grid_points(k: usize) -> std::result::Result<Vec<f64>, UsageError> {
    if k < 2 {
        return Err(UsageError("--grid: need at least 2 points".into()));
    }
    Ok((0..k).map(|i| i as f64 / (k - 1) as f64).collect())
}

fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    let opts = solver_opts(cli);
    match &cli.command {
        Command::Simulate { target } => match target {
            SimulateTarget::Survival {
                n,
                seed,
                base_rate,
                young_ratio,
                old_ratio,
                censor_rate,
                out,
            } => {
                let params = SurvivalStudyParams {
                    base_rate: *base_rate,
                    young_ratio: *young_ratio,
                    old_ratio: *old_ratio,
                    censor_rate: *censor_rate,
                };
                let data = gen_survival_study(*n, *seed, &params)?;
                write_survival_csv(out, &data)?;
                write_echo(
                    out,
                    "simulate survival",
                    json!({"n": n, "params": params, "out": out}),
                    Some(*seed),
                )?;
            }
            SimulateTarget::Density { n, seed, mixture, out } => {
                let spec = mixture.to_spec();
                let data = gen_density_data(*n, *seed, &spec)?;
                write_density_csv(out, &data)?;
                write_echo(
                    out,
                    "simulate density",
                    json!({"n": n, "spec": mixture.echo(), "out": out}),
                    Some(*seed),
                )?;
            }
        },
        Command::FitRegression { input, m, out } => {
            let data = read_regression_csv(input)?;
            let (fit, report) = fit_regression(&data, *m, &opts)?;
            let risk = sq_error_risk(|x: &[f64]| fit.model.evaluate(x), &data);
            write_model_and_report(
                out,
                &fit.model,
                &solve_report_json(&report, json!({"empirical_risk": risk})),
            )?;
            write_echo(
                out,
                "fit-regression",
                json!({"input": input, "m": m, "solver": solver_echo(cli), "out": out}),
                None,
            )?;
        }
        Command::FitHazard { input, m, out } => {
            let data = read_survival_csv(input)?;
            let (fit, report) = fit_hazard(&data, *m, &opts)?;
            let risk = pl_risk(&fit, &data);
            write_model_and_report(
                out,
                &fit.model,
                &solve_report_json(&report, json!({"empirical_risk": risk})),
            )?;
            write_echo(
                out,
                "fit-hazard",
                json!({"input": input, "m": m, "solver": solver_echo(cli), "out": out}),
                None,
            )?;
        }
        Command::FitDensity { input, m, k, seed, out } => {
            let explicit_m = if m.trim() == "auto" {
                None
            } else {
                Some(m.trim().parse::<f64>().map_err(|_| {
                    UsageError(format!("--m: expected a float or `auto`, got {m:?}"))
                })?)
            };
            let data = read_density_csv(input)?;
            let (budget, cv_echo) = match explicit_m {
                Some(v) => (v, None),
                None => {
                    let cv =
                        cv_select_m(&CvData::Density(&data), &default_m_grid(), *k, *seed, &opts)?;
                    (cv.selected_m, Some(serde_json::to_value(&cv)?))
                }
            };
            let (fit, report) = fit_density(&data, budget, &opts)?;
            let risk = density_risk(|u, w| fit.log_density(u, w), &data, &fit.u_breakpoints());
            let mut extra = json!({"empirical_risk": risk, "m": budget});
            if let Some(cv) = cv_echo {
                extra["cv"] = cv;
            }
            write_model_and_report(out, &fit.model, &solve_report_json(&report, extra))?;
            write_echo(
                out,
                "fit-density",
                json!({
                    "input": input, "m": m, "k": k,
                    "solver": solver_echo(cli), "out": out,
                }),
                Some(*seed),
            )?;
        }
        Command::Cv { task, input, k, grid, seed, out } => {
            let m_grid = parse_grid(grid)?;
            let report = match task {
                TaskArg::Regression => {
                    let data = read_regression_csv(input)?;
                    cv_select_m(&CvData::Regression(&data), &m_grid, *k, *seed, &opts)?
                }
                TaskArg::Hazard => {
                    let data = read_survival_csv(input)?;
                    cv_select_m(&CvData::Hazard(&data), &m_grid, *k, *seed, &opts)?
                }
                TaskArg::Density => {
                    let data = read_density_csv(input)?;
                    cv_select_m(&CvData::Density(&data), &m_grid, *k, *seed, &opts)?
                }
            };
            std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
            write_echo(
                out,
                "cv",
                json!({
                    "task": task.name(), "input": input, "k": k, "grid": m_grid,
                    "solver": solver_echo(cli), "out": out,
                }),
                Some(*seed),
            )?;
        }
        Command::Project { target, knots, m, out } => {
            let points = parse_points(knots)?;
            let basis = halkit::basis::build_basis(&points, true)?;
            let d = points[0].len();
            let (moments, square) = match target.trim() {
                "linear" => {
                    if d != 1 {
                        return Err(UsageError("--target linear needs d = 1 knots".into()).into());
                    }
                    product_target_moments(&basis)
                }
                "product" => product_target_moments(&basis),
                t if t.starts_with("step:") => {
                    let at = parse_floats(&t["step:".len()..], "--target step")?;
                    if at.len() != d {
                        return Err(UsageError(format!(
                            "--target step: got {} coordinates for d = {d}",
                            at.len()
                        ))
                        .into());
                    }
                    step_target_moments(&basis, &at)?
                }
                other => {
                    return Err(UsageError(format!(
                        "--target: expected step:<coords>, linear, or product, got {other:?}"
                    ))
                    .into())
                }
            };
            let Projection { model, report, l2_error } =
                project_l2_moments(basis, &moments, square, *m, &opts)?;
            write_model_and_report(
                out,
                &model,
                &solve_report_json(&report, json!({"l2_error": l2_error})),
            )?;
            write_echo(
                out,
                "project",
                json!({
                    "target": target, "knots": knots, "m": m,
                    "solver": solver_echo(cli), "out": out,
                }),
                None,
            )?;
        }
        Command::SurvivalCurve { model, w, grid, out } => {
            let loaded = HalModel::from_json(&std::fs::read_to_string(model)?)?;
            let hazard = HazardModel::new(loaded)?;
            let w = parse_floats(w, "--w")?;
            let ts = grid_points(*grid)?;
            let survival = hazard.survival_curve(&w, &ts);
            let mut csv = String::from("t,S\n");
            for (t, s) in ts.iter().zip(&survival) {
                csv.push_str(&format!("{t},{s}\n"));
            }
            std::fs::write(out, csv)?;
            write_echo(
                out,
                "survival-curve",
                json!({"model": model, "w": w, "grid": grid, "out": out}),
                None,
            )?;
        }
        Command::DensityEval { model, w, grid, out } => {
            let loaded = HalModel::from_json(&std::fs::read_to_string(model)?)?;
            let density = DensityModel::new(loaded)?;
            let w = parse_floats(w, "--w")?;
            let us = grid_points(*grid)?;
            let mut csv = String::from("u,p,cdf\n");
            for &u in &us {
                let p = density.density(u, &w);
                let cdf = density.conditional_cdf(u, &w);
                csv.push_str(&format!("{u},{p},{cdf}\n"));
            }
            std::fs::write(out, csv)?;
            write_echo(
                out,
                "density-eval",
                json!({"model": model, "w": w, "grid": grid, "out": out}),
                None,
            )?;
        }
        Command::RateStudy {
            task,
            n_list,
            reps,
            seed,
            m,
            noise_sd,
            truth_breakpoints,
            truth_values,
            out,
        } => {
            let RateTaskArg::Regression = task;
            let truth = PiecewiseConstantFn::new(
                parse_floats(truth_breakpoints, "--truth-breakpoints")?,
                parse_floats(truth_values, "--truth-values")?,
            )?;
            let config = RateStudyConfig {
                task: RateTask::Regression,
                n_list: parse_usizes(n_list, "--n-list")?,
                reps: *reps,
                seed: *seed,
                norm_budget: *m,
                noise_sd: *noise_sd,
            };
            let report = run_rate_study(&truth, &config, &opts)?;
            write_experiment(out, &report)?;
            write_echo(
                out,
                "rate-study",
                json!({"config": config, "solver": solver_echo(cli), "out": out}),
                Some(*seed),
            )?;
        }
        Command::BasisCountStudy { d, n, reps, seed, out } => {
            let d_list: Vec<u32> = parse_usizes(d, "--d")?
                .into_iter()
                .map(|v| v as u32)
                .collect();
            let n_list = parse_usizes(n, "--n")?;
            let report = run_basis_count_study(&d_list, &n_list, *reps, *seed)?;
            std::fs::write(out, report.to_csv())?;
            std::fs::write(sidecar(out, "report.json"), serde_json::to_string_pretty(&report)?)?;
            write_echo(
                out,
                "basis-count-study",
                json!({"d": d_list, "n": n_list, "reps": reps, "out": out}),
                Some(*seed),
            )?;
        }
        Command::CompareParametrizations { n, seed, mixture, k, grid, out } => {
            let spec = mixture.to_spec();
            let m_grid = parse_grid(grid)?;
            let report =
                run_parametrization_comparison(*n, *seed, &spec, *k, Some(&m_grid), &opts)?;
            write_experiment(out, &report)?;
            write_echo(
                out,
                "compare-parametrizations",
                json!({
                    "n": n, "spec": mixture.echo(), "k": k, "grid": m_grid,
                    "solver": solver_echo(cli), "out": out,
                }),
                Some(*seed),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HALKIT_THREADS") {
        if let Ok(k) = threads.trim().parse::<usize>() {
            if k >= 1 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                    .ok();
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(UsageError(msg))) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
