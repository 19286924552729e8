//! Experiment drivers: the convergence-rate study, the density-versus-hazard
//! parametrization comparison, and the basis-count study.
//!
//! Every driver returns an [`ExperimentReport`] whose `config` field echoes
//! all parameters and seeds, so a report can be reproduced exactly from its
//! own metadata. Replicates draw from per-cell RNG streams of one seed and
//! run in parallel; assembly is by index, so worker order cannot change any
//! output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::basis::PiecewiseConstantFn;
use crate::density::fit_density;
use crate::error::{HalError, Result};
use crate::losses::{RegressionDataset, SurvivalDataset, SurvivalRow};
use crate::regression::{erm_basis_count, fit_regression, hal_basis_count};
use crate::select::{cv_select_m, default_m_grid, CvData};
use crate::sim::{gen_density_data, DensitySpec};
use crate::solver::SolveOptions;
use crate::survival::fit_hazard;

/// Tabular outcome of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Every parameter and seed needed to reproduce the rows exactly.
    pub config: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_se: Option<f64>,
    pub flags: Vec<String>,
}

impl ExperimentReport {
    /// Render the metric rows as CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Least-squares slope of y on x with its standard error.
fn slope_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (xs.len().max(3) - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    (slope, se)
}

/// Which estimation task a rate study exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateTask {
    Regression,
}

/// Sample sizes, replicate count, and generator settings for a rate study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateStudyConfig {
    pub task: RateTask,
    /// Strictly increasing sample sizes.
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Fixed variation budget for every fit; must cover the truth.
    pub norm_budget: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sd: f64,
}

/// Everything a single rate-study cell produced.
struct RateCell {
    n: usize,
    rep: usize,
    error: f64,
}

// A certified gap of tol bounds the excess squared-error risk by tol, so
// fitted-vs-truth L2 errors cannot be resolved much below sqrt(tol).
fn error_floor(tol: f64) -> f64 {
    10.0 * tol.max(0.0).sqrt()
}

/// Run the convergence-rate study: for each `(n, replicate)` cell draw
/// covariates uniformly, add Gaussian noise to the step-function truth, fit
/// at the fixed budget, and record the exact L2 distance between the fitted
/// step function and the truth. The report's slope is the least-squares fit
/// of log error on log n over all cells.
///
/// Any fit that ends without its convergence certificate aborts the study,
/// naming the offending cell.
pub fn run_rate_study(
    truth: &PiecewiseConstantFn,
    config: &RateStudyConfig,
    opts: &SolveOptions,
) -> Result<ExperimentReport> {
    if config.n_list.is_empty() || config.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HalError::InvalidArgument(
            "n_list must be nonempty and strictly increasing".into(),
        ));
    }
    if config.reps == 0 {
        return Err(HalError::InvalidArgument("need reps >= 1".into()));
    }
    if !(config.noise_sd.is_finite() && config.noise_sd >= 0.0) {
        return Err(HalError::InvalidArgument(format!(
            "noise_sd must be nonnegative and finite, got {}",
            config.noise_sd
        )));
    }
    if truth.variation_norm() > config.norm_budget {
        return Err(HalError::InvalidArgument(format!(
            "budget {} does not cover the truth's variation norm {}",
            config.norm_budget,
            truth.variation_norm()
        )));
    }
    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| HalError::InvalidArgument(format!("noise law: {e}")))?;

    let cells: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .enumerate()
        .flat_map(|(ni, _)| (0..config.reps).map(move |rep| (ni, rep)))
        .collect();
    let mut results: Vec<RateCell> = cells
        .into_par_iter()
        .map(|(ni, rep)| -> Result<RateCell> {
            let n = config.n_list[ni];
            // stream id: sample-size index in the high half, replicate in the low
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((ni as u64) << 32) | rep as u64);
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = rng.random();
                ys.push(truth.value(x) + noise.sample(&mut rng));
                xs.push(vec![x]);
            }
            let data = RegressionDataset::new(xs, ys)?;
            let (fit, report) = fit_regression(&data, config.norm_budget, opts)?;
            if !report.converged {
                return Err(HalError::NotConverged(format!(
                    "rate study fit at n={n}, rep={rep}, seed={} stopped with {:?} \
                     at gap {:.3e}",
                    config.seed, report.termination, report.fw_gap
                )));
            }
            let error = truth.l2_distance(&fit.model.to_step_fn()?);
            Ok(RateCell { n, rep, error })
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|c| (c.n, c.rep));

    let floor = error_floor(opts.tol);
    let floored = results.iter().filter(|c| c.error < floor).count();
    let at_floor = 2 * floored > results.len();
    let log_n: Vec<f64> = results.iter().map(|c| (c.n as f64).ln()).collect();
    let log_err: Vec<f64> = results
        .iter()
        .map(|c| c.error.max(f64::MIN_POSITIVE).ln())
        .collect();
    let (slope, se) = slope_with_se(&log_n, &log_err);

    let rows = results
        .iter()
        .map(|c| vec![c.n as f64, c.rep as f64, c.error])
        .collect();
    let mut flags = Vec::new();
    if at_floor {
        flags.push("error-floor".to_string());
    }
    Ok(ExperimentReport {
        experiment: "rate-study".into(),
        config: json!({
            "task": config.task,
            "n_list": config.n_list,
            "reps": config.reps,
            "seed": config.seed,
            "norm_budget": config.norm_budget,
            "noise_sd": config.noise_sd,
            "truth": { "breakpoints": truth.breakpoints, "values": truth.values },
            "tol": opts.tol,
            "max_iter": opts.max_iter,
            "step_rule": format!("{:?}", opts.step_rule),
        }),
        columns: vec!["n".into(), "rep".into(), "error".into()],
        rows,
        slope: Some(slope),
        slope_se: Some(se),
        flags,
    })
}

/// Exact density of the generating law at `u`.
pub fn density_spec_pdf(spec: &DensitySpec, u: f64) -> f64 {
    match *spec {
        DensitySpec::Uniform => 1.0,
        DensitySpec::BetaUniformMixture { a, b, weight } => {
            let ln_beta = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
            let beta_pdf = if u <= 0.0 || u >= 1.0 {
                0.0
            } else {
                ((a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta).exp()
            };
            weight * beta_pdf + (1.0 - weight)
        }
    }
}

/// Root-mean-square distance between a fitted density and the generating
/// density over `grid_points` midpoints of [0,1].
fn grid_l2<F: Fn(f64) -> f64>(fitted: F, spec: &DensitySpec, grid_points: usize) -> f64 {
    let n = grid_points as f64;
    let total: f64 = (0..grid_points)
        .map(|j| {
            let u = (j as f64 + 0.5) / n;
            (fitted(u) - density_spec_pdf(spec, u)).powi(2)
        })
        .sum();
    (total / n).sqrt()
}

const COMPARISON_GRID: usize = 1001;

/// Fit the same sample once as a conditional density and once through the
/// hazard parametrization, selecting each budget by K-fold cross-validation
/// on one shared grid. Reports, per route, the exact integral of the fitted
/// density, its mass deficiency, the grid L2 distance to the generating
/// density, and the selected budget.
pub fn run_parametrization_comparison(
    n: usize,
    seed: u64,
    spec: &DensitySpec,
    k: usize,
    grid: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<ExperimentReport> {
    let data = gen_density_data(n, seed, spec)?;
    let m_grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => default_m_grid(),
    };

    let dens_cv = cv_select_m(&CvData::Density(&data), &m_grid, k, seed, opts)?;
    let (dens_fit, _) = fit_density(&data, dens_cv.selected_m, opts)?;
    let dens_integral = dens_fit.conditional_cdf(1.0, &[]);
    let dens_l2 = grid_l2(|u| dens_fit.density(u, &[]), spec, COMPARISON_GRID);

    let surv_rows: Vec<SurvivalRow> = data
        .us
        .iter()
        .map(|&u| SurvivalRow { w: vec![], time: u, status: 1 })
        .collect();
    let surv = SurvivalDataset::new(surv_rows)?;
    let haz_cv = cv_select_m(&CvData::Hazard(&surv), &m_grid, k, seed, opts)?;
    let (haz_fit, _) = fit_hazard(&surv, haz_cv.selected_m, opts)?;
    let haz_deficiency = haz_fit.deficiency(&[]);
    let haz_integral = 1.0 - haz_deficiency;
    let haz_l2 = grid_l2(|u| haz_fit.density(u, &[]), spec, COMPARISON_GRID);

    Ok(ExperimentReport {
        experiment: "compare-parametrizations".into(),
        config: json!({
            "n": n,
            "seed": seed,
            "spec": spec,
            "k": k,
            "m_grid": m_grid,
            "grid_points": COMPARISON_GRID,
            "tol": opts.tol,
            "max_iter": opts.max_iter,
            "step_rule": format!("{:?}", opts.step_rule),
        }),
        columns: vec![
            "route".into(),
            "integral".into(),
            "deficiency".into(),
            "l2_error".into(),
            "selected_m".into(),
        ],
        rows: vec![
            vec![0.0, dens_integral, 1.0 - dens_integral, dens_l2, dens_cv.selected_m],
            vec![1.0, haz_integral, haz_deficiency, haz_l2, haz_cv.selected_m],
        ],
        slope: None,
        slope_se: None,
        flags: Vec::new(),
    })
}

/// Count, for every `(d, n, replicate)` cell with uniform covariates, the
/// lattice basis an unrestricted minimizer may need next to the linear-size
/// basis this crate uses.
pub fn run_basis_count_study(
    d_list: &[u32],
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if d_list.is_empty() || n_list.is_empty() || reps == 0 {
        return Err(HalError::InvalidArgument(
            "need at least one d, one n, and reps >= 1".into(),
        ));
    }
    let cells: Vec<(usize, usize, usize)> = d_list
        .iter()
        .enumerate()
        .flat_map(|(di, _)| {
            n_list.iter().enumerate().flat_map(move |(ni, _)| {
                (0..reps).map(move |rep| (di, ni, rep))
            })
        })
        .collect();
    let mut rows: Vec<Vec<f64>> = cells
        .into_par_iter()
        .map(|(di, ni, rep)| -> Result<Vec<f64>> {
            let d = d_list[di];
            let n = n_list[ni];
            // stream id: dimension index, then size index, then replicate
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((di as u64) << 48) | ((ni as u64) << 32) | rep as u64);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random()).collect())
                .collect();
            let erm = erm_basis_count(&points)?;
            let hal = hal_basis_count(n as u64, d)?;
            Ok(vec![d as f64, n as f64, rep as f64, erm as f64, hal as f64])
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());

    Ok(ExperimentReport {
        experiment: "basis-count-study".into(),
        config: json!({
            "d_list": d_list,
            "n_list": n_list,
            "reps": reps,
            "seed": seed,
        }),
        columns: vec![
            "d".into(),
            "n".into(),
            "rep".into(),
            "erm_count".into(),
            "hal_count".into(),
        ],
        rows,
        slope: None,
        slope_se: None,
        flags: Vec::new(),
    })
}
