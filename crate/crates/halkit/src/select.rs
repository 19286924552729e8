//! K-fold cross-validation over a grid of variation-norm budgets.
//!
//! Folds come from one seeded shuffle, every per-fold basis is built from
//! training rows alone, and the grid is swept from the largest budget down
//! so each solve warm-starts from its looser neighbor. Held-out risks reuse
//! the exact risk computations: merged-breakpoint integration for hazards
//! and exact normalizers for densities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, DomainTransform, HalModel};
use crate::density::{fit_density, DensityModel};
use crate::error::{HalError, Result};
use crate::losses::{
    density_risk, pl_risk, DensityDataset, RegressionDataset, SurvivalDataset,
};
use crate::regression::fit_regression;
use crate::solver::{minimize_l1ball, SolveOptions};
use crate::survival::{fit_hazard, HazardModel};

/// The dataset being cross-validated, which also names the task.
pub enum CvData<'a> {
    Regression(&'a RegressionDataset),
    Hazard(&'a SurvivalDataset),
    Density(&'a DensityDataset),
}

impl CvData<'_> {
    fn len(&self) -> usize {
        match self {
            CvData::Regression(d) => d.len(),
            CvData::Hazard(d) => d.len(),
            CvData::Density(d) => d.len(),
        }
    }

    fn task_name(&self) -> &'static str {
        match self {
            CvData::Regression(_) => "regression",
            CvData::Hazard(_) => "hazard",
            CvData::Density(_) => "density",
        }
    }
}

/// Everything a budget selection run produced. Serializes stably, so equal
/// inputs give byte-identical reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub task: String,
    pub grid: Vec<f64>,
    pub k: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    /// Fold indices that contributed risks (hazard folds without events on
    /// either side of the split are skipped).
    pub retained_folds: Vec<usize>,
    /// Held-out risks indexed `[grid position][retained fold position]`.
    pub fold_risks: Vec<Vec<f64>>,
    pub mean_risk: Vec<f64>,
    pub se_risk: Vec<f64>,
    /// Budget with the smallest mean held-out risk; ties go to the smaller
    /// budget.
    pub selected_m: f64,
    /// Smallest budget whose mean risk is within one standard error of the
    /// minimum.
    pub selected_m_one_se: f64,
    /// Held-out rows that fell outside the training hull after the fold's
    /// domain transform and were clamped during evaluation.
    pub clipped_rows: usize,
    pub warnings: Vec<String>,
}

/// Thirteen geometrically spaced budgets from 1/4 to 1024.
pub fn default_m_grid() -> Vec<f64> {
    (-2..=10).map(|e| 2.0f64.powi(e)).collect()
}

struct FoldOutcome {
    fold: usize,
    risks: Option<Vec<f64>>,
    clipped: usize,
    warning: Option<String>,
}

/// Select the variation-norm budget by K-fold cross-validation.
pub fn cv_select_m(
    data: &CvData,
    grid: &[f64],
    k: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<CvReport> {
    let n = data.len();
    if k < 2 || k > n {
        return Err(HalError::InvalidArgument(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    if grid.is_empty() {
        return Err(HalError::InvalidArgument("empty budget grid".into()));
    }
    if grid.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(HalError::InvalidArgument("budgets must be positive and finite".into()));
    }
    if grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(HalError::InvalidArgument("budget grid must be strictly increasing".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
    let base = n / k;
    let extra = n % k;
    let mut at = 0;
    for j in 0..k {
        let size = base + usize::from(j < extra);
        folds.push(order[at..at + size].to_vec());
        at += size;
    }
    let fold_sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();

    let outcomes: Vec<FoldOutcome> = (0..k)
        .into_par_iter()
        .map(|j| run_fold(data, grid, &folds, j, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut retained_folds = Vec::new();
    let mut fold_risks: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    let mut clipped_rows = 0;
    let mut warnings = Vec::new();
    for out in outcomes {
        clipped_rows += out.clipped;
        if let Some(w) = out.warning {
            warnings.push(w);
        }
        if let Some(risks) = out.risks {
            retained_folds.push(out.fold);
            for (gi, r) in risks.into_iter().enumerate() {
                fold_risks[gi].push(r);
            }
        }
    }
    if retained_folds.is_empty() {
        return Err(HalError::InvalidArgument(
            "every fold was skipped; no held-out risks to compare".into(),
        ));
    }

    let f = retained_folds.len() as f64;
    let mean_risk: Vec<f64> = fold_risks
        .iter()
        .map(|rs| rs.iter().sum::<f64>() / f)
        .collect();
    let se_risk: Vec<f64> = fold_risks
        .iter()
        .zip(&mean_risk)
        .map(|(rs, &mu)| {
            if rs.len() < 2 {
                0.0
            } else {
                let var =
                    rs.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / (rs.len() as f64 - 1.0);
                (var / rs.len() as f64).sqrt()
            }
        })
        .collect();

    let mut best = 0;
    for gi in 1..grid.len() {
        if mean_risk[gi] < mean_risk[best] {
            best = gi;
        }
    }
    let threshold = mean_risk[best] + se_risk[best];
    let one_se = (0..grid.len())
        .find(|&gi| mean_risk[gi] <= threshold)
        .unwrap_or(best);

    Ok(CvReport {
        task: data.task_name().to_string(),
        grid: grid.to_vec(),
        k,
        seed,
        fold_sizes,
        retained_folds,
        fold_risks,
        mean_risk,
        se_risk,
        selected_m: grid[best],
        selected_m_one_se: grid[one_se],
        clipped_rows,
        warnings,
    })
}

/// Refit on the full data at the selected budget.
pub fn refit_selected(
    data: &CvData,
    report: &CvReport,
    opts: &SolveOptions,
) -> Result<HalModel> {
    let m = report.selected_m;
    Ok(match data {
        CvData::Regression(d) => fit_regression(d, m, opts)?.0.model,
        CvData::Hazard(d) => fit_hazard(d, m, opts)?.0.model,
        CvData::Density(d) => fit_density(d, m, opts)?.0.model,
    })
}

fn run_fold(
    data: &CvData,
    grid: &[f64],
    folds: &[Vec<usize>],
    j: usize,
    opts: &SolveOptions,
) -> Result<FoldOutcome> {
    let test_idx = &folds[j];
    let train_idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(jj, _)| *jj != j)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();

    match data {
        CvData::Regression(d) => {
            let train = d.subset(&train_idx);
            let test = d.subset(test_idx);
            let (risks, transform) = sweep_regression(&train, &test, grid, opts)?;
            let clipped = test.xs.iter().filter(|x| transform.clips(x)).count();
            Ok(FoldOutcome { fold: j, risks: Some(risks), clipped, warning: None })
        }
        CvData::Hazard(d) => {
            let train = d.subset(&train_idx);
            let test = d.subset(test_idx);
            if train.n_events() == 0 || test.n_events() == 0 {
                let side = if train.n_events() == 0 { "training split" } else { "held-out fold" };
                return Ok(FoldOutcome {
                    fold: j,
                    risks: None,
                    clipped: 0,
                    warning: Some(format!("fold {j} skipped: no events in its {side}")),
                });
            }
            let (risks, transform) = sweep_hazard(&train, &test, grid, opts)?;
            let clipped = test
                .rows
                .iter()
                .filter(|r| {
                    let mut p = vec![r.time];
                    p.extend_from_slice(&r.w);
                    transform.clips(&p)
                })
                .count();
            Ok(FoldOutcome { fold: j, risks: Some(risks), clipped, warning: None })
        }
        CvData::Density(d) => {
            let train = d.subset(&train_idx);
            let test = d.subset(test_idx);
            let (risks, transform) = sweep_density(&train, &test, grid, opts)?;
            let clipped = test
                .us
                .iter()
                .zip(&test.ws)
                .filter(|(&u, w)| {
                    let mut p = vec![u];
                    p.extend_from_slice(w);
                    transform.clips(&p)
                })
                .count();
            Ok(FoldOutcome { fold: j, risks: Some(risks), clipped, warning: None })
        }
    }
}

/// Descending sweep over the grid with warm starts; returns risks in
/// ascending grid order.
fn descending_sweep<FIT, EVAL>(grid: &[f64], opts: &SolveOptions, mut fit: FIT, mut eval: EVAL) -> Result<Vec<f64>>
where
    FIT: FnMut(f64, &SolveOptions) -> Result<Vec<f64>>,
    EVAL: FnMut(&[f64]) -> f64,
{
    let mut risks = vec![0.0; grid.len()];
    let mut warm: Option<Vec<f64>> = None;
    for gi in (0..grid.len()).rev() {
        let fold_opts = SolveOptions { init: warm.clone(), ..opts.clone() };
        let beta = fit(grid[gi], &fold_opts)?;
        risks[gi] = eval(&beta);
        warm = Some(beta);
    }
    Ok(risks)
}

fn sweep_regression(
    train: &RegressionDataset,
    test: &RegressionDataset,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, DomainTransform)> {
    use crate::losses::SquaredErrorOracle;
    let transform = DomainTransform::from_data(&train.xs)?;
    let unit: Vec<Vec<f64>> = train.xs.iter().map(|x| transform.apply(x)).collect();
    let basis = build_basis(&unit, true)?;
    let oracle = SquaredErrorOracle::new(&basis, &unit, &train.ys)?;
    let risks = descending_sweep(
        grid,
        opts,
        |m, o| Ok(minimize_l1ball(&oracle, m, o)?.0),
        |beta| {
            let model =
                HalModel::new(basis.clone(), beta.to_vec(), 0.0, transform.clone()).unwrap();
            test.xs
                .iter()
                .zip(&test.ys)
                .map(|(x, &y)| {
                    let r = model.evaluate(x) - y;
                    r * r
                })
                .sum::<f64>()
                / test.len() as f64
        },
    )?;
    Ok((risks, transform))
}

fn sweep_hazard(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, DomainTransform)> {
    use crate::losses::{expand_person_period, PoissonLossOracle};
    use crate::losses::SurvivalRow;
    let points: Vec<Vec<f64>> = train
        .rows
        .iter()
        .map(|r| {
            let mut p = vec![r.time];
            p.extend_from_slice(&r.w);
            p
        })
        .collect();
    let transform = DomainTransform::from_data(&points)?;
    let unit_points: Vec<Vec<f64>> = points.iter().map(|p| transform.apply(p)).collect();
    let unit_rows: Vec<SurvivalRow> = train
        .rows
        .iter()
        .zip(&unit_points)
        .map(|(r, p)| SurvivalRow { w: p[1..].to_vec(), time: r.time, status: r.status })
        .collect();
    let unit_train = SurvivalDataset::new(unit_rows)?;
    let basis = build_basis(&unit_points, true)?;
    let table = expand_person_period(&unit_train);
    let oracle = PoissonLossOracle::new(&basis, &table)?;
    let risks = descending_sweep(
        grid,
        opts,
        |m, o| Ok(minimize_l1ball(&oracle, m, o)?.0),
        |beta| {
            let model = HazardModel {
                model: HalModel::new(basis.clone(), beta.to_vec(), 0.0, transform.clone())
                    .unwrap(),
            };
            pl_risk(&model, test)
        },
    )?;
    Ok((risks, transform))
}

fn sweep_density(
    train: &DensityDataset,
    test: &DensityDataset,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, DomainTransform)> {
    use crate::basis::build_basis_masked;
    use crate::losses::DensityLossOracle;
    let points: Vec<Vec<f64>> = train
        .us
        .iter()
        .zip(&train.ws)
        .map(|(&u, w)| {
            let mut p = vec![u];
            p.extend_from_slice(w);
            p
        })
        .collect();
    let transform = DomainTransform::from_data(&points)?;
    let unit_points: Vec<Vec<f64>> = points.iter().map(|p| transform.apply(p)).collect();
    let unit_train = DensityDataset::new(
        unit_points.iter().map(|p| p[0]).collect(),
        unit_points.iter().map(|p| p[1..].to_vec()).collect(),
    )?;
    let basis = build_basis_masked(&unit_points, false, |mask| mask & 1 == 1)?;
    let oracle = DensityLossOracle::new(&basis, &unit_train)?;
    let risks = descending_sweep(
        grid,
        opts,
        |m, o| Ok(minimize_l1ball(&oracle, m, o)?.0),
        |beta| {
            let model = DensityModel::new(
                HalModel::new(basis.clone(), beta.to_vec(), 0.0, transform.clone()).unwrap(),
            )
            .unwrap();
            let breaks = model.u_breakpoints();
            density_risk(
                |u, w| {
                    let mut p = vec![u];
                    p.extend_from_slice(w);
                    model.model.evaluate(&p)
                },
                test,
                &breaks,
            )
        },
    )?;
    Ok((risks, transform))
}
