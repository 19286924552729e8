//! Datasets and the empirical risks driving every fit in the crate.
//!
//! All risks are empirical means, not sums. The survival loss integrates a
//! piecewise-constant log-hazard exactly between observed times, and has an
//! equivalent person-period (Poisson) form used by the fitting oracles. The
//! density loss normalizes through an exact interval sum, so fitted densities
//! integrate to one by construction.

use crate::basis::{design_matrix, BasisSet, PiecewiseConstantFn, PrefixDesign, SparseDesign};
use crate::error::{HalError, Result};
use crate::solver::ObjectiveOracle;

/// Supervised regression sample. Rows are kept exactly as given; fits derive
/// their own coordinate transform from the rows they see.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    /// Largest |y| observed, recorded at construction.
    pub y_bound: f64,
}

impl RegressionDataset {
    /// Strict constructor: covariates must already live in the unit cube.
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        let ds = Self::from_raw(xs, ys)?;
        for (i, row) in ds.xs.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HalError::CoordinateOutOfDomain { row: i, coord: j, value: v });
                }
            }
        }
        Ok(ds)
    }

    /// Accept raw covariates anywhere on the real line; fits rescale them.
    pub fn from_raw(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(HalError::InvalidArgument("no rows".into()));
        }
        if xs.len() != ys.len() {
            return Err(HalError::DimensionMismatch { expected: xs.len(), actual: ys.len() });
        }
        let d = xs[0].len();
        let mut y_bound: f64 = 0.0;
        for (i, (row, &y)) in xs.iter().zip(&ys).enumerate() {
            if row.len() != d {
                return Err(HalError::DimensionMismatch { expected: d, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(HalError::BadData { row: i, reason: "non-finite covariate".into() });
            }
            if !y.is_finite() {
                return Err(HalError::BadData { row: i, reason: "non-finite response".into() });
            }
            y_bound = y_bound.max(y.abs());
        }
        Ok(RegressionDataset { xs, ys, y_bound })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn d(&self) -> usize {
        self.xs[0].len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        RegressionDataset {
            xs: idx.iter().map(|&i| self.xs[i].clone()).collect(),
            ys: idx.iter().map(|&i| self.ys[i]).collect(),
            y_bound: self.y_bound,
        }
    }
}

/// One right-censored observation: covariates, the observed time
/// `min(event, censor, 1)`, and the event indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRow {
    pub w: Vec<f64>,
    pub time: f64,
    pub status: u8,
}

/// Right-censored sample on the unit time horizon.
///
/// An observed time of exactly 1 is censoring by convention; rows claiming an
/// event there are rejected at construction.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    pub rows: Vec<SurvivalRow>,
}

impl SurvivalDataset {
    /// Strict constructor: covariates must already live in the unit cube.
    pub fn new(rows: Vec<SurvivalRow>) -> Result<Self> {
        let ds = Self::from_raw(rows)?;
        for (i, row) in ds.rows.iter().enumerate() {
            for (j, &v) in row.w.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HalError::CoordinateOutOfDomain {
                        row: i,
                        coord: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(ds)
    }

    /// Accept raw covariates; times and statuses are still validated because
    /// the loss needs the unit horizon.
    pub fn from_raw(rows: Vec<SurvivalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(HalError::InvalidArgument("no rows".into()));
        }
        let k = rows[0].w.len();
        for (i, row) in rows.iter().enumerate() {
            if row.w.len() != k {
                return Err(HalError::DimensionMismatch { expected: k, actual: row.w.len() });
            }
            if row.w.iter().any(|v| !v.is_finite()) {
                return Err(HalError::BadData { row: i, reason: "non-finite covariate".into() });
            }
            if !(0.0..=1.0).contains(&row.time) {
                return Err(HalError::BadData {
                    row: i,
                    reason: format!("observed time {} outside [0,1]", row.time),
                });
            }
            if row.status > 1 {
                return Err(HalError::BadData {
                    row: i,
                    reason: format!("status must be 0 or 1, got {}", row.status),
                });
            }
            if row.time == 1.0 && row.status == 1 {
                return Err(HalError::BadData {
                    row: i,
                    reason: "status must be 0 at time 1; the horizon itself is censoring".into(),
                });
            }
        }
        Ok(SurvivalDataset { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Covariate count; the model dimension is this plus one for time.
    pub fn w_dim(&self) -> usize {
        self.rows[0].w.len()
    }

    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.status == 1).count()
    }

    /// Sorted unique observed times.
    pub fn unique_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.rows.iter().map(|r| r.time).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        SurvivalDataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Conditional-density sample: a response in [0,1] and covariates.
#[derive(Debug, Clone)]
pub struct DensityDataset {
    pub us: Vec<f64>,
    pub ws: Vec<Vec<f64>>,
}

impl DensityDataset {
    /// Strict constructor: covariates must already live in the unit cube.
    pub fn new(us: Vec<f64>, ws: Vec<Vec<f64>>) -> Result<Self> {
        let ds = Self::from_raw(us, ws)?;
        for (i, row) in ds.ws.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HalError::CoordinateOutOfDomain {
                        row: i,
                        coord: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(ds)
    }

    pub fn from_raw(us: Vec<f64>, ws: Vec<Vec<f64>>) -> Result<Self> {
        if us.is_empty() {
            return Err(HalError::InvalidArgument("no rows".into()));
        }
        if us.len() != ws.len() {
            return Err(HalError::DimensionMismatch { expected: us.len(), actual: ws.len() });
        }
        let k = ws[0].len();
        for i in 0..us.len() {
            if ws[i].len() != k {
                return Err(HalError::DimensionMismatch { expected: k, actual: ws[i].len() });
            }
            if !(0.0..=1.0).contains(&us[i]) {
                return Err(HalError::BadData {
                    row: i,
                    reason: format!("response {} outside [0,1]", us[i]),
                });
            }
            if ws[i].iter().any(|v| !v.is_finite()) {
                return Err(HalError::BadData { row: i, reason: "non-finite covariate".into() });
            }
        }
        Ok(DensityDataset { us, ws })
    }

    pub fn len(&self) -> usize {
        self.us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.us.is_empty()
    }

    pub fn w_dim(&self) -> usize {
        self.ws[0].len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        DensityDataset {
            us: idx.iter().map(|&i| self.us[i]).collect(),
            ws: idx.iter().map(|&i| self.ws[i].clone()).collect(),
        }
    }
}

/// Anything that behaves like a right-continuous log-hazard surface that is
/// piecewise constant in time.
pub trait HazardSurface {
    fn log_hazard(&self, t: f64, w: &[f64]) -> f64;
    /// Sorted unique time breakpoints in (0,1].
    fn time_breakpoints(&self) -> Vec<f64>;
}

impl HazardSurface for PiecewiseConstantFn {
    fn log_hazard(&self, t: f64, _w: &[f64]) -> f64 {
        self.value(t)
    }
    fn time_breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

/// Mean squared error of predictions against responses.
pub fn sq_error_risk<F: Fn(&[f64]) -> f64>(f: F, data: &RegressionDataset) -> f64 {
    let n = data.len() as f64;
    data.xs
        .iter()
        .zip(&data.ys)
        .map(|(x, &y)| {
            let r = f(x) - y;
            r * r
        })
        .sum::<f64>()
        / n
}

/// Exact negative partial likelihood of a piecewise-constant log-hazard:
/// mean over subjects of the integrated hazard up to the observed time minus
/// the log-hazard at observed event times.
///
/// The integration grid merges the data's unique times with the surface's
/// own breakpoints, and the surface is evaluated at interval left endpoints,
/// which is exact for right-continuous step functions.
pub fn pl_risk<H: HazardSurface + ?Sized>(f: &H, data: &SurvivalDataset) -> f64 {
    let mut grid = data.unique_times();
    grid.extend(f.time_breakpoints());
    grid.retain(|&t| t > 0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let n = data.len() as f64;
    let mut total = 0.0;
    for row in &data.rows {
        let mut integral = 0.0;
        let mut left = 0.0;
        for &right in &grid {
            if left >= row.time {
                break;
            }
            let len = right.min(row.time) - left;
            integral += len * f.log_hazard(left, &row.w).exp();
            left = right;
        }
        total += integral;
        if row.status == 1 {
            total -= f.log_hazard(row.time, &row.w);
        }
    }
    total / n
}

/// One exposure interval of one subject in the person-period layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonPeriodRow {
    pub subject: usize,
    pub interval: usize,
    pub w: Vec<f64>,
    /// Interval left endpoint; where the hazard is evaluated for exposure.
    pub eval_time: f64,
    pub length: f64,
    /// True on the row whose interval ends at the subject's event time.
    pub event: bool,
    /// The subject's observed time; the event term evaluates the hazard here.
    pub event_time: f64,
}

#[derive(Debug, Clone)]
pub struct PersonPeriodTable {
    pub rows: Vec<PersonPeriodRow>,
    pub n_subjects: usize,
}

/// Expand a survival sample over the grid of unique observed times.
///
/// Each subject contributes one row per grid interval it survives into; tied
/// times collapse into one grid point and zero-length exposure rows are
/// dropped. The single exception is an event at time zero, which keeps a
/// zero-length row so its event term is not lost.
pub fn expand_person_period(data: &SurvivalDataset) -> PersonPeriodTable {
    let grid = data.unique_times();
    let mut rows = Vec::new();
    for (i, row) in data.rows.iter().enumerate() {
        if row.time == 0.0 {
            if row.status == 1 {
                rows.push(PersonPeriodRow {
                    subject: i,
                    interval: 0,
                    w: row.w.clone(),
                    eval_time: 0.0,
                    length: 0.0,
                    event: true,
                    event_time: 0.0,
                });
            }
            continue;
        }
        let mut left = 0.0;
        for (j, &right) in grid.iter().enumerate() {
            if right <= 0.0 {
                continue;
            }
            if left >= row.time {
                break;
            }
            let end = right.min(row.time);
            rows.push(PersonPeriodRow {
                subject: i,
                interval: j,
                w: row.w.clone(),
                eval_time: left,
                length: end - left,
                event: row.status == 1 && end == row.time,
                event_time: row.time,
            });
            left = right;
        }
    }
    PersonPeriodTable {
        rows,
        n_subjects: data.len(),
    }
}

/// Person-period (Poisson) form of the survival risk for any log-hazard.
/// Agrees with [`pl_risk`] exactly for surfaces whose time breakpoints lie
/// on the unique observed times.
pub fn pl_risk_poisson<F: Fn(f64, &[f64]) -> f64>(f: F, table: &PersonPeriodTable) -> f64 {
    let n = table.n_subjects as f64;
    let mut total = 0.0;
    for row in &table.rows {
        total += row.length * f(row.eval_time, &row.w).exp();
        if row.event {
            total -= f(row.event_time, &row.w);
        }
    }
    total / n
}

/// Log of the exact normalizing integral of `exp(g(., w))` over [0,1],
/// where `g` is right-continuous and constant between the given breakpoints.
pub fn log_normalizer<G: Fn(f64, &[f64]) -> f64>(g: G, w: &[f64], breakpoints: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < 1.0)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut terms = Vec::with_capacity(cuts.len() + 1);
    let mut left = 0.0;
    for &right in cuts.iter().chain(std::iter::once(&1.0)) {
        let len = right - left;
        if len > 0.0 {
            terms.push(len.ln() + g(left, w));
        }
        left = right;
    }
    log_sum_exp(&terms)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}

/// Mean conditional-density loss of a shape function `g`: the log normalizer
/// at each observation's covariates minus `g` at the observation itself.
/// Adding any function of `w` alone leaves this invariant.
pub fn density_risk<G: Fn(f64, &[f64]) -> f64>(
    g: G,
    data: &DensityDataset,
    breakpoints: &[f64],
) -> f64 {
    let n = data.len() as f64;
    data.us
        .iter()
        .zip(&data.ws)
        .map(|(&u, w)| log_normalizer(&g, w, breakpoints) - g(u, w))
        .sum::<f64>()
        / n
}

/// Least-squares objective over basis coefficients: `mean((X beta - y)^2)`.
pub struct SquaredErrorOracle {
    design: SparseDesign,
    ys: Vec<f64>,
}

impl SquaredErrorOracle {
    pub fn new(basis: &BasisSet, points: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if points.len() != ys.len() {
            return Err(HalError::DimensionMismatch {
                expected: points.len(),
                actual: ys.len(),
            });
        }
        Ok(SquaredErrorOracle {
            design: design_matrix(basis, points)?,
            ys: ys.to_vec(),
        })
    }
}

impl ObjectiveOracle for SquaredErrorOracle {
    fn dimension(&self) -> usize {
        self.design.n_cols
    }

    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.design.n_rows as f64;
        let mut resid = self.design.matvec(beta);
        let mut value = 0.0;
        for (r, &y) in resid.iter_mut().zip(&self.ys) {
            *r -= y;
            value += *r * *r;
        }
        let gt = self.design.rmatvec(&resid);
        for (g, v) in grad.iter_mut().zip(gt) {
            *g = 2.0 * v / n;
        }
        value / n
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let n = self.design.n_rows as f64;
        let preds = self.design.matvec(beta);
        preds
            .iter()
            .zip(&self.ys)
            .map(|(p, &y)| (p - y) * (p - y))
            .sum::<f64>()
            / n
    }
}

/// Person-period survival objective over basis coefficients.
///
/// Exposure rows are evaluated at interval left endpoints, event terms at
/// the subject's observed time; both live in the same basis.
pub struct PoissonLossOracle {
    design_eval: PrefixDesign,
    lengths: Vec<f64>,
    event_colsum: Vec<f64>,
    n_subjects: usize,
}

impl PoissonLossOracle {
    pub fn new(basis: &BasisSet, table: &PersonPeriodTable) -> Result<Self> {
        // Rows arrive subject-major with ascending interval endpoints, so the
        // design can be stored by column activation instead of row by row.
        let mut groups: Vec<(&[f64], Vec<f64>)> = Vec::new();
        let mut last_subject = usize::MAX;
        for row in &table.rows {
            if row.subject != last_subject {
                groups.push((row.w.as_slice(), Vec::new()));
                last_subject = row.subject;
            }
            groups.last_mut().unwrap().1.push(row.eval_time);
        }
        let group_views: Vec<(&[f64], &[f64])> = groups
            .iter()
            .map(|(w, us)| (*w, us.as_slice()))
            .collect();
        let design_eval = PrefixDesign::build(basis, &group_views)?;
        let event_points: Vec<Vec<f64>> = table
            .rows
            .iter()
            .filter(|r| r.event)
            .map(|r| {
                let mut p = Vec::with_capacity(1 + r.w.len());
                p.push(r.event_time);
                p.extend_from_slice(&r.w);
                p
            })
            .collect();
        let mut event_colsum = vec![0.0; basis.column_count()];
        if !event_points.is_empty() {
            let design_event = design_matrix(basis, &event_points)?;
            for row in &design_event.rows {
                for &k in row {
                    event_colsum[k as usize] += 1.0;
                }
            }
        }
        Ok(PoissonLossOracle {
            design_eval,
            lengths: table.rows.iter().map(|r| r.length).collect(),
            event_colsum,
            n_subjects: table.n_subjects,
        })
    }
}

impl ObjectiveOracle for PoissonLossOracle {
    fn dimension(&self) -> usize {
        self.design_eval.n_cols
    }

    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n_subjects as f64;
        let mut weights = self.design_eval.forward(beta);
        let mut value = 0.0;
        for (wv, &len) in weights.iter_mut().zip(&self.lengths) {
            *wv = len * wv.exp();
            value += *wv;
        }
        let gt = self.design_eval.adjoint(&weights);
        for ((g, v), &e) in grad.iter_mut().zip(gt).zip(&self.event_colsum) {
            *g = (v - e) / n;
        }
        let event_term: f64 = self
            .event_colsum
            .iter()
            .zip(beta)
            .map(|(e, b)| e * b)
            .sum();
        (value - event_term) / n
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let n = self.n_subjects as f64;
        let fitted = self.design_eval.forward(beta);
        let exposure: f64 = fitted
            .iter()
            .zip(&self.lengths)
            .map(|(f, &len)| len * f.exp())
            .sum();
        let event_term: f64 = self
            .event_colsum
            .iter()
            .zip(beta)
            .map(|(e, b)| e * b)
            .sum();
        (exposure - event_term) / n
    }
}

/// Conditional-density objective over basis coefficients: mean exact log
/// normalizer minus the fitted value at each observation.
pub struct DensityLossOracle {
    /// Design rows at (interval left endpoint, w_i), i-major.
    design_grid: PrefixDesign,
    log_lengths: Vec<f64>,
    obs_colsum: Vec<f64>,
    n_obs: usize,
    n_int: usize,
}

impl DensityLossOracle {
    pub fn new(basis: &BasisSet, data: &DensityDataset) -> Result<Self> {
        let mut cuts: Vec<f64> = data.us.iter().copied().filter(|&u| u > 0.0 && u < 1.0).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut lefts = Vec::with_capacity(cuts.len() + 1);
        let mut log_lengths = Vec::with_capacity(cuts.len() + 1);
        let mut left = 0.0;
        for &right in cuts.iter().chain(std::iter::once(&1.0)) {
            if right > left {
                lefts.push(left);
                log_lengths.push((right - left).ln());
            }
            left = right;
        }
        let n_int = lefts.len();

        let groups: Vec<(&[f64], &[f64])> = data
            .ws
            .iter()
            .map(|w| (w.as_slice(), lefts.as_slice()))
            .collect();
        let design_grid = PrefixDesign::build(basis, &groups)?;

        let obs_points: Vec<Vec<f64>> = data
            .us
            .iter()
            .zip(&data.ws)
            .map(|(&u, w)| {
                let mut p = Vec::with_capacity(1 + w.len());
                p.push(u);
                p.extend_from_slice(w);
                p
            })
            .collect();
        let design_obs = design_matrix(basis, &obs_points)?;
        let mut obs_colsum = vec![0.0; basis.column_count()];
        for row in &design_obs.rows {
            for &k in row {
                obs_colsum[k as usize] += 1.0;
            }
        }
        Ok(DensityLossOracle {
            design_grid,
            log_lengths,
            obs_colsum,
            n_obs: data.len(),
            n_int,
        })
    }
}

impl ObjectiveOracle for DensityLossOracle {
    fn dimension(&self) -> usize {
        self.design_grid.n_cols
    }

    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n_obs as f64;
        let g_all = self.design_grid.forward(beta);
        let mut weights = vec![0.0; g_all.len()];
        let mut value = 0.0;
        for i in 0..self.n_obs {
            let base = i * self.n_int;
            let mut m = f64::NEG_INFINITY;
            for j in 0..self.n_int {
                let t = self.log_lengths[j] + g_all[base + j];
                weights[base + j] = t;
                m = m.max(t);
            }
            let mut z = 0.0;
            for j in 0..self.n_int {
                let e = (weights[base + j] - m).exp();
                weights[base + j] = e;
                z += e;
            }
            value += m + z.ln();
            for j in 0..self.n_int {
                weights[base + j] /= z;
            }
        }
        let gt = self.design_grid.adjoint(&weights);
        for ((g, v), &o) in grad.iter_mut().zip(gt).zip(&self.obs_colsum) {
            *g = (v - o) / n;
        }
        let obs_term: f64 = self.obs_colsum.iter().zip(beta).map(|(o, b)| o * b).sum();
        (value - obs_term) / n
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let n = self.n_obs as f64;
        let g_all = self.design_grid.forward(beta);
        let mut value = 0.0;
        for i in 0..self.n_obs {
            let base = i * self.n_int;
            let terms: Vec<f64> = (0..self.n_int)
                .map(|j| self.log_lengths[j] + g_all[base + j])
                .collect();
            value += log_sum_exp(&terms);
        }
        let obs_term: f64 = self.obs_colsum.iter().zip(beta).map(|(o, b)| o * b).sum();
        (value - obs_term) / n
    }
}
