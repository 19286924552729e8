//! Conditional-hazard estimation under right censoring on the unit horizon.
//!
//! The fitted object is a log-hazard surface, piecewise constant in time and
//! covariates, obtained by minimizing the person-period form of the survival
//! risk over an l1 ball of basis coefficients. Everything downstream of the
//! fit is exact arithmetic on step functions: cumulative hazards, survival
//! curves, the induced subdensity, and the exact l2 distances used to compare
//! step hazards through their survival and density transforms.

use crate::basis::{build_basis, DomainTransform, HalModel, PiecewiseConstantFn};
use crate::error::{HalError, Result};
use crate::losses::{
    expand_person_period, pl_risk, HazardSurface, PoissonLossOracle, SurvivalDataset, SurvivalRow,
};
use crate::solver::{minimize_l1ball, SolveOptions, SolveReport};

/// A fitted log-hazard surface over (time, covariates).
#[derive(Debug, Clone)]
pub struct HazardModel {
    pub model: HalModel,
}

impl HazardSurface for HazardModel {
    fn log_hazard(&self, t: f64, w: &[f64]) -> f64 {
        let mut p = Vec::with_capacity(1 + w.len());
        p.push(t);
        p.extend_from_slice(w);
        self.model.evaluate(&p)
    }

    fn time_breakpoints(&self) -> Vec<f64> {
        self.model
            .basis
            .knot_values(0)
            .into_iter()
            .filter(|&t| t > 0.0)
            .collect()
    }
}

impl HazardModel {
    /// Wrap a fitted model whose first coordinate is time.
    pub fn new(model: HalModel) -> Result<Self> {
        if model.basis.d == 0 {
            return Err(HalError::InvalidArgument(
                "a hazard model needs at least the time coordinate".into(),
            ));
        }
        Ok(HazardModel { model })
    }

    /// Integrated hazard on [0, t) at fixed covariates, exact for the step
    /// surface.
    pub fn cumulative_hazard(&self, t: f64, w: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut left = 0.0;
        for right in self.time_breakpoints() {
            if left >= t {
                break;
            }
            total += (right.min(t) - left) * self.log_hazard(left, w).exp();
            left = right;
        }
        if left < t {
            total += (t - left) * self.log_hazard(left, w).exp();
        }
        total
    }

    pub fn survival(&self, t: f64, w: &[f64]) -> f64 {
        (-self.cumulative_hazard(t, w)).exp()
    }

    pub fn survival_curve(&self, w: &[f64], ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.survival(t, w)).collect()
    }

    /// Subdensity of the event time induced by the hazard: hazard times
    /// survival. Its integral over [0,1] plus [`Self::deficiency`] is one.
    pub fn density(&self, t: f64, w: &[f64]) -> f64 {
        self.log_hazard(t, w).exp() * self.survival(t, w)
    }

    /// Mass the model leaves beyond the horizon: the survival at time one.
    pub fn deficiency(&self, w: &[f64]) -> f64 {
        self.survival(1.0, w)
    }

    /// The fitted log-hazard as a plain step function in time. Only defined
    /// for covariate-free fits.
    pub fn to_step_fn(&self) -> Result<PiecewiseConstantFn> {
        self.model.to_step_fn()
    }
}

/// Fit a log-hazard surface by empirical risk minimization over the l1 ball
/// of radius `norm_budget`, with basis knots at the observed (time,
/// covariate) points.
pub fn fit_hazard(
    data: &SurvivalDataset,
    norm_budget: f64,
    opts: &SolveOptions,
) -> Result<(HazardModel, SolveReport)> {
    let points: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| {
            let mut p = Vec::with_capacity(1 + r.w.len());
            p.push(r.time);
            p.extend_from_slice(&r.w);
            p
        })
        .collect();
    let transform = DomainTransform::from_data(&points)?;
    let unit_points: Vec<Vec<f64>> = points.iter().map(|p| transform.apply(p)).collect();
    let unit_rows: Vec<SurvivalRow> = data
        .rows
        .iter()
        .zip(&unit_points)
        .map(|(r, p)| SurvivalRow {
            w: p[1..].to_vec(),
            time: r.time,
            status: r.status,
        })
        .collect();
    let unit_data = SurvivalDataset::new(unit_rows)?;
    let basis = build_basis(&unit_points, true)?;
    let table = expand_person_period(&unit_data);
    let oracle = PoissonLossOracle::new(&basis, &table)?;
    let (beta, report) = minimize_l1ball(&oracle, norm_budget, opts)?;
    let model = HalModel::new(basis, beta, norm_budget, transform)?;
    Ok((HazardModel { model }, report))
}

/// One risk-reducing modification of a covariate-free step log-hazard.
#[derive(Debug, Clone)]
pub struct RiskImprovement {
    pub improved: PiecewiseConstantFn,
    pub original_risk: f64,
    pub improved_risk: f64,
    /// The flattened stretch of the time axis.
    pub interval: (f64, f64),
}

/// Search for a strict empirical-risk improvement of a step log-hazard that
/// does not increase its variation norm.
///
/// Scans consecutive unique observed times for the first pair where the
/// function decreases, then flattens most of the gap between them down to
/// the function's minimum over the closed gap. No observed time lies in the
/// modified stretch, so event terms are untouched while exposure strictly
/// shrinks. Returns `None` when the function is nondecreasing across every
/// consecutive pair.
pub fn improve_risk_counterexample(
    f: &PiecewiseConstantFn,
    data: &SurvivalDataset,
) -> Result<Option<RiskImprovement>> {
    if data.w_dim() != 0 {
        return Err(HalError::InvalidArgument(
            "risk-improvement construction applies to covariate-free hazards".into(),
        ));
    }
    let times = data.unique_times();
    for pair in times.windows(2) {
        let (lo_t, hi_t) = (pair[0], pair[1]);
        if f.value(lo_t) <= f.value(hi_t) {
            continue;
        }
        // minimum over the closed interval: left endpoints of every piece
        // meeting it, plus the right endpoint itself
        let mut v = f.value(lo_t).min(f.value(hi_t));
        for &b in &f.breakpoints {
            if b > lo_t && b <= hi_t {
                v = v.min(f.value(b));
            }
        }
        let first_break = f
            .breakpoints
            .iter()
            .copied()
            .find(|&b| b > lo_t && b < hi_t);
        let eps = match first_break {
            Some(b) => (b - lo_t) / 2.0,
            None => (hi_t - lo_t) / 2.0,
        };
        let start = lo_t + eps;
        let g = flatten_interval(f, start, hi_t, v)?;
        let original_risk = pl_risk(f, data);
        let improved_risk = pl_risk(&g, data);
        return Ok(Some(RiskImprovement {
            improved: g,
            original_risk,
            improved_risk,
            interval: (start, hi_t),
        }));
    }
    Ok(None)
}

/// Replace `f` with the constant `v` on [start, end), consolidating equal
/// neighboring pieces.
fn flatten_interval(
    f: &PiecewiseConstantFn,
    start: f64,
    end: f64,
    v: f64,
) -> Result<PiecewiseConstantFn> {
    let mut cuts: Vec<f64> = f
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| b < start || b >= end)
        .collect();
    cuts.push(start);
    if end < 1.0 || f.breakpoints.contains(&end) {
        cuts.push(end);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let g_at = |t: f64| if t >= start && t < end { v } else { f.value(t) };
    let mut breaks = Vec::new();
    let mut values = vec![g_at(0.0)];
    for &b in &cuts {
        let val = g_at(b);
        if val != *values.last().unwrap() {
            breaks.push(b);
            values.push(val);
        }
    }
    PiecewiseConstantFn::new(breaks, values)
}

/// Exact l2 distance between two step hazard-rate functions on [0,1].
pub fn hazard_l2_distance(a: &PiecewiseConstantFn, b: &PiecewiseConstantFn) -> f64 {
    let mut total = 0.0;
    let mut left = 0.0;
    for right in merged_cuts(a, b) {
        let diff = a.value(left) - b.value(left);
        total += (right - left) * diff * diff;
        left = right;
    }
    total.sqrt()
}

/// Exact l2 distance between the survival functions of two step hazards.
pub fn survival_l2_distance(a: &PiecewiseConstantFn, b: &PiecewiseConstantFn) -> f64 {
    paired_exponential_l2(a, b, false)
}

/// Exact l2 distance between the event-time densities of two step hazards.
pub fn density_l2_distance(a: &PiecewiseConstantFn, b: &PiecewiseConstantFn) -> f64 {
    paired_exponential_l2(a, b, true)
}

fn merged_cuts(a: &PiecewiseConstantFn, b: &PiecewiseConstantFn) -> Vec<f64> {
    let mut cuts: Vec<f64> = a
        .breakpoints
        .iter()
        .chain(&b.breakpoints)
        .copied()
        .filter(|&t| t < 1.0)
        .collect();
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Integral of exp(-r s) over [0, len], stable near r = 0.
fn exp_integral(r: f64, len: f64) -> f64 {
    if r == 0.0 {
        len
    } else {
        -f64::exp_m1(-r * len) / r
    }
}

/// l2 distance between exp(-Lambda_a) and exp(-Lambda_b), optionally with
/// the rates multiplied in, computed interval by interval in closed form.
fn paired_exponential_l2(a: &PiecewiseConstantFn, b: &PiecewiseConstantFn, with_rates: bool) -> f64 {
    let mut total = 0.0;
    let mut cum_a = 0.0f64;
    let mut cum_b = 0.0f64;
    let mut left = 0.0;
    for right in merged_cuts(a, b) {
        let len = right - left;
        let ra = a.value(left);
        let rb = b.value(left);
        let (ca, cb) = if with_rates { (ra, rb) } else { (1.0, 1.0) };
        let sa = (-cum_a).exp();
        let sb = (-cum_b).exp();
        total += ca * ca * sa * sa * exp_integral(2.0 * ra, len);
        total -= 2.0 * ca * cb * sa * sb * exp_integral(ra + rb, len);
        total += cb * cb * sb * sb * exp_integral(2.0 * rb, len);
        cum_a += ra * len;
        cum_b += rb * len;
        left = right;
    }
    total.max(0.0).sqrt()
}
