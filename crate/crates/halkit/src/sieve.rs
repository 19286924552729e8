//! L2(Lebesgue) projection onto the indicator sieve and the explicit sieve
//! element built from section derivatives.
//!
//! Projection never touches data beyond the basis: the quadratic objective
//! uses the closed-form Gram matrix, and target moments are supplied exactly
//! for the shipped targets or estimated by low-discrepancy quadrature for
//! arbitrary evaluators. The sieve element is a direct construction: one
//! coefficient per (section, data point), merged additively on collisions.

use crate::basis::{build_basis, BasisFunction, BasisSet, DomainTransform, HalModel};
use crate::error::{HalError, Result};
use crate::qmc::sobol_points;
use crate::solver::{minimize_l1ball, ObjectiveOracle, SolveOptions, SolveReport};

/// Columns beyond this make the dense Gram matrix unreasonable at desk scale.
const MAX_PROJECTION_COLUMNS: usize = 4096;
/// Low-discrepancy points used when moments must be estimated.
const QMC_POINTS: usize = 1 << 14;

/// An L2 projection onto the sieve: the model, the solve certificate, and
/// the achieved L2 distance to the target.
#[derive(Debug, Clone)]
pub struct Projection {
    pub model: HalModel,
    pub report: SolveReport,
    pub l2_error: f64,
}

struct QuadraticOracle {
    gram: Vec<f64>,
    moments: Vec<f64>,
}

impl ObjectiveOracle for QuadraticOracle {
    fn dimension(&self) -> usize {
        self.moments.len()
    }

    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let p = beta.len();
        let mut value = 0.0;
        for a in 0..p {
            let mut gb = 0.0;
            for b in 0..p {
                gb += self.gram[a * p + b] * beta[b];
            }
            value += beta[a] * gb - 2.0 * beta[a] * self.moments[a];
            grad[a] = 2.0 * (gb - self.moments[a]);
        }
        value
    }
}

/// Project a target onto the sieve spanned by `basis` inside the l1 ball of
/// radius `m`, given the exact target moments `∫ h_k f dλ` per column (in
/// column order, intercept first when present) and `∫ f² dλ`.
pub fn project_l2_moments(
    basis: BasisSet,
    moments: &[f64],
    square_integral: f64,
    m: f64,
    opts: &SolveOptions,
) -> Result<Projection> {
    let p = basis.column_count();
    if p > MAX_PROJECTION_COLUMNS {
        return Err(HalError::TooLarge(format!(
            "projection is dense in the basis; {p} columns exceeds {MAX_PROJECTION_COLUMNS}"
        )));
    }
    if moments.len() != p {
        return Err(HalError::DimensionMismatch { expected: p, actual: moments.len() });
    }
    if moments.iter().any(|v| !v.is_finite()) || !square_integral.is_finite() {
        return Err(HalError::InvalidArgument("non-finite target moments".into()));
    }
    let oracle = QuadraticOracle { gram: basis.gram_matrix(), moments: moments.to_vec() };
    let (beta, report) = minimize_l1ball(&oracle, m, opts)?;
    let l2_error = (report.objective + square_integral).max(0.0).sqrt();
    let d = basis.d;
    let model = HalModel::new(basis, beta, m, DomainTransform::identity(d))?;
    Ok(Projection { model, report, l2_error })
}

/// Project an arbitrary integrable evaluator onto the sieve; moments and the
/// target's squared integral are estimated on a fixed low-discrepancy point
/// set, so repeated calls are deterministic.
pub fn project_l2_evaluator<F: Fn(&[f64]) -> f64>(
    basis: BasisSet,
    target: F,
    m: f64,
    opts: &SolveOptions,
) -> Result<Projection> {
    let pts = sobol_points(QMC_POINTS, basis.d)?;
    let mut moments = vec![0.0; basis.column_count()];
    let mut square_integral = 0.0;
    for x in &pts {
        let fx = target(x);
        if !fx.is_finite() {
            return Err(HalError::InvalidArgument(format!(
                "target evaluator returned {fx} at {x:?}"
            )));
        }
        square_integral += fx * fx;
        let cols = basis.columns_at(x);
        for (mk, ck) in moments.iter_mut().zip(cols) {
            *mk += ck * fx;
        }
    }
    let n = pts.len() as f64;
    for mk in &mut moments {
        *mk /= n;
    }
    square_integral /= n;
    project_l2_moments(basis, &moments, square_integral, m, opts)
}

/// Exact moments of the product target `f(x) = x_1 ··· x_d` against every
/// basis column, plus `∫ f² dλ`.
pub fn product_target_moments(basis: &BasisSet) -> (Vec<f64>, f64) {
    let d = basis.d as i32;
    let mut moments = Vec::with_capacity(basis.column_count());
    if basis.has_intercept {
        moments.push(0.5f64.powi(d));
    }
    for f in &basis.functions {
        let mut v = 0.5f64.powi(d - f.section.len() as i32);
        for &k in &f.knot {
            v *= (1.0 - k * k) / 2.0;
        }
        moments.push(v);
    }
    (moments, 3.0f64.powi(-d))
}

/// Exact moments of the step target `f(x) = 1{x ⪰ t}` against every basis
/// column, plus `∫ f² dλ`.
pub fn step_target_moments(basis: &BasisSet, t: &[f64]) -> Result<(Vec<f64>, f64)> {
    if t.len() != basis.d {
        return Err(HalError::DimensionMismatch { expected: basis.d, actual: t.len() });
    }
    if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(HalError::InvalidArgument("step knot outside the unit cube".into()));
    }
    let tail: f64 = t.iter().map(|&v| 1.0 - v).product();
    let mut moments = Vec::with_capacity(basis.column_count());
    if basis.has_intercept {
        moments.push(tail);
    }
    for f in &basis.functions {
        let mut v = 1.0;
        let mut covered = vec![false; basis.d];
        for (&j, &k) in f.section.iter().zip(&f.knot) {
            v *= 1.0 - k.max(t[j]);
            covered[j] = true;
        }
        for (j, &c) in covered.iter().enumerate() {
            if !c {
                v *= 1.0 - t[j];
            }
        }
        moments.push(v);
    }
    Ok((moments, tail))
}

/// Build the explicit sieve element from data: intercept `f_star_at_zero`
/// and, for every nonempty section s and data point i with strictly
/// positive section coordinates, a coefficient `(1/n) · deriv(s, x_s)`.
/// Coefficients landing on the same knot merge additively.
pub fn sieve_element<D: Fn(&[usize], &[f64]) -> f64>(
    points: &[Vec<f64>],
    deriv: D,
    f_star_at_zero: f64,
) -> Result<HalModel> {
    let basis = build_basis(points, true)?;
    let d = basis.d;
    let n = points.len() as f64;
    if !f_star_at_zero.is_finite() {
        return Err(HalError::InvalidArgument("non-finite value at the origin".into()));
    }

    let index: std::collections::HashMap<Vec<(usize, u64)>, usize> = basis
        .functions
        .iter()
        .enumerate()
        .map(|(idx, f)| (exact_key(f), idx))
        .collect();
    let off = basis.offset();
    let mut beta = vec![0.0; basis.column_count()];
    beta[0] = f_star_at_zero;
    for mask in 1u64..(1u64 << d) {
        let section: Vec<usize> = (0..d).filter(|&j| mask >> j & 1 == 1).collect();
        for (i, row) in points.iter().enumerate() {
            let knot: Vec<f64> = section.iter().map(|&j| row[j]).collect();
            if knot.iter().any(|&k| k <= 0.0) {
                continue;
            }
            let v = deriv(&section, &knot);
            if !v.is_finite() {
                return Err(HalError::BadData {
                    row: i,
                    reason: format!("non-finite derivative {v} on section {section:?}"),
                });
            }
            let f = BasisFunction::new(section.clone(), knot)?;
            let idx = index[&exact_key(&f)];
            beta[off + idx] += v / n;
        }
    }
    HalModel::new(basis, beta, f64::INFINITY, DomainTransform::identity(d))
}

/// Key on the literal (section, knot bits) pair. Knots reaching this path
/// have strictly positive coordinates, so it agrees with the dedup key used
/// during basis construction.
fn exact_key(f: &BasisFunction) -> Vec<(usize, u64)> {
    f.section
        .iter()
        .zip(&f.knot)
        .map(|(&j, &k)| (j, k.to_bits()))
        .collect()
}

/// Largest absolute difference between the model and a reference over a
/// probe grid.
pub fn sup_error<F: Fn(&[f64]) -> f64>(
    model: &HalModel,
    reference: F,
    grid: &[Vec<f64>],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(HalError::InvalidArgument("empty probe grid".into()));
    }
    let mut worst = 0.0f64;
    for x in grid {
        worst = worst.max((model.evaluate(x) - reference(x)).abs());
    }
    Ok(worst)
}

/// L2(Lebesgue) distance between a model and a reference, on the same fixed
/// low-discrepancy point set as the projection moments, so paired
/// comparisons share their quadrature noise.
pub fn l2_error_qmc<F: Fn(&[f64]) -> f64>(model: &HalModel, reference: F) -> Result<f64> {
    let pts = sobol_points(QMC_POINTS, model.d())?;
    let mut total = 0.0;
    for x in &pts {
        let diff = model.evaluate(x) - reference(x);
        total += diff * diff;
    }
    Ok((total / pts.len() as f64).sqrt())
}
