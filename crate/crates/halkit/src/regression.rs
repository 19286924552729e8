//! Squared-error regression and basis-size accounting.
//!
//! Fitting is the generic l1-ball solve over the indicator basis. The
//! counting functions compare the basis this crate uses, which grows
//! linearly in the sample, against the coordinatewise-maxima lattice an
//! unrestricted empirical risk minimizer would need, which can grow much
//! faster.

use std::collections::HashSet;

use crate::basis::{build_basis, check_rect, DomainTransform, HalModel};
use crate::error::{HalError, Result};
use crate::losses::{RegressionDataset, SquaredErrorOracle};
use crate::solver::{minimize_l1ball, SolveOptions, SolveReport};

/// A fitted regression surface.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub model: HalModel,
}

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.model.evaluate(x)
    }
}

/// Fit a regression function by least squares over the l1 ball of radius
/// `norm_budget`, with basis knots at the observed covariate points.
pub fn fit_regression(
    data: &RegressionDataset,
    norm_budget: f64,
    opts: &SolveOptions,
) -> Result<(RegressionModel, SolveReport)> {
    let transform = DomainTransform::from_data(&data.xs)?;
    let unit_points: Vec<Vec<f64>> = data.xs.iter().map(|p| transform.apply(p)).collect();
    let basis = build_basis(&unit_points, true)?;
    let oracle = SquaredErrorOracle::new(&basis, &unit_points, &data.ys)?;
    let (beta, report) = minimize_l1ball(&oracle, norm_budget, opts)?;
    let model = HalModel::new(basis, beta, norm_budget, transform)?;
    Ok((RegressionModel { model }, report))
}

/// Number of basis columns this crate builds for a sample of size `n` in
/// dimension `d` before deduplication: one indicator per point and section,
/// plus the intercept.
pub fn hal_basis_count(n: u64, d: u32) -> Result<u64> {
    if n == 0 || d == 0 {
        return Err(HalError::InvalidArgument(
            "basis count needs n >= 1 and d >= 1".into(),
        ));
    }
    let sections = 1u64
        .checked_shl(d)
        .and_then(|p| p.checked_sub(1))
        .ok_or_else(|| HalError::TooLarge(format!("2^{d} sections overflow")))?;
    n.checked_mul(sections)
        .and_then(|c| c.checked_add(1))
        .ok_or_else(|| HalError::TooLarge(format!("basis count overflows at n={n}, d={d}")))
}

const ERM_MAX_POINTS: usize = 5000;
const ERM_MAX_DIM: usize = 4;
const ERM_MAX_LATTICE: usize = 10_000_000;

/// Size of the coordinatewise-maxima lattice generated by the points: the
/// number of distinct componentwise maxima over nonempty subsets. This is
/// how many knots an unrestricted least-squares minimizer may need.
/// Duplicate points are collapsed before counting.
pub fn erm_basis_count(points: &[Vec<f64>]) -> Result<u64> {
    let d = check_rect(points)?;
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for p in points {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(HalError::InvalidArgument("non-finite point".into()));
        }
        if seen.insert(p.iter().map(|v| v.to_bits()).collect()) {
            distinct.push(p.clone());
        }
    }
    if distinct.len() > ERM_MAX_POINTS || d > ERM_MAX_DIM {
        return Err(HalError::TooLarge(format!(
            "lattice count supports up to {ERM_MAX_POINTS} distinct points in dimension {ERM_MAX_DIM}, got n={}, d={d}",
            distinct.len()
        )));
    }
    match d {
        1 => Ok(distinct.len() as u64),
        2 => Ok(erm_count_planar(&distinct)),
        _ => erm_count_join_closure(&distinct),
    }
}

/// Planar case: a grid point (a, b) over observed coordinate values belongs
/// to the lattice exactly when some point has first coordinate a and second
/// at most b, and some point has second coordinate b and first at most a.
fn erm_count_planar(points: &[Vec<f64>]) -> u64 {
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut min_y_at = vec![f64::INFINITY; xs.len()];
    let mut min_x_at = vec![f64::INFINITY; ys.len()];
    for p in points {
        let a = xs.partition_point(|&v| v < p[0]);
        let b = ys.partition_point(|&v| v < p[1]);
        min_y_at[a] = min_y_at[a].min(p[1]);
        min_x_at[b] = min_x_at[b].min(p[0]);
    }
    let mut count = 0u64;
    for (a, &x) in xs.iter().enumerate() {
        for (b, &y) in ys.iter().enumerate() {
            if min_y_at[a] <= y && min_x_at[b] <= x {
                count += 1;
            }
        }
    }
    count
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x.max(y)).collect()
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

/// General case: close the point set under pairwise componentwise maxima.
/// Every subset maximum is reachable through single-point joins, so the
/// fixpoint of joining lattice elements with data points is the full
/// lattice.
fn erm_count_join_closure(points: &[Vec<f64>]) -> Result<u64> {
    let mut lattice: HashSet<Vec<u64>> = points.iter().map(|p| key(p)).collect();
    let mut frontier: Vec<Vec<f64>> = points.to_vec();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for z in &frontier {
            for p in points {
                let j = join(z, p);
                if lattice.insert(key(&j)) {
                    next.push(j);
                }
                if lattice.len() > ERM_MAX_LATTICE {
                    return Err(HalError::TooLarge(format!(
                        "lattice exceeds {ERM_MAX_LATTICE} elements"
                    )));
                }
            }
        }
        frontier = next;
    }
    Ok(lattice.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ObjectiveOracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn formula_count_matches_worked_values() {
        assert_eq!(hal_basis_count(200, 2).unwrap(), 601);
        assert_eq!(hal_basis_count(1, 3).unwrap(), 8);
        assert_eq!(hal_basis_count(256, 3).unwrap(), 1793);
        assert!(hal_basis_count(0, 2).is_err());
        assert!(hal_basis_count(u64::MAX, 3).is_err());
    }

    #[test]
    fn lattice_count_matches_worked_values() {
        assert_eq!(erm_basis_count(&[vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap(), 3);
        assert_eq!(erm_basis_count(&[vec![0.3, 0.4, 0.5]]).unwrap(), 1);
        let chain: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 10.0]).collect();
        assert_eq!(erm_basis_count(&chain).unwrap(), 7);
    }

    #[test]
    fn oversize_inputs_are_rejected() {
        let many: Vec<Vec<f64>> = (0..5001).map(|i| vec![i as f64, -(i as f64)]).collect();
        assert!(matches!(erm_basis_count(&many), Err(HalError::TooLarge(_))));
        let wide = vec![vec![0.1; 5]];
        assert!(matches!(erm_basis_count(&wide), Err(HalError::TooLarge(_))));
    }

    /// Enumerate every nonempty subset and collect componentwise maxima.
    fn brute_force_count(points: &[Vec<f64>]) -> u64 {
        let n = points.len();
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        for mask in 1usize..(1 << n) {
            let mut z = vec![f64::NEG_INFINITY; points[0].len()];
            for (i, p) in points.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    for (zj, &pj) in z.iter_mut().zip(p) {
                        *zj = zj.max(pj);
                    }
                }
            }
            seen.insert(key(&z));
        }
        seen.len() as u64
    }

    #[test]
    fn lattice_count_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        for d in 2..=4usize {
            for n in 1..=12usize {
                for _ in 0..8 {
                    // draw from a coarse grid so ties and zeros occur
                    let pts: Vec<Vec<f64>> = (0..n)
                        .map(|_| (0..d).map(|_| levels[rng.random_range(0..5)]).collect())
                        .collect();
                    let fast = erm_basis_count(&pts).unwrap();
                    // collapse duplicates for the brute force too
                    let mut distinct: Vec<Vec<f64>> = Vec::new();
                    let mut seen = HashSet::new();
                    for p in &pts {
                        if seen.insert(key(p)) {
                            distinct.push(p.clone());
                        }
                    }
                    let slow = brute_force_count(&distinct);
                    assert_eq!(fast, slow, "d={d} pts={pts:?}");
                }
            }
        }
    }

    #[test]
    fn lattice_count_is_monotone_in_the_data_and_at_least_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for d in 2..=3usize {
            let pts: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let mut prev = 0;
            for n in 1..=40 {
                let c = erm_basis_count(&pts[..n]).unwrap();
                assert!(c >= prev, "d={d} n={n}");
                assert!(c >= n as u64, "each point is its own subset maximum");
                prev = c;
            }
        }
    }

    #[test]
    fn duplicated_data_leaves_the_count_unchanged() {
        let pts = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.8, 0.2]];
        let mut doubled = pts.clone();
        doubled.extend(pts.iter().cloned());
        assert_eq!(
            erm_basis_count(&pts).unwrap(),
            erm_basis_count(&doubled).unwrap()
        );
    }

    #[test]
    fn constant_response_is_fit_exactly_when_the_budget_allows() {
        let data = RegressionDataset::new(
            vec![vec![0.1, 0.5], vec![0.6, 0.2], vec![0.9, 0.9]],
            vec![0.7, 0.7, 0.7],
        )
        .unwrap();
        let (_, report) = fit_regression(&data, 1.0, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.objective < 1e-9, "{}", report.objective);
    }

    #[test]
    fn zero_budget_risk_is_the_mean_squared_response() {
        let data = RegressionDataset::new(
            vec![vec![0.1], vec![0.4], vec![0.8]],
            vec![1.0, -2.0, 0.5],
        )
        .unwrap();
        let (model, report) = fit_regression(&data, 0.0, &SolveOptions::default()).unwrap();
        let expect = (1.0 + 4.0 + 0.25) / 3.0;
        assert!((report.objective - expect).abs() < 1e-15);
        assert_eq!(model.predict(&[0.5]), 0.0);
    }

    #[test]
    fn small_fit_beats_a_dense_grid_over_the_ball() {
        let data = RegressionDataset::new(
            vec![vec![0.2], vec![0.5], vec![0.9]],
            vec![0.4, -0.3, 0.6],
        )
        .unwrap();
        let (_, report) = fit_regression(&data, 1.0, &SolveOptions::default()).unwrap();
        let basis = build_basis(&data.xs, true).unwrap();
        let oracle = SquaredErrorOracle::new(&basis, &data.xs, &data.ys).unwrap();
        assert_eq!(basis.column_count(), 4);

        let mut best = f64::INFINITY;
        let mut best_b = [0.0; 4];
        let scan = |center: [f64; 4], radius: f64, step: f64, best: &mut f64, best_b: &mut [f64; 4]| {
            let counts = (2.0 * radius / step).round() as i64;
            let mut b = [0.0; 4];
            for i0 in 0..=counts {
                b[0] = center[0] - radius + i0 as f64 * step;
                for i1 in 0..=counts {
                    b[1] = center[1] - radius + i1 as f64 * step;
                    if b[0].abs() + b[1].abs() > 1.0 {
                        continue;
                    }
                    for i2 in 0..=counts {
                        b[2] = center[2] - radius + i2 as f64 * step;
                        if b[0].abs() + b[1].abs() + b[2].abs() > 1.0 {
                            continue;
                        }
                        for i3 in 0..=counts {
                            b[3] = center[3] - radius + i3 as f64 * step;
                            if b.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 {
                                let v = oracle.value(&b);
                                if v < *best {
                                    *best = v;
                                    *best_b = b;
                                }
                            }
                        }
                    }
                }
            }
        };
        scan([0.0; 4], 1.0, 0.05, &mut best, &mut best_b);
        let c = best_b;
        scan(c, 0.05, 0.005, &mut best, &mut best_b);
        assert!(
            report.objective <= best + 1e-6,
            "solver {} vs grid {best}",
            report.objective
        );
    }
}
