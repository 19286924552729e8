//! Indicator bases over the unit cube, fitted models, and variation norms.
//!
//! A model here is a linear combination of zero-order tensor indicators
//! `1{knot <= x}` restricted to a section (a nonempty subset of coordinates),
//! plus an optional intercept. Knots come from observed data points, one
//! candidate column per (section, point) pair. The L1 norm of the coefficient
//! vector equals the sectional variation norm of the fitted function, which is
//! what makes the L1 budget of the solver a variation budget on the function.

use crate::error::{HalError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Largest dimension for which enumerating all 2^d - 1 sections is sane.
const MAX_SECTION_DIM: usize = 20;

/// Per-axis cell cap for the brute-force variation oracle at d >= 3.
const MAX_ORACLE_CELLS_PER_AXIS: usize = 12;

/// Per-coordinate affine map taking raw data into the unit cube.
///
/// Coordinates already inside [0,1] keep the identity map (min 0, max 1).
/// Applying the transform always ends with a clip into [0,1], so prediction
/// points outside the training hull are pinned to the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTransform {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl DomainTransform {
    pub fn identity(d: usize) -> Self {
        DomainTransform {
            mins: vec![0.0; d],
            maxs: vec![1.0; d],
        }
    }

    /// Fit a transform on raw rows: coordinates with values outside [0,1]
    /// get min-max rescaling, in-range coordinates stay untouched.
    pub fn from_data(rows: &[Vec<f64>]) -> Result<Self> {
        let d = check_rect(rows)?;
        let mut t = DomainTransform::identity(d);
        for j in 0..d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (i, row) in rows.iter().enumerate() {
                let v = row[j];
                if !v.is_finite() {
                    return Err(HalError::BadData {
                        row: i,
                        reason: format!("coordinate {j} is not finite"),
                    });
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo < 0.0 || hi > 1.0 {
                t.mins[j] = lo;
                t.maxs[j] = hi;
            }
        }
        Ok(t)
    }

    pub fn is_identity(&self) -> bool {
        self.mins.iter().all(|&m| m == 0.0) && self.maxs.iter().all(|&m| m == 1.0)
    }

    /// Map a raw point into the unit cube and clip.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let den = self.maxs[j] - self.mins[j];
                let u = if den > 0.0 { (v - self.mins[j]) / den } else { 0.0 };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// True if the raw point would land outside [0,1]^d before clipping.
    pub fn clips(&self, x: &[f64]) -> bool {
        x.iter().enumerate().any(|(j, &v)| {
            let den = self.maxs[j] - self.mins[j];
            let u = if den > 0.0 { (v - self.mins[j]) / den } else { 0.0 };
            !(0.0..=1.0).contains(&u)
        })
    }
}

/// One indicator column: `x -> 1{knot <= x_section}` coordinatewise.
///
/// `section` is a sorted list of zero-based coordinate indices; `knot` holds
/// the knot value for each listed coordinate, in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFunction {
    pub section: Vec<usize>,
    pub knot: Vec<f64>,
}

impl BasisFunction {
    pub fn new(section: Vec<usize>, knot: Vec<f64>) -> Result<Self> {
        if section.is_empty() {
            return Err(HalError::InvalidArgument("empty section".into()));
        }
        if section.len() != knot.len() {
            return Err(HalError::DimensionMismatch {
                expected: section.len(),
                actual: knot.len(),
            });
        }
        if section.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HalError::InvalidArgument(
                "section indices must be strictly increasing".into(),
            ));
        }
        for (&j, &k) in section.iter().zip(&knot) {
            if !(0.0..=1.0).contains(&k) {
                return Err(HalError::CoordinateOutOfDomain {
                    row: 0,
                    coord: j,
                    value: k,
                });
            }
        }
        Ok(BasisFunction { section, knot })
    }

    /// Evaluate the indicator at a unit-cube point.
    pub fn indicator(&self, x: &[f64]) -> bool {
        self.section
            .iter()
            .zip(&self.knot)
            .all(|(&j, &k)| k <= x[j])
    }

    /// Key identifying the column up to removal of knot coordinates equal to
    /// zero (an indicator with a zero knot coordinate is constant in that
    /// coordinate, so it coincides with the same column on the smaller
    /// section). An empty key is the constant-one column.
    fn canonical_key(&self) -> Vec<(usize, u64)> {
        self.section
            .iter()
            .zip(&self.knot)
            .filter(|(_, &k)| k != 0.0)
            .map(|(&j, &k)| (j, k.to_bits()))
            .collect()
    }
}

/// An ordered collection of indicator columns with an optional leading
/// intercept. Column 0 is the intercept when present.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub d: usize,
    pub has_intercept: bool,
    pub functions: Vec<BasisFunction>,
}

impl BasisSet {
    pub fn column_count(&self) -> usize {
        self.functions.len() + usize::from(self.has_intercept)
    }

    /// Number of leading columns that are not indicator functions (0 or 1).
    pub fn offset(&self) -> usize {
        usize::from(self.has_intercept)
    }

    /// Evaluate every column at a unit-cube point.
    pub fn columns_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.column_count());
        if self.has_intercept {
            out.push(1.0);
        }
        for f in &self.functions {
            out.push(if f.indicator(x) { 1.0 } else { 0.0 });
        }
        out
    }

    /// Sorted unique knot values appearing in a given coordinate across all
    /// columns whose section contains that coordinate.
    pub fn knot_values(&self, coord: usize) -> Vec<f64> {
        let mut vals: Vec<f64> = self
            .functions
            .iter()
            .flat_map(|f| {
                f.section
                    .iter()
                    .zip(&f.knot)
                    .filter(move |(&j, _)| j == coord)
                    .map(|(_, &k)| k)
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals
    }

    /// Gram matrix of the columns under the Lebesgue measure on the unit
    /// cube, row-major, in column order.
    pub fn gram_matrix(&self) -> Vec<f64> {
        let p = self.column_count();
        let off = self.offset();
        let mut g = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let v = match (a < off, b < off) {
                    (true, true) => 1.0,
                    (true, false) => tail_volume(&self.functions[b - off]),
                    (false, true) => tail_volume(&self.functions[a - off]),
                    (false, false) => {
                        gram_entry(&self.functions[a - off], &self.functions[b - off])
                    }
                };
                g[a * p + b] = v;
                g[b * p + a] = v;
            }
        }
        g
    }
}

/// Lebesgue measure of `{x : knot <= x_section}`, the integral of a single
/// indicator column over the unit cube.
pub fn tail_volume(f: &BasisFunction) -> f64 {
    f.knot.iter().map(|&k| 1.0 - k).product()
}

/// Integral over the unit cube of the product of two indicator columns.
///
/// The product is itself an indicator over the union of the two sections,
/// with the larger knot winning coordinatewise, so the integral is a product
/// of tail lengths.
pub fn gram_entry(a: &BasisFunction, b: &BasisFunction) -> f64 {
    let mut out = 1.0;
    let (mut i, mut j) = (0, 0);
    while i < a.section.len() || j < b.section.len() {
        let ca = a.section.get(i).copied().unwrap_or(usize::MAX);
        let cb = b.section.get(j).copied().unwrap_or(usize::MAX);
        let t = if ca < cb {
            i += 1;
            a.knot[i - 1]
        } else if cb < ca {
            j += 1;
            b.knot[j - 1]
        } else {
            i += 1;
            j += 1;
            a.knot[i - 1].max(b.knot[j - 1])
        };
        out *= 1.0 - t;
    }
    out
}

/// Build the full data-adaptive basis from unit-cube points: one column per
/// (nonempty section, point) pair plus an optional intercept.
///
/// Sections are ordered by ascending binary mask (coordinate j contributes
/// bit j), points in input order within a section. Exact duplicate columns
/// are dropped, keeping the first occurrence; a column whose knot is zero in
/// some coordinate coincides with a lower-section column and is deduplicated
/// against it (and against the intercept when the whole knot is zero).
pub fn build_basis(points: &[Vec<f64>], include_intercept: bool) -> Result<BasisSet> {
    build_basis_masked(points, include_intercept, |_| true)
}

/// Basis construction restricted to section bitmasks accepted by `keep`.
/// Bit j of a mask selects coordinate j.
pub(crate) fn build_basis_masked<K: Fn(u64) -> bool>(
    points: &[Vec<f64>],
    include_intercept: bool,
    keep: K,
) -> Result<BasisSet> {
    let d = check_rect(points)?;
    if d > MAX_SECTION_DIM {
        return Err(HalError::TooLarge(format!(
            "d = {d} would enumerate 2^{d} - 1 sections"
        )));
    }
    for (i, row) in points.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(HalError::CoordinateOutOfDomain {
                    row: i,
                    coord: j,
                    value: v,
                });
            }
        }
    }

    let mut seen: HashSet<Vec<(usize, u64)>> = HashSet::new();
    if include_intercept {
        seen.insert(Vec::new());
    }
    let mut functions = Vec::new();
    for mask in 1u64..(1u64 << d) {
        if !keep(mask) {
            continue;
        }
        let section: Vec<usize> = (0..d).filter(|&j| mask >> j & 1 == 1).collect();
        for row in points {
            let knot: Vec<f64> = section.iter().map(|&j| row[j]).collect();
            let f = BasisFunction { section: section.clone(), knot };
            if seen.insert(f.canonical_key()) {
                functions.push(f);
            }
        }
    }
    Ok(BasisSet {
        d,
        has_intercept: include_intercept,
        functions,
    })
}

/// Binary design matrix stored as sorted active-column indices per row.
#[derive(Debug, Clone)]
pub struct SparseDesign {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<Vec<u32>>,
}

impl SparseDesign {
    /// Per-row dot products with a coefficient vector.
    pub fn matvec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_cols);
        self.rows
            .iter()
            .map(|r| r.iter().map(|&k| beta[k as usize]).sum())
            .collect()
    }

    /// Transpose product: accumulate row weights into columns.
    pub fn rmatvec(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (r, &w) in self.rows.iter().zip(weights) {
            for &k in r {
                out[k as usize] += w;
            }
        }
        out
    }

    pub fn row_dot(&self, row: usize, beta: &[f64]) -> f64 {
        self.rows[row].iter().map(|&k| beta[k as usize]).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut dense = vec![0.0; self.n_cols];
                for &k in r {
                    dense[k as usize] = 1.0;
                }
                dense
            })
            .collect()
    }
}

/// Evaluate every basis column at every unit-cube point.
pub fn design_matrix(basis: &BasisSet, points: &[Vec<f64>]) -> Result<SparseDesign> {
    let d = check_rect(points)?;
    if d != basis.d {
        return Err(HalError::DimensionMismatch {
            expected: basis.d,
            actual: d,
        });
    }
    for (i, row) in points.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(HalError::CoordinateOutOfDomain {
                    row: i,
                    coord: j,
                    value: v,
                });
            }
        }
    }
    let off = basis.offset();
    let rows = points
        .iter()
        .map(|x| {
            let mut active = Vec::new();
            if basis.has_intercept {
                active.push(0u32);
            }
            for (k, f) in basis.functions.iter().enumerate() {
                if f.indicator(x) {
                    active.push((k + off) as u32);
                }
            }
            active
        })
        .collect();
    Ok(SparseDesign {
        n_rows: points.len(),
        n_cols: basis.column_count(),
        rows,
    })
}

/// Indicator design over rows grouped by observation, where each group is
/// evaluated at an ascending list of first-coordinate values while the
/// remaining coordinates stay fixed. Along such a sweep a column's indicator
/// switches on at most once, so the design is stored as per-row activation
/// lists: a column index appears on the first row where it becomes active and
/// is implicitly active on every later row of the same group.
#[derive(Debug, Clone)]
pub(crate) struct PrefixDesign {
    pub n_rows: usize,
    pub n_cols: usize,
    /// One past the last row index of each observation group.
    group_ends: Vec<u32>,
    /// CSR-style offsets into `delta_cols`, length `n_rows + 1`.
    row_starts: Vec<u32>,
    delta_cols: Vec<u32>,
}

impl PrefixDesign {
    /// Build from per-observation `(fixed tail coordinates, ascending sweep
    /// values)` pairs. Row order is group-major, matching the flattened
    /// concatenation of the sweep lists.
    pub fn build(basis: &BasisSet, groups: &[(&[f64], &[f64])]) -> Result<Self> {
        let off = basis.offset();
        let p = basis.column_count();
        // Split every column into its sweep knot (coordinate 0, or 0.0 when
        // the section omits it) and the checks against the fixed tail.
        let mut sweep_knot = vec![0.0f64; p];
        let mut tail_checks: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
        for (k, f) in basis.functions.iter().enumerate() {
            let col = k + off;
            for (&j, &knot) in f.section.iter().zip(&f.knot) {
                if j == 0 {
                    sweep_knot[col] = knot;
                } else {
                    tail_checks[col].push((j - 1, knot));
                }
            }
        }
        let mut order: Vec<u32> = (0..p as u32).collect();
        order.sort_by(|&a, &b| sweep_knot[a as usize].total_cmp(&sweep_knot[b as usize]));

        let n_rows: usize = groups.iter().map(|(_, us)| us.len()).sum();
        let mut group_ends = Vec::with_capacity(groups.len());
        let mut row_starts = Vec::with_capacity(n_rows + 1);
        let mut delta_cols = Vec::new();
        row_starts.push(0u32);
        let mut row_end = 0u32;
        for (tail, us) in groups {
            if tail.len() + 1 != basis.d {
                return Err(HalError::DimensionMismatch {
                    expected: basis.d,
                    actual: tail.len() + 1,
                });
            }
            for win in us.windows(2) {
                if win[1] < win[0] {
                    return Err(HalError::InvalidArgument(
                        "sweep values must be ascending".into(),
                    ));
                }
            }
            let mut next = 0usize;
            for &u in *us {
                while next < p {
                    let col = order[next] as usize;
                    if sweep_knot[col] > u {
                        break;
                    }
                    let ok = tail_checks[col].iter().all(|&(j, knot)| tail[j] >= knot);
                    if ok {
                        delta_cols.push(col as u32);
                    }
                    next += 1;
                }
                row_starts.push(delta_cols.len() as u32);
                row_end += 1;
            }
            group_ends.push(row_end);
        }
        Ok(PrefixDesign {
            n_rows,
            n_cols: p,
            group_ends,
            row_starts,
            delta_cols,
        })
    }

    fn row_cols(&self, r: usize) -> &[u32] {
        &self.delta_cols[self.row_starts[r] as usize..self.row_starts[r + 1] as usize]
    }

    /// Per-row dot products with a coefficient vector, via running sums
    /// within each observation group.
    pub fn forward(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_cols);
        let mut out = vec![0.0; self.n_rows];
        let mut start = 0usize;
        for &end in &self.group_ends {
            let mut acc = 0.0;
            for r in start..end as usize {
                for &k in self.row_cols(r) {
                    acc += beta[k as usize];
                }
                out[r] = acc;
            }
            start = end as usize;
        }
        out
    }

    /// Transpose product: each column collects the suffix sum of row weights
    /// from its activation row to the end of the group.
    pub fn adjoint(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        let mut start = 0usize;
        for &end in &self.group_ends {
            let mut suffix = 0.0;
            for r in (start..end as usize).rev() {
                suffix += weights[r];
                for &k in self.row_cols(r) {
                    out[k as usize] += suffix;
                }
            }
            start = end as usize;
        }
        out
    }
}

/// A fitted linear combination of basis columns with its variation budget
/// and the transform taking raw inputs into the unit cube.
#[derive(Debug, Clone)]
pub struct HalModel {
    pub basis: BasisSet,
    pub beta: Vec<f64>,
    pub norm_budget: f64,
    pub transform: DomainTransform,
}

impl HalModel {
    pub fn new(
        basis: BasisSet,
        beta: Vec<f64>,
        norm_budget: f64,
        transform: DomainTransform,
    ) -> Result<Self> {
        if beta.len() != basis.column_count() {
            return Err(HalError::DimensionMismatch {
                expected: basis.column_count(),
                actual: beta.len(),
            });
        }
        if transform.mins.len() != basis.d {
            return Err(HalError::DimensionMismatch {
                expected: basis.d,
                actual: transform.mins.len(),
            });
        }
        Ok(HalModel {
            basis,
            beta,
            norm_budget,
            transform,
        })
    }

    pub fn d(&self) -> usize {
        self.basis.d
    }

    /// Evaluate at a raw point: transform, clip, then sum active columns.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let u = self.transform.apply(x);
        self.evaluate_unit(&u)
    }

    /// Evaluate at a point already in the unit cube.
    pub fn evaluate_unit(&self, u: &[f64]) -> f64 {
        let off = self.basis.offset();
        let mut acc = if self.basis.has_intercept { self.beta[0] } else { 0.0 };
        for (k, f) in self.basis.functions.iter().enumerate() {
            if f.indicator(u) {
                acc += self.beta[k + off];
            }
        }
        acc
    }

    /// Sectional variation norm of the represented function: the L1 norm of
    /// the coefficient vector, intercept included.
    pub fn svn(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }

    /// Brute-force check of the variation norm on the finest grid spanned by
    /// the model's own knots. Desk-scale only.
    pub fn svn_bruteforce(&self) -> Result<f64> {
        let d = self.basis.d;
        let grids: Vec<Vec<f64>> = (0..d).map(|j| self.basis.knot_values(j)).collect();
        svn_bruteforce(|u| self.evaluate_unit(u), &grids)
    }

    /// Collapse a one-dimensional model into an explicit step function.
    pub fn to_step_fn(&self) -> Result<PiecewiseConstantFn> {
        if self.basis.d != 1 {
            return Err(HalError::InvalidArgument(format!(
                "to_step_fn needs d = 1, model has d = {}",
                self.basis.d
            )));
        }
        let breakpoints: Vec<f64> = self
            .basis
            .knot_values(0)
            .into_iter()
            .filter(|&k| k > 0.0)
            .collect();
        let mut values = vec![self.evaluate_unit(&[0.0])];
        for &b in &breakpoints {
            values.push(self.evaluate_unit(&[b]));
        }
        PiecewiseConstantFn::new(breakpoints, values)
    }
}

/// Right-continuous step function on [0,1].
///
/// `values[0]` is the value on [0, b_1), `values[i]` the value on
/// [b_i, b_{i+1}), and the last value runs through t = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(HalError::DimensionMismatch {
                expected: breakpoints.len() + 1,
                actual: values.len(),
            });
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HalError::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
            return Err(HalError::InvalidArgument(
                "breakpoints must lie in (0,1]".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HalError::InvalidArgument("values must be finite".into()));
        }
        Ok(PiecewiseConstantFn { breakpoints, values })
    }

    pub fn constant(v: f64) -> Self {
        PiecewiseConstantFn {
            breakpoints: Vec::new(),
            values: vec![v],
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx]
    }

    /// Variation norm on [0,1]: |f(0)| plus the total jump mass.
    pub fn variation_norm(&self) -> f64 {
        self.values[0].abs()
            + self
                .values
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .sum::<f64>()
    }

    /// Exact L2(Lebesgue) distance to another step function on [0,1],
    /// integrating the squared difference piece by piece over the merged
    /// breakpoint grid.
    pub fn l2_distance(&self, other: &PiecewiseConstantFn) -> f64 {
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .filter(|&b| b < 1.0)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        let mut left = 0.0;
        for &right in cuts.iter().chain(std::iter::once(&1.0)) {
            if right > left {
                let diff = self.value(left) - other.value(left);
                total += diff * diff * (right - left);
            }
            left = right;
        }
        total.sqrt()
    }
}

/// Brute-force sectional variation norm of an arbitrary function on the unit
/// cube, evaluated on the finest grid induced by the given per-axis
/// breakpoint values (0 and 1 are added automatically).
///
/// For every nonempty section the Vitali variation is summed over all grid
/// cells via alternating-sign quasi-volumes; coordinates outside the section
/// are pinned to zero. The supremum over partitions is attained on the finest
/// grid for functions that are piecewise constant on it.
pub fn svn_bruteforce<F: Fn(&[f64]) -> f64>(f: F, grids_by_axis: &[Vec<f64>]) -> Result<f64> {
    let d = grids_by_axis.len();
    if d == 0 {
        return Err(HalError::InvalidArgument("zero-dimensional domain".into()));
    }
    if d > 6 {
        return Err(HalError::TooLarge(format!(
            "brute-force variation oracle supports d <= 6, got {d}"
        )));
    }
    let mut grids: Vec<Vec<f64>> = Vec::with_capacity(d);
    for axis in grids_by_axis {
        let mut g = axis.clone();
        g.extend_from_slice(&[0.0, 1.0]);
        for &v in &g {
            if !(0.0..=1.0).contains(&v) {
                return Err(HalError::CoordinateOutOfDomain {
                    row: 0,
                    coord: grids.len(),
                    value: v,
                });
            }
        }
        g.sort_by(f64::total_cmp);
        g.dedup();
        if d >= 3 && g.len() - 1 > MAX_ORACLE_CELLS_PER_AXIS {
            return Err(HalError::TooLarge(format!(
                "{} grid cells on one axis exceeds the {MAX_ORACLE_CELLS_PER_AXIS}-cell \
                 cap for the d >= 3 brute-force oracle",
                g.len() - 1
            )));
        }
        grids.push(g);
    }

    let zero = vec![0.0; d];
    let mut total = f(&zero).abs();
    for mask in 1u64..(1u64 << d) {
        let section: Vec<usize> = (0..d).filter(|&j| mask >> j & 1 == 1).collect();
        total += vitali_variation(&f, &grids, &section, d);
    }
    Ok(total)
}

fn vitali_variation<F: Fn(&[f64]) -> f64>(
    f: &F,
    grids: &[Vec<f64>],
    section: &[usize],
    d: usize,
) -> f64 {
    let m = section.len();
    let cells: Vec<usize> = section.iter().map(|&j| grids[j].len() - 1).collect();
    let mut cell_idx = vec![0usize; m];
    let mut point = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut delta = 0.0;
        for corner in 0u64..(1u64 << m) {
            let mut low_count = 0;
            for (a, &j) in section.iter().enumerate() {
                let hi = corner >> a & 1 == 1;
                point[j] = grids[j][cell_idx[a] + usize::from(hi)];
                if !hi {
                    low_count += 1;
                }
            }
            let sign = if low_count % 2 == 0 { 1.0 } else { -1.0 };
            delta += sign * f(&point);
        }
        total += delta.abs();
        for &j in section {
            point[j] = 0.0;
        }

        let mut a = 0;
        loop {
            if a == m {
                return total;
            }
            cell_idx[a] += 1;
            if cell_idx[a] < cells[a] {
                break;
            }
            cell_idx[a] = 0;
            a += 1;
        }
    }
}

/// On-disk document for a fitted model.
///
/// Geometry (`sections`, zero-based coordinate indices, with per-column
/// `knots`), coefficients, the variation budget `m`, and the input transform.
/// Floats survive a save/load cycle exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub d: usize,
    pub has_intercept: bool,
    pub sections: Vec<Vec<usize>>,
    pub knots: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    pub transform: DomainTransform,
}

pub const MODEL_DOC_VERSION: u32 = 1;

impl HalModel {
    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            version: MODEL_DOC_VERSION,
            d: self.basis.d,
            has_intercept: self.basis.has_intercept,
            sections: self.basis.functions.iter().map(|f| f.section.clone()).collect(),
            knots: self.basis.functions.iter().map(|f| f.knot.clone()).collect(),
            beta: self.beta.clone(),
            m: self.norm_budget,
            transform: self.transform.clone(),
        }
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self> {
        if doc.version != MODEL_DOC_VERSION {
            return Err(HalError::InvalidArgument(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        if doc.sections.len() != doc.knots.len() {
            return Err(HalError::DimensionMismatch {
                expected: doc.sections.len(),
                actual: doc.knots.len(),
            });
        }
        let mut functions = Vec::with_capacity(doc.sections.len());
        for (section, knot) in doc.sections.into_iter().zip(doc.knots) {
            if section.iter().any(|&j| j >= doc.d) {
                return Err(HalError::InvalidArgument(
                    "section index out of range".into(),
                ));
            }
            functions.push(BasisFunction::new(section, knot)?);
        }
        let basis = BasisSet {
            d: doc.d,
            has_intercept: doc.has_intercept,
            functions,
        };
        HalModel::new(basis, doc.beta, doc.m, doc.transform)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }
}

pub(crate) fn check_rect(rows: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(HalError::InvalidArgument("no rows".into()));
    };
    let d = first.len();
    if d == 0 {
        return Err(HalError::InvalidArgument("zero-width rows".into()));
    }
    for row in rows {
        if row.len() != d {
            return Err(HalError::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
    }
    Ok(d)
}
