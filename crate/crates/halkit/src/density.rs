//! Conditional density estimation with exact normalization.
//!
//! The density is parameterized through a shape function g(u, w) whose basis
//! uses only sections containing the response coordinate; columns in the
//! covariates alone would cancel against the normalizer, so they are never
//! generated. The fitted density is exp(g) divided by the exact integral of
//! exp(g) over the unit response interval, hence it integrates to one by
//! construction rather than by quadrature.

use crate::basis::{build_basis_masked, BasisSet, DomainTransform, HalModel};
use crate::error::{HalError, Result};
use crate::losses::{log_normalizer, DensityDataset, DensityLossOracle};
use crate::solver::{minimize_l1ball, SolveOptions, SolveReport};

/// A fitted conditional density on [0,1] given covariates.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub model: HalModel,
}

impl DensityModel {
    /// Wrap a shape-function model, enforcing the reduced-basis invariants:
    /// no intercept, and every section contains the response coordinate.
    pub fn new(model: HalModel) -> Result<Self> {
        if model.basis.has_intercept {
            return Err(HalError::InvalidArgument(
                "density basis must not carry an intercept".into(),
            ));
        }
        if let Some(f) = model.basis.functions.iter().find(|f| !f.section.contains(&0)) {
            return Err(HalError::InvalidArgument(format!(
                "density basis section {:?} does not involve the response coordinate",
                f.section
            )));
        }
        Ok(DensityModel { model })
    }

    fn g(&self, u: f64, w: &[f64]) -> f64 {
        let mut p = Vec::with_capacity(1 + w.len());
        p.push(u);
        p.extend_from_slice(w);
        self.model.evaluate(&p)
    }

    /// Sorted response-coordinate breakpoints of the shape function.
    pub fn u_breakpoints(&self) -> Vec<f64> {
        self.model
            .basis
            .knot_values(0)
            .into_iter()
            .filter(|&u| u > 0.0)
            .collect()
    }

    pub fn log_density(&self, u: f64, w: &[f64]) -> f64 {
        let breaks = self.u_breakpoints();
        self.g(u, w) - log_normalizer(|t, ww| self.g(t, ww), w, &breaks)
    }

    pub fn density(&self, u: f64, w: &[f64]) -> f64 {
        self.log_density(u, w).exp()
    }

    /// Exact cumulative distribution of the fitted density in the response.
    pub fn conditional_cdf(&self, u: f64, w: &[f64]) -> f64 {
        let breaks = self.u_breakpoints();
        let log_z = log_normalizer(|t, ww| self.g(t, ww), w, &breaks);
        let mut mass = 0.0;
        let mut left = 0.0;
        for right in breaks.iter().copied().chain(std::iter::once(1.0)) {
            if left >= u {
                break;
            }
            let len = right.min(u) - left;
            if len > 0.0 {
                mass += len * (self.g(left, w) - log_z).exp();
            }
            left = right.max(left);
        }
        mass
    }
}

/// The reduced basis for conditional-density estimation: indicators at the
/// observed (response, covariate) points whose sections all contain the
/// response coordinate, and no intercept.
pub fn build_density_basis(data: &DensityDataset) -> Result<BasisSet> {
    let points = assemble_points(data);
    build_basis_masked(&points, false, |mask| mask & 1 == 1)
}

fn assemble_points(data: &DensityDataset) -> Vec<Vec<f64>> {
    data.us
        .iter()
        .zip(&data.ws)
        .map(|(&u, w)| {
            let mut p = Vec::with_capacity(1 + w.len());
            p.push(u);
            p.extend_from_slice(w);
            p
        })
        .collect()
}

/// Fit a conditional density by empirical risk minimization over the l1
/// ball of radius `norm_budget`.
pub fn fit_density(
    data: &DensityDataset,
    norm_budget: f64,
    opts: &SolveOptions,
) -> Result<(DensityModel, SolveReport)> {
    let points = assemble_points(data);
    let transform = DomainTransform::from_data(&points)?;
    let unit_points: Vec<Vec<f64>> = points.iter().map(|p| transform.apply(p)).collect();
    let unit_data = DensityDataset::new(
        unit_points.iter().map(|p| p[0]).collect(),
        unit_points.iter().map(|p| p[1..].to_vec()).collect(),
    )?;
    let basis = build_basis_masked(&unit_points, false, |mask| mask & 1 == 1)?;
    let oracle = DensityLossOracle::new(&basis, &unit_data)?;
    let (beta, report) = minimize_l1ball(&oracle, norm_budget, opts)?;
    let model = HalModel::new(basis, beta, norm_budget, transform)?;
    Ok((DensityModel::new(model)?, report))
}
