//! Synthetic data generators for the shipped studies.
//!
//! Both generators are deterministic per seed. The survival generator draws
//! covariates and event times from one counter-based RNG stream and censoring
//! times from a second stream of the same seed, so censoring is independent
//! of everything else by construction and the event-time draws do not move
//! when the censoring law changes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{HalError, Result};
use crate::losses::{DensityDataset, SurvivalDataset, SurvivalRow};

/// Rates for the two-covariate survival generator. The hazard is constant in
/// time: `base_rate` untreated, `base_rate * young_ratio` treated below age
/// 40, `base_rate * old_ratio` treated at or above 40.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStudyParams {
    pub base_rate: f64,
    pub young_ratio: f64,
    pub old_ratio: f64,
    pub censor_rate: f64,
}

impl Default for SurvivalStudyParams {
    fn default() -> Self {
        SurvivalStudyParams {
            base_rate: 1.0,
            young_ratio: 0.5,
            old_ratio: 2.0,
            censor_rate: 0.3,
        }
    }
}

impl SurvivalStudyParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("base_rate", self.base_rate),
            ("young_ratio", self.young_ratio),
            ("old_ratio", self.old_ratio),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(HalError::InvalidArgument(format!(
                    "{name} must be a positive finite rate, got {v}"
                )));
            }
        }
        if !(self.censor_rate.is_finite() && self.censor_rate >= 0.0) {
            return Err(HalError::InvalidArgument(format!(
                "censor_rate must be a nonnegative finite rate, got {}",
                self.censor_rate
            )));
        }
        Ok(())
    }

    /// Event-time rate for covariates `(age in years, treatment)`.
    pub fn hazard_rate(&self, age_years: f64, treated: bool) -> f64 {
        if !treated {
            self.base_rate
        } else if age_years < 40.0 {
            self.base_rate * self.young_ratio
        } else {
            self.base_rate * self.old_ratio
        }
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Latent draws behind one subject: covariates, event time, censor time.
struct SurvivalLatent {
    w: Vec<f64>,
    event: f64,
    censor: f64,
}

fn survival_latents(n: usize, seed: u64, params: &SurvivalStudyParams) -> Vec<SurvivalLatent> {
    let mut main = ChaCha8Rng::seed_from_u64(seed);
    main.set_stream(0);
    let mut censoring = ChaCha8Rng::seed_from_u64(seed);
    censoring.set_stream(1);
    (0..n)
        .map(|_| {
            let age_scaled: f64 = main.random();
            let age_years = 20.0 + 40.0 * age_scaled;
            let treated = main.random::<f64>() < 0.5;
            let rate = params.hazard_rate(age_years, treated);
            let event = exp_draw(&mut main, rate);
            let censor = if params.censor_rate > 0.0 {
                exp_draw(&mut censoring, params.censor_rate)
            } else {
                f64::INFINITY
            };
            SurvivalLatent {
                w: vec![age_scaled, if treated { 1.0 } else { 0.0 }],
                event,
                censor,
            }
        })
        .collect()
}

/// Generate a right-censored two-covariate study: age uniform on (20, 60)
/// scaled to [0,1], treatment fair Bernoulli, exponential event and censor
/// times, observation truncated at the unit horizon.
pub fn gen_survival_study(
    n: usize,
    seed: u64,
    params: &SurvivalStudyParams,
) -> Result<SurvivalDataset> {
    if n == 0 {
        return Err(HalError::InvalidArgument("need n >= 1".into()));
    }
    params.validate()?;
    let rows = survival_latents(n, seed, params)
        .into_iter()
        .map(|lat| {
            let time = lat.event.min(lat.censor).min(1.0);
            let status = u8::from(lat.event <= lat.censor && lat.event < 1.0);
            SurvivalRow { w: lat.w, time, status }
        })
        .collect();
    SurvivalDataset::new(rows)
}

/// Generating law for univariate density data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DensitySpec {
    Uniform,
    /// `weight` of the mass from Beta(a, b), the rest uniform.
    BetaUniformMixture { a: f64, b: f64, weight: f64 },
}

impl DensitySpec {
    /// The default mixture: Beta(4, 2) with weight 0.7.
    pub fn default_mixture() -> Self {
        DensitySpec::BetaUniformMixture { a: 4.0, b: 2.0, weight: 0.7 }
    }

    fn validate(&self) -> Result<()> {
        if let DensitySpec::BetaUniformMixture { a, b, weight } = *self {
            if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                return Err(HalError::InvalidArgument(format!(
                    "beta shapes must be positive and finite, got a={a}, b={b}"
                )));
            }
            if !(0.0..=1.0).contains(&weight) || !weight.is_finite() {
                return Err(HalError::InvalidArgument(format!(
                    "mixture weight must lie in [0,1], got {weight}"
                )));
            }
        }
        Ok(())
    }
}

/// Generate i.i.d. univariate draws from the given law.
pub fn gen_density_data(n: usize, seed: u64, spec: &DensitySpec) -> Result<DensityDataset> {
    if n == 0 {
        return Err(HalError::InvalidArgument("need n >= 1".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let us: Vec<f64> = match *spec {
        DensitySpec::Uniform => (0..n).map(|_| rng.random()).collect(),
        DensitySpec::BetaUniformMixture { weight, .. } if weight == 0.0 => {
            (0..n).map(|_| rng.random()).collect()
        }
        DensitySpec::BetaUniformMixture { a, b, weight } => {
            let beta = Beta::new(a, b)
                .map_err(|e| HalError::InvalidArgument(format!("beta law: {e}")))?;
            (0..n)
                .map(|_| {
                    let from_beta = weight >= 1.0 || rng.random::<f64>() < weight;
                    if from_beta {
                        beta.sample(&mut rng)
                    } else {
                        rng.random()
                    }
                })
                .collect()
        }
    };
    let ws = vec![Vec::new(); n];
    DensityDataset::new(us, ws)
}
