//! Acceptance gate: ten numbered end-to-end checks, one printed line each.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line;
//! under the default capture the lines appear only when the gate fails.
//! Tolerances and runtime budgets are pinned next to each criterion.

use std::cell::RefCell;
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use halkit::basis::{build_basis, BasisSet, DomainTransform, HalModel, PiecewiseConstantFn};
use halkit::density::fit_density;
use halkit::losses::{
    expand_person_period, pl_risk, pl_risk_poisson, DensityDataset, DensityLossOracle,
    HazardSurface, PoissonLossOracle, RegressionDataset, SquaredErrorOracle, SurvivalDataset,
    SurvivalRow,
};
use halkit::regression::erm_basis_count;
use halkit::select::{cv_select_m, CvData};
use halkit::sieve::{sieve_element, sup_error};
use halkit::solver::{ObjectiveOracle, SolveOptions, SolveReport};
use halkit::study::{run_basis_count_study, run_rate_study, RateStudyConfig, RateTask};
use halkit::sim::{gen_density_data, DensitySpec};
use halkit::survival::{
    density_l2_distance, fit_hazard, hazard_l2_distance, improve_risk_counterexample,
    survival_l2_distance, HazardModel,
};

type Check = Result<String, String>;

fn lib<T>(r: halkit::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Solver settings shared by every fit in the gate.
fn opts() -> SolveOptions {
    SolveOptions::default()
}

/// Gap certificates of the fits performed under criteria 3 and 5, consumed
/// by criterion 10.
#[derive(Clone)]
struct FitRecord {
    label: String,
    objective: f64,
    fw_gap: f64,
    converged: bool,
}

fn record(records: &RefCell<Vec<FitRecord>>, label: String, report: &SolveReport) {
    records.borrow_mut().push(FitRecord {
        label,
        objective: report.objective,
        fw_gap: report.fw_gap,
        converged: report.converged,
    });
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

// -------------------------------------------------------------------------
// Criterion 1: the coefficient l1 norm of a fitted model equals the
// brute-force sectional variation norm of the function it represents,
// to 1e-12, on 50 random models with n <= 6 points in d <= 3.
// -------------------------------------------------------------------------
fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=6);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut p = uniform_point(&mut rng, d);
                if trial % 5 == 0 {
                    // Quantized coordinates force shared knots and merged
                    // duplicate columns.
                    for v in &mut p {
                        *v = (*v * 3.0).ceil() / 3.0;
                    }
                }
                p
            })
            .collect();
        let basis = lib(build_basis(&points, true))?;
        let beta: Vec<f64> = (0..basis.column_count())
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        let budget = beta.iter().map(|b| b.abs()).sum::<f64>() + 1.0;
        let model = lib(HalModel::new(basis, beta, budget, DomainTransform::identity(d)))?;
        let gap = (model.svn() - lib(model.svn_bruteforce())?).abs();
        worst = worst.max(gap);
        ensure!(
            gap <= 1e-12,
            "trial {trial} (n={n}, d={d}): |svn - brute force| = {gap:.3e} > 1e-12"
        );
    }
    Ok(format!("50 models agree, worst |difference| {worst:.1e}"))
}

// -------------------------------------------------------------------------
// Criterion 2: the exact partial-likelihood risk equals the Poisson
// person-period form to 1e-12 on 100 random instances with n <= 50, d <= 3.
// -------------------------------------------------------------------------
fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let wd = rng.random_range(0..=2);
        let n = rng.random_range(2..=50);
        let ticks = rng.random_range(5..=17);
        let rows: Vec<SurvivalRow> = (0..n)
            .map(|_| SurvivalRow {
                w: uniform_point(&mut rng, wd),
                time: rng.random_range(1..=ticks) as f64 / ticks as f64,
                status: u8::from(rng.random::<f64>() < 0.6),
            })
            .collect();
        let data = lib(SurvivalDataset::new(rows))?;
        let points: Vec<Vec<f64>> = data
            .rows
            .iter()
            .map(|r| {
                let mut p = Vec::with_capacity(1 + wd);
                p.push(r.time);
                p.extend_from_slice(&r.w);
                p
            })
            .collect();
        let basis = lib(build_basis(&points, true))?;
        let mut beta: Vec<f64> = (0..basis.column_count())
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        for b in &mut beta {
            *b *= 1.5 / l1.max(1e-12);
        }
        let surface = lib(HazardModel::new(lib(HalModel::new(
            basis,
            beta,
            2.0,
            DomainTransform::identity(1 + wd),
        ))?))?;
        let exact = pl_risk(&surface, &data);
        let table = expand_person_period(&data);
        let poisson = pl_risk_poisson(|t, w| surface.log_hazard(t, w), &table);
        let gap = (exact - poisson).abs();
        worst = worst.max(gap);
        ensure!(
            gap <= 1e-12,
            "trial {trial} (n={n}, covariates={wd}): |pl_risk - poisson| = {gap:.3e} > 1e-12"
        );
    }
    Ok(format!("100 instances agree, worst |difference| {worst:.1e}"))
}

// -------------------------------------------------------------------------
// Criterion 3: every fitted conditional density integrates to one within
// 1e-10, probed at 20 covariate values, for 10 fitted models.
// -------------------------------------------------------------------------
fn criterion_3(records: &RefCell<Vec<FitRecord>>) -> Check {
    // (sample size, covariate count, budget, seed)
    let configs: [(usize, usize, f64, u64); 10] = [
        (90, 0, 1.0, 31),
        (120, 0, 4.0, 32),
        (80, 0, 2.0, 33),
        (80, 1, 1.0, 34),
        (100, 1, 2.0, 35),
        (70, 1, 4.0, 36),
        (90, 1, 2.0, 37),
        (60, 2, 1.0, 38),
        (80, 2, 2.0, 39),
        (70, 2, 4.0, 40),
    ];
    let mut worst = 0.0f64;
    for &(n, wd, m, seed) in &configs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut us = Vec::with_capacity(n);
        let mut ws = Vec::with_capacity(n);
        for _ in 0..n {
            let w = uniform_point(&mut rng, wd);
            let v: f64 = rng.random();
            // A covariate-tilted power law keeps the response inside (0,1)
            // while making the conditional shape depend on w.
            let power = 0.5 + w.iter().sum::<f64>();
            us.push(v.powf(power.max(0.4)));
            ws.push(w);
        }
        let data = lib(DensityDataset::new(us, ws))?;
        let (fit, report) = lib(fit_density(&data, m, &opts()))?;
        record(records, format!("density fit n={n} wd={wd} m={m}"), &report);
        for probe in 0..20 {
            let w = uniform_point(&mut rng, wd);
            let mass = fit.conditional_cdf(1.0, &w);
            let gap = (mass - 1.0).abs();
            worst = worst.max(gap);
            ensure!(
                gap <= 1e-10,
                "fit (n={n}, wd={wd}, m={m}), probe {probe}: integral {mass} is off by {gap:.3e} > 1e-10"
            );
        }
    }
    Ok(format!("10 fits x 20 probes normalize, worst |mass - 1| {worst:.1e}"))
}

// -------------------------------------------------------------------------
// Criterion 4: analytic gradients of all three losses match central finite
// differences (step 1e-5) to relative error 1e-6 at 20 feasible points each.
// -------------------------------------------------------------------------
fn fd_gradient<O: ObjectiveOracle>(oracle: &O, beta: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; beta.len()];
    let mut probe = beta.to_vec();
    for j in 0..beta.len() {
        probe[j] = beta[j] + h;
        let up = oracle.value(&probe);
        probe[j] = beta[j] - h;
        let down = oracle.value(&probe);
        probe[j] = beta[j];
        out[j] = (up - down) / (2.0 * h);
    }
    out
}

fn check_gradients<O: ObjectiveOracle>(
    name: &str,
    oracle: &O,
    rng: &mut ChaCha8Rng,
) -> Result<f64, String> {
    let p = oracle.dimension();
    let mut worst = 0.0f64;
    for point in 0..20 {
        let mut beta: Vec<f64> = (0..p).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let target = 2.0 * rng.random::<f64>();
        for b in &mut beta {
            *b *= target / l1.max(1e-12);
        }
        let mut grad = vec![0.0; p];
        oracle.eval(&beta, &mut grad);
        let fd = fd_gradient(oracle, &beta, 1e-5);
        let err = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let scale = fd.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
        let rel = err / scale;
        worst = worst.max(rel);
        if rel > 1e-6 {
            return Err(format!(
                "{name} gradient, point {point}: relative error {rel:.3e} > 1e-6"
            ));
        }
    }
    Ok(worst)
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);

    let xs: Vec<Vec<f64>> = (0..25).map(|_| uniform_point(&mut rng, 2)).collect();
    let ys: Vec<f64> = (0..25).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let basis = lib(build_basis(&xs, true))?;
    let squared = lib(SquaredErrorOracle::new(&basis, &xs, &ys))?;
    let w1 = check_gradients("squared error", &squared, &mut rng)?;

    let rows: Vec<SurvivalRow> = (0..20)
        .map(|_| SurvivalRow {
            w: uniform_point(&mut rng, 1),
            time: rng.random_range(1..=7) as f64 / 7.0,
            status: u8::from(rng.random::<f64>() < 0.6),
        })
        .collect();
    let data = lib(SurvivalDataset::new(rows))?;
    let table = expand_person_period(&data);
    let points: Vec<Vec<f64>> = data.rows.iter().map(|r| vec![r.time, r.w[0]]).collect();
    let basis = lib(build_basis(&points, true))?;
    let poisson = lib(PoissonLossOracle::new(&basis, &table))?;
    let w2 = check_gradients("partial likelihood", &poisson, &mut rng)?;

    let us: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
    let ws: Vec<Vec<f64>> = (0..20).map(|_| uniform_point(&mut rng, 1)).collect();
    let data = lib(DensityDataset::new(us, ws))?;
    let points: Vec<Vec<f64>> = data
        .us
        .iter()
        .zip(&data.ws)
        .map(|(&u, w)| {
            let mut p = vec![u];
            p.extend_from_slice(w);
            p
        })
        .collect();
    let full = lib(build_basis(&points, false))?;
    // The density loss runs on the reduced basis whose sections all involve
    // the response coordinate.
    let basis = BasisSet {
        d: full.d,
        has_intercept: false,
        functions: full
            .functions
            .into_iter()
            .filter(|f| f.section.contains(&0))
            .collect(),
    };
    let density = lib(DensityLossOracle::new(&basis, &data))?;
    let w3 = check_gradients("density", &density, &mut rng)?;

    Ok(format!(
        "worst relative error: squared {w1:.1e}, partial likelihood {w2:.1e}, density {w3:.1e}"
    ))
}

// -------------------------------------------------------------------------
// Criterion 5: on data drawn from a strictly decreasing hazard (d=1, n=50,
// seed 3) the fit at budget 2 decreases somewhere across unique observed
// times, and the flattening construction returns a strictly better-risk
// step function with no larger variation norm and unchanged values at every
// observed time.
// -------------------------------------------------------------------------
fn criterion_5(records: &RefCell<Vec<FitRecord>>) -> Check {
    // Event rate 2 e^{-1.5 t}: cumulative hazard (4/3)(1 - e^{-1.5 t}),
    // inverted for sampling; administrative censoring at t = 1.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<SurvivalRow> = (0..50)
        .map(|_| {
            let e = -(1.0 - rng.random::<f64>()).ln();
            let arg = 1.0 - e / (4.0 / 3.0);
            if arg > (-1.5f64).exp() {
                SurvivalRow { w: vec![], time: -arg.ln() / 1.5, status: 1 }
            } else {
                SurvivalRow { w: vec![], time: 1.0, status: 0 }
            }
        })
        .collect();
    let data = lib(SurvivalDataset::new(rows))?;
    let n_events = data.n_events();
    ensure!(n_events >= 10, "degenerate draw: only {n_events} events");

    let (fit, report) = lib(fit_hazard(&data, 2.0, &opts()))?;
    record(records, "hazard fit n=50 m=2".into(), &report);
    let step = lib(fit.to_step_fn())?;
    let times = data.unique_times();
    let decreases = times
        .windows(2)
        .any(|pair| step.value(pair[1]) < step.value(pair[0]));
    ensure!(decreases, "fit has no decrease across the unique observed times");

    let improvement = lib(improve_risk_counterexample(&step, &data))?
        .ok_or("no risk improvement was found despite a decreasing stretch")?;
    let margin = improvement.original_risk - improvement.improved_risk;
    ensure!(margin > 1e-12, "risk margin {margin:.3e} is not above 1e-12");
    let (sv_new, sv_old) = (improvement.improved.variation_norm(), step.variation_norm());
    ensure!(
        sv_new <= sv_old + 1e-12,
        "variation norm grew: {sv_new} > {sv_old}"
    );
    for &t in &times {
        let (a, b) = (improvement.improved.value(t), step.value(t));
        ensure!(
            (a - b).abs() <= 1e-12,
            "value changed at observed time {t}: {a} vs {b}"
        );
    }
    Ok(format!(
        "risk improves by {margin:.2e} with variation {sv_new:.3} <= {sv_old:.3}, data values untouched"
    ))
}

// -------------------------------------------------------------------------
// Criterion 6: for 200 random pairs of step hazards with log-hazard
// variation norm at most 2, the survival-function L2 distance is bounded by
// the hazard L2 distance and by the event-density L2 distance (slack 1e-10).
// -------------------------------------------------------------------------
fn random_bounded_hazard(rng: &mut ChaCha8Rng) -> Result<PiecewiseConstantFn, String> {
    let cuts = rng.random_range(0..=3);
    let mut bps: Vec<f64> = (0..cuts)
        .map(|_| 0.05 + 0.9 * rng.random::<f64>())
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let mut vals: Vec<f64> = (0..bps.len() + 1)
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    let norm = vals[0].abs()
        + vals.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>();
    if norm > 2.0 {
        for v in &mut vals {
            *v *= 2.0 / norm;
        }
    }
    let rates: Vec<f64> = vals.iter().map(|v| v.exp()).collect();
    lib(PiecewiseConstantFn::new(bps, rates))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut tightest = f64::INFINITY;
    for trial in 0..200 {
        let p = random_bounded_hazard(&mut rng)?;
        let q = random_bounded_hazard(&mut rng)?;
        let ds = survival_l2_distance(&p, &q);
        let dh = hazard_l2_distance(&p, &q);
        let dq = density_l2_distance(&p, &q);
        ensure!(
            ds <= dh + 1e-10,
            "trial {trial}: survival distance {ds} exceeds hazard distance {dh}"
        );
        ensure!(
            ds <= dq + 1e-10,
            "trial {trial}: survival distance {ds} exceeds density distance {dq}"
        );
        tightest = tightest.min((dh - ds).min(dq - ds));
    }
    Ok(format!("200 pairs ordered, smallest slack {tightest:.2e}"))
}

// -------------------------------------------------------------------------
// Criterion 7: the explicit sieve element for the identity target (unit
// section derivative) converges in sup norm at the n^{-1/2} rate: log-log
// slope within [-0.65, -0.35] over n in {100, 400, 1600, 6400}, 50 reps.
// -------------------------------------------------------------------------
fn criterion_7() -> Check {
    let ns = [100usize, 400, 1600, 6400];
    let grid: Vec<Vec<f64>> = (0..=800).map(|j| vec![j as f64 / 800.0]).collect();
    let mut log_n = Vec::new();
    let mut log_err = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        for rep in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            rng.set_stream(((ni as u64) << 32) | rep);
            let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
            let element = lib(sieve_element(&points, |_, _| 1.0, 0.0))?;
            let err = lib(sup_error(&element, |x| x[0], &grid))?;
            ensure!(err > 0.0, "exact interpolation at n={n} leaves no error to fit");
            log_n.push((n as f64).ln());
            log_err.push(err.ln());
        }
    }
    let s = slope(&log_n, &log_err);
    ensure!(
        (-0.65..=-0.35).contains(&s),
        "sup-error slope {s:.3} outside [-0.65, -0.35]"
    );
    Ok(format!("sup-error slope {s:.3} over 4 sizes x 50 reps"))
}

// -------------------------------------------------------------------------
// Criterion 8: the regression rate study on a two-jump step truth shows an
// L2-error log-log slope within [-0.45, -0.22] for n in [125, 4000], 20
// reps at budget 2 and noise 0.5.
// -------------------------------------------------------------------------
fn criterion_8() -> Check {
    let truth = lib(PiecewiseConstantFn::new(
        vec![0.5, 0.8],
        vec![0.0, 1.0, 0.5],
    ))?;
    let config = RateStudyConfig {
        task: RateTask::Regression,
        n_list: vec![125, 250, 500, 1000, 2000, 4000],
        reps: 20,
        seed: 1,
        norm_budget: 2.0,
        noise_sd: 0.5,
    };
    let report = lib(run_rate_study(&truth, &config, &opts()))?;
    let s = report.slope.ok_or("study reported no slope")?;
    ensure!(
        (-0.45..=-0.22).contains(&s),
        "rate slope {s:.3} outside [-0.45, -0.22]"
    );
    ensure!(
        !report.flags.iter().any(|f| f == "error-floor"),
        "errors sit at the solver floor; slope is not informative"
    );
    Ok(format!("L2 error slope {s:.3} over 6 sizes x 20 reps"))
}

// -------------------------------------------------------------------------
// Criterion 9: at d=2 the mean lattice (unrestricted-minimizer) basis count
// grows strictly with n, overtakes the linear-size count by n=256, and the
// ratio keeps increasing; the lattice count equals a subset brute force on
// every instance with n <= 12.
// -------------------------------------------------------------------------
fn subset_closure_count(points: &[Vec<f64>]) -> u64 {
    let n = points.len();
    let d = points[0].len();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for mask in 1u32..(1u32 << n) {
        let mut m = vec![f64::NEG_INFINITY; d];
        for (i, p) in points.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for j in 0..d {
                    m[j] = m[j].max(p[j]);
                }
            }
        }
        seen.insert(m.iter().map(|v| v.to_bits()).collect());
    }
    seen.len() as u64
}

fn criterion_9() -> Check {
    let sizes = [64usize, 128, 256, 512];
    let report = lib(run_basis_count_study(&[2], &sizes, 20, 7))?;
    let mut mean_erm = Vec::new();
    let mut mean_hal = Vec::new();
    for &n in &sizes {
        let cells: Vec<&Vec<f64>> = report
            .rows
            .iter()
            .filter(|r| r[1] as usize == n)
            .collect();
        ensure!(cells.len() == 20, "expected 20 cells at n={n}, got {}", cells.len());
        mean_erm.push(cells.iter().map(|r| r[3]).sum::<f64>() / 20.0);
        mean_hal.push(cells.iter().map(|r| r[4]).sum::<f64>() / 20.0);
    }
    for k in 1..sizes.len() {
        ensure!(
            mean_erm[k] > mean_erm[k - 1],
            "mean lattice count not increasing: {:?}",
            mean_erm
        );
        let (r_hi, r_lo) = (mean_erm[k] / mean_hal[k], mean_erm[k - 1] / mean_hal[k - 1]);
        ensure!(
            r_hi > r_lo,
            "lattice/linear ratio not increasing between n={} and n={}: {r_lo:.3} vs {r_hi:.3}",
            sizes[k - 1],
            sizes[k]
        );
    }
    ensure!(
        mean_erm[2] > mean_hal[2],
        "lattice count {:.1} does not exceed the linear count {:.1} at n=256",
        mean_erm[2],
        mean_hal[2]
    );

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..40 {
        let n = rng.random_range(1..=12);
        let d = rng.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut p = uniform_point(&mut rng, d);
                if trial % 2 == 0 {
                    for v in &mut p {
                        *v = (*v * 4.0).ceil() / 4.0;
                    }
                }
                p
            })
            .collect();
        let fast = lib(erm_basis_count(&points))?;
        let brute = subset_closure_count(&points);
        ensure!(
            fast == brute,
            "trial {trial} (n={n}, d={d}): lattice count {fast} != brute force {brute}"
        );
    }
    Ok(format!(
        "mean lattice counts {:?} vs linear {:?}; 40 brute-force instances match",
        mean_erm.iter().map(|v| v.round()).collect::<Vec<_>>(),
        mean_hal
    ))
}

// -------------------------------------------------------------------------
// Criterion 10: every fit recorded under criteria 3 and 5 carries the
// duality-gap certificate fw_gap <= 1e-8 (1 + |objective|); the rate study
// of criterion 8 aborts on any uncertified fit, so its completion certifies
// those as well. Cross-validation reports are byte-identical across reruns
// with fixed seeds.
// -------------------------------------------------------------------------
fn criterion_10(records: &RefCell<Vec<FitRecord>>) -> Check {
    let records = records.borrow();
    ensure!(
        records.len() == 11,
        "expected 11 recorded fits from criteria 3 and 5, found {}",
        records.len()
    );
    let mut worst = 0.0f64;
    for r in records.iter() {
        let bound = 1e-8 * (1.0 + r.objective.abs());
        ensure!(
            r.converged && r.fw_gap <= bound,
            "{}: gap {:.3e} exceeds {:.3e} (converged={})",
            r.label,
            r.fw_gap,
            bound,
            r.converged
        );
        worst = worst.max(r.fw_gap / bound);
    }

    let grid = [0.5, 1.0, 2.0, 4.0];
    let dens = lib(gen_density_data(60, 9, &DensitySpec::default_mixture()))?;
    let first = lib(cv_select_m(&CvData::Density(&dens), &grid, 4, 7, &opts()))?;
    let second = lib(cv_select_m(&CvData::Density(&dens), &grid, 4, 7, &opts()))?;
    let (a, b) = (
        lib(serde_json::to_string(&first).map_err(halkit::HalError::from))?,
        lib(serde_json::to_string(&second).map_err(halkit::HalError::from))?,
    );
    ensure!(a == b, "density CV reports differ between identical runs");

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let xs: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>()]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| f64::from(x[0] > 0.5) + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    let reg = lib(RegressionDataset::new(xs, ys))?;
    let first = lib(cv_select_m(&CvData::Regression(&reg), &grid, 5, 11, &opts()))?;
    let second = lib(cv_select_m(&CvData::Regression(&reg), &grid, 5, 11, &opts()))?;
    let (a, b) = (
        lib(serde_json::to_string(&first).map_err(halkit::HalError::from))?,
        lib(serde_json::to_string(&second).map_err(halkit::HalError::from))?,
    );
    ensure!(a == b, "regression CV reports differ between identical runs");

    Ok(format!(
        "11 direct certificates (worst gap at {:.0}% of bound), study fits certified by construction, CV byte-stable",
        100.0 * worst
    ))
}

// -------------------------------------------------------------------------

fn run_criterion(
    k: usize,
    name: &str,
    budget_secs: Option<f64>,
    failures: &mut Vec<String>,
    check: impl FnOnce() -> Check,
) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
        let text = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "opaque panic".into());
        Err(format!("panicked: {text}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let outcome = match (outcome, budget_secs) {
        (Ok(detail), Some(limit)) if secs > limit => Err(format!(
            "passed ({detail}) but took {secs:.1}s against a {limit:.0}s budget"
        )),
        (other, _) => other,
    };
    match outcome {
        Ok(detail) => println!("criterion {k:2} PASS [{secs:6.1}s] {name}: {detail}"),
        Err(why) => {
            println!("criterion {k:2} FAIL [{secs:6.1}s] {name}: {why}");
            failures.push(format!("criterion {k} ({name}): {why}"));
        }
    }
}

#[test]
fn acceptance_criteria() {
    let records = RefCell::new(Vec::new());
    let mut failures = Vec::new();

    run_criterion(1, "variation norm identity", Some(10.0), &mut failures, criterion_1);
    run_criterion(2, "partial likelihood equals Poisson form", Some(30.0), &mut failures, criterion_2);
    run_criterion(3, "fitted densities normalize", Some(120.0), &mut failures, || {
        criterion_3(&records)
    });
    run_criterion(4, "loss gradients match finite differences", None, &mut failures, criterion_4);
    run_criterion(5, "risk-improving flattening of a decreasing fit", Some(60.0), &mut failures, || {
        criterion_5(&records)
    });
    run_criterion(6, "survival distance bounded by hazard and density", None, &mut failures, criterion_6);
    run_criterion(7, "sieve element converges at root-n", Some(120.0), &mut failures, criterion_7);
    run_criterion(8, "regression rate-study slope", Some(600.0), &mut failures, criterion_8);
    run_criterion(9, "lattice basis counts outgrow the linear basis", None, &mut failures, criterion_9);
    run_criterion(10, "solver certificates and reproducible selection", None, &mut failures, || {
        criterion_10(&records)
    });

    assert!(
        failures.is_empty(),
        "{} of 10 acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
