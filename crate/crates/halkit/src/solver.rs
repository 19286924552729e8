//! Smooth convex minimization over an L1 ball with a duality-gap certificate.
//!
//! The default method is accelerated projected gradient with backtracking and
//! a monotone safeguard, so the reported objective never increases across
//! outer iterations. A plain Frank-Wolfe loop is available as a fallback step
//! rule. Either way the certificate is the linear-minimization gap over the
//! ball, which upper-bounds the suboptimality at the returned point.

use crate::error::{HalError, Result};
use serde::{Deserialize, Serialize};

/// Smooth objective: one call returns the value and fills in the gradient.
pub trait ObjectiveOracle {
    fn dimension(&self) -> usize;

    /// Objective value at `beta`; the gradient is written into `grad`.
    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64;

    /// Value-only evaluation, used inside line searches. Override when the
    /// value is cheaper than the full eval.
    fn value(&self, beta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dimension()];
        self.eval(beta, &mut scratch)
    }
}

/// Objective built from a closure, mostly for tests and small problems.
pub struct FnOracle<F: Fn(&[f64], &mut [f64]) -> f64> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> ObjectiveOracle for FnOracle<F> {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn eval(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(beta, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    Apg,
    Fw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapCertified,
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    pub init: Option<Vec<f64>>,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 50_000,
            step_rule: StepRule::Apg,
            init: None,
            record_trace: false,
        }
    }
}

/// Outcome of a solve: certificate, iteration count, and how it stopped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub fw_gap: f64,
    pub step_rule: StepRule,
    pub termination: Termination,
    /// True when the active-face refinement contributed to the result.
    #[serde(default)]
    pub polished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Euclidean projection onto `{w : ||w||_1 <= m}` by sorted thresholding.
///
/// Feasible inputs (including exact equality) come back unchanged.
pub fn project_l1(v: &[f64], m: f64) -> Result<Vec<f64>> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(HalError::InvalidArgument(format!(
            "l1 radius must be finite and nonnegative, got {m}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HalError::NonFinite { what: "projection input", iteration: 0 });
    }
    if m == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= m {
        return Ok(v.to_vec());
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let cand = (cum - m) / (j + 1) as f64;
        if uj > cand {
            theta = cand;
        } else {
            break;
        }
    }
    Ok(v
        .iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect())
}

/// Linear-minimization duality gap over the ball at a feasible point:
/// max over signed vertices of `<grad, beta - vertex>`, which equals
/// `<grad, beta> + m * max_k |grad_k|`.
pub fn fw_gap(grad: &[f64], beta: &[f64], m: f64) -> f64 {
    let inner: f64 = grad.iter().zip(beta).map(|(g, b)| g * b).sum();
    let inf: f64 = grad.iter().fold(0.0, |acc, g| acc.max(g.abs()));
    inner + m * inf
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_finite(v: f64, what: &'static str, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HalError::NonFinite { what, iteration })
    }
}

fn check_grad(g: &[f64], iteration: usize) -> Result<()> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(HalError::NonFinite { what: "gradient", iteration })
    }
}

/// Minimize a smooth convex objective over `{beta : ||beta||_1 <= m}`.
///
/// Terminates when the gap certificate reaches `tol * (1 + |objective|)`,
/// when ten consecutive iterations each improve the objective by less than
/// 1e-10 relative, or at `max_iter`. Only the first counts as convergence.
pub fn minimize_l1ball<O: ObjectiveOracle>(
    oracle: &O,
    m: f64,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(HalError::InvalidArgument(format!(
            "l1 radius must be finite and nonnegative, got {m}"
        )));
    }
    if opts.tol <= 0.0 || opts.max_iter == 0 {
        return Err(HalError::InvalidArgument(
            "tol must be positive and max_iter nonzero".into(),
        ));
    }
    let dim = oracle.dimension();
    let x = match &opts.init {
        Some(v) => {
            if v.len() != dim {
                return Err(HalError::DimensionMismatch { expected: dim, actual: v.len() });
            }
            project_l1(v, m)?
        }
        None => vec![0.0; dim],
    };
    let mut gx = vec![0.0; dim];
    let fx = check_finite(oracle.eval(&x, &mut gx), "objective", 0)?;
    check_grad(&gx, 0)?;
    let mut trace = opts.record_trace.then(|| vec![fx]);

    let gap0 = fw_gap(&gx, &x, m);
    if m == 0.0 || gap0 <= opts.tol * (1.0 + fx.abs()) {
        return Ok((
            x,
            SolveReport {
                converged: true,
                iterations: 0,
                objective: fx,
                fw_gap: if m == 0.0 { 0.0 } else { gap0 },
                step_rule: opts.step_rule,
                termination: Termination::GapCertified,
                polished: false,
                trace,
            },
        ));
    }

    match opts.step_rule {
        StepRule::Apg => apg_loop(oracle, m, opts, x, fx, gx, &mut trace),
        StepRule::Fw => fw_loop(oracle, m, opts, x, fx, gx, &mut trace),
    }
    .map(|(beta, mut report)| {
        report.trace = trace.take();
        (beta, report)
    })
}

const STALL_LIMIT: usize = 10;
const STALL_REL: f64 = 1e-10;
const LINE_SEARCH_SLACK: f64 = 1e-15;
const MAX_HALVINGS: usize = 100;
const POLISH_MAX_SUPPORT: usize = 250;
const POLISH_ROUNDS: usize = 3;
const POLISH_NEWTON_STEPS: usize = 15;

/// Solve a dense k x k system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    debug_assert_eq!(a.len(), k * k);
    for col in 0..k {
        let (piv, piv_abs) = (col..k)
            .map(|r| (r, a[r * k + col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if !piv_abs.is_finite() || piv_abs < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * k + col];
        for r in col + 1..k {
            let factor = a[r * k + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..k {
                a[r * k + j] -= factor * a[col * k + j];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for col in (0..k).rev() {
        let mut acc = b[col];
        for j in col + 1..k {
            acc -= a[col * k + j] * x[j];
        }
        x[col] = acc / a[col * k + col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Newton refinement on the active face of the ball, attempted when plain
/// iteration stops making objective progress while the gap certificate is
/// still out of reach. Curvature comes from forward differences of the
/// oracle gradient, and a candidate is only ever accepted after re-evaluating
/// the true objective and gradient, so the reported certificate stays honest.
///
/// The face is rebuilt from the current point every round: a ratio test
/// stops each step at the first support coordinate to reach zero, which
/// pivots that coordinate out of the next round's system, and zero
/// coordinates whose gradient sits near the face's dual multiplier join it.
/// The gap may sit still while pivots settle the active set, so only
/// unblocked rounds count toward the flat-round limit.
///
/// Returns the refined point when it strictly improves the gap.
fn try_polish<O: ObjectiveOracle>(
    oracle: &O,
    m: f64,
    x: &[f64],
    fx: f64,
    gx: &[f64],
) -> Result<Option<(Vec<f64>, f64, Vec<f64>, f64)>> {
    let dim = oracle.dimension();
    let mut cur = x.to_vec();
    let mut fcur = fx;
    let mut gcur = gx.to_vec();
    let start_gap = fw_gap(&gcur, &cur, m);
    let mut best: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;
    let mut best_gap = start_gap;
    let mut gplus = vec![0.0; dim];
    let mut flat = 0usize;

    for _ in 0..POLISH_NEWTON_STEPS {
        // Numerical dust on the support pins the face: a coordinate this
        // small cannot cross zero inside the line search, so it is snapped
        // out before the system is built. The perturbation sits far below
        // the line search's acceptance slack.
        for v in cur.iter_mut() {
            if *v != 0.0 && v.abs() <= 1e-12 * (1.0 + m) {
                *v = 0.0;
            }
        }
        let l1: f64 = cur.iter().map(|v| v.abs()).sum();
        let on_boundary = l1 >= m * (1.0 - 1e-10);
        let mut support: Vec<usize> = (0..dim).filter(|&j| cur[j] != 0.0).collect();
        // Zero coordinates may belong to the optimal face: at an interior
        // optimum the gradient must vanish everywhere, and on the boundary a
        // coordinate whose gradient magnitude sits near the face's dual
        // multiplier may have to enter before the certificate can close. The
        // band is generous because a coordinate just below the multiplier can
        // cross it as the point moves; a coordinate that should stay out gets
        // clamped back to zero by the line search. Candidates join the Newton
        // system largest gradient first, up to the size cap.
        let mut extra: Vec<usize> = (0..dim)
            .filter(|&j| cur[j] == 0.0 && gcur[j] != 0.0)
            .collect();
        if on_boundary {
            let lambda =
                (-cur.iter().zip(&gcur).map(|(a, b)| a * b).sum::<f64>() / m).max(0.0);
            extra.retain(|&j| gcur[j].abs() >= lambda * (1.0 - 1e-3));
        }
        extra.sort_by(|&a, &b| gcur[b].abs().total_cmp(&gcur[a].abs()));
        for j in extra {
            if support.len() >= POLISH_MAX_SUPPORT {
                break;
            }
            support.push(j);
        }
        support.sort_unstable();
        let p = support.len();
        if p == 0 || p > POLISH_MAX_SUPPORT {
            return Ok(best);
        }
        // Entering coordinates take the sign of their descent direction.
        let signs: Vec<f64> = support
            .iter()
            .map(|&j| if cur[j] != 0.0 { cur[j].signum() } else { -gcur[j].signum() })
            .collect();

        // forward-difference Hessian restricted to the support, symmetrized
        // with a whisper of ridge
        let mut hess = vec![0.0; p * p];
        for (a, &j) in support.iter().enumerate() {
            let h = 1e-7 * (1.0 + cur[j].abs());
            let mut xp = cur.clone();
            xp[j] += h;
            let fv = oracle.eval(&xp, &mut gplus);
            if !fv.is_finite() || gplus.iter().any(|g| !g.is_finite()) {
                return Ok(best);
            }
            for (b, &l) in support.iter().enumerate() {
                hess[b * p + a] = (gplus[l] - gcur[l]) / h;
            }
        }
        let mut trace_avg = 0.0;
        for a in 0..p {
            for b in a + 1..p {
                let v = 0.5 * (hess[a * p + b] + hess[b * p + a]);
                hess[a * p + b] = v;
                hess[b * p + a] = v;
            }
            trace_avg += hess[a * p + a];
        }
        trace_avg = (trace_avg / p as f64).abs().max(1e-12);
        for a in 0..p {
            hess[a * p + a] += 1e-12 * trace_avg;
        }

        // Solve the KKT system on the active part of the face. On the
        // boundary the budget row keeps first-order motion inside the face,
        // and an entering coordinate whose solved direction points against
        // its sign is fixed back at zero and the system re-solved, so the
        // step never fights the sign constraints it was built from.
        let mut active = vec![true; p];
        let mut delta = vec![0.0; p];
        loop {
            let act: Vec<usize> = (0..p).filter(|&a| active[a]).collect();
            let q = act.len();
            if q == 0 {
                return Ok(best);
            }
            let k = if on_boundary { q + 1 } else { q };
            let mut sys = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (ai, &a) in act.iter().enumerate() {
                for (bi, &b) in act.iter().enumerate() {
                    sys[bi * k + ai] = hess[b * p + a];
                }
                rhs[ai] = -gcur[support[a]];
            }
            if on_boundary {
                for (ai, &a) in act.iter().enumerate() {
                    sys[ai * k + q] = signs[a];
                    sys[q * k + ai] = signs[a];
                }
                // keep the budget row of the KKT system homogeneous
                rhs[q] = 0.0;
            }
            let Some(sol) = solve_dense(sys, rhs) else {
                return Ok(best);
            };
            delta.fill(0.0);
            for (ai, &a) in act.iter().enumerate() {
                delta[a] = sol[ai];
            }
            if !on_boundary {
                break;
            }
            let mut dropped = false;
            for &a in &act {
                if cur[support[a]] == 0.0 && delta[a] * signs[a] < 0.0 {
                    active[a] = false;
                    dropped = true;
                }
            }
            if !dropped {
                break;
            }
        }

        // Ratio test: the step walks at most to the first support coordinate
        // that reaches zero. Stopping exactly there keeps the budget intact
        // without rescaling, and the next round rebuilds the face without
        // the blocking coordinate.
        let mut t_max = 1.0f64;
        if on_boundary {
            for (a, &j) in support.iter().enumerate() {
                if cur[j] != 0.0 && delta[a] * signs[a] < 0.0 {
                    let tc = -cur[j] / delta[a];
                    if tc < t_max {
                        t_max = tc;
                    }
                }
            }
        }
        if !(t_max > 0.0) {
            return Ok(best);
        }
        let blocked = t_max < 1.0;

        // Line search from the ratio-test step inward. A trial is accepted
        // when it improves the duality gap without raising the objective:
        // near the face optimum the objective is flat to rounding while the
        // gap still moves, so the gap is the quantity to test. A blocked
        // full step is a pivot that only has to hold the objective, since
        // its purpose is to change the face rather than to close the gap.
        let entry_gap = fw_gap(&gcur, &cur, m);
        let mut tstep = t_max;
        let mut accepted = false;
        let mut gap = entry_gap;
        for ls in 0..40 {
            let mut cand = cur.clone();
            let mut ok = true;
            for (a, &j) in support.iter().enumerate() {
                cand[j] += tstep * delta[a];
                if on_boundary && cand[j] * signs[a] < 0.0 {
                    cand[j] = 0.0;
                }
            }
            let pivot = blocked && ls == 0;
            if pivot {
                // coordinates blocking at the ratio-test step sit at zero up
                // to rounding; place them there exactly
                for (a, &j) in support.iter().enumerate() {
                    if cur[j] != 0.0
                        && delta[a] * signs[a] < 0.0
                        && -cur[j] / delta[a] <= t_max * (1.0 + 1e-12)
                    {
                        cand[j] = 0.0;
                    }
                }
            }
            let cl1: f64 = cand.iter().map(|v| v.abs()).sum();
            if on_boundary {
                if cl1 > 0.0 {
                    let scale = m / cl1;
                    for &j in &support {
                        cand[j] *= scale;
                    }
                }
            } else if cl1 > m {
                ok = false;
            }
            if ok {
                let fv = oracle.eval(&cand, &mut gplus);
                let cand_gap = fw_gap(&gplus, &cand, m);
                if fv.is_finite()
                    && gplus.iter().all(|g| g.is_finite())
                    && fv <= fcur + 1e-12 * (1.0 + fcur.abs())
                    && (cand_gap < entry_gap || pivot)
                {
                    cur = cand;
                    fcur = fv;
                    gcur.copy_from_slice(&gplus);
                    gap = cand_gap;
                    accepted = true;
                    break;
                }
            }
            tstep *= 0.5;
        }
        if !accepted {
            return Ok(best);
        }

        if gap < best_gap {
            best_gap = gap;
            best = Some((cur.clone(), fcur, gcur.clone(), gap));
            flat = 0;
        } else if !blocked {
            flat += 1;
            if flat >= 2 {
                return Ok(best);
            }
        }
    }
    Ok(best)
}

fn apg_loop<O: ObjectiveOracle>(
    oracle: &O,
    m: f64,
    opts: &SolveOptions,
    mut x: Vec<f64>,
    mut fx: f64,
    mut gx: Vec<f64>,
    trace: &mut Option<Vec<f64>>,
) -> Result<(Vec<f64>, SolveReport)> {
    let dim = oracle.dimension();
    let mut x_prev = x.clone();
    let mut t = 1.0f64;
    let mut step = 1.0;
    let mut stall = 0usize;
    let mut polish_rounds = 0usize;
    let mut gy = vec![0.0; dim];
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        objective: fx,
        fw_gap: f64::INFINITY,
        step_rule: StepRule::Apg,
        termination: Termination::MaxIter,
        polished: false,
        trace: None,
    };

    for k in 1..=opts.max_iter {
        let mut t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let theta = (t - 1.0) / t_next;
        let y_raw: Vec<f64> = x
            .iter()
            .zip(&x_prev)
            .map(|(&xi, &xp)| xi + theta * (xi - xp))
            .collect();
        let y = project_l1(&y_raw, m)?;
        let fy = check_finite(oracle.eval(&y, &mut gy), "objective", k)?;
        check_grad(&gy, k)?;

        // backtracking proximal step from the extrapolated point
        let mut z = y.clone();
        let mut fz = fy;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = y.iter().zip(&gy).map(|(&yi, &gi)| yi - step * gi).collect();
            let zc = project_l1(&cand, m)?;
            let fzc = oracle.value(&zc);
            if fzc.is_finite() {
                let quad = fy + dot(&gy, &sub(&zc, &y)) + sq_dist(&zc, &y) / (2.0 * step);
                if fzc <= quad + LINE_SEARCH_SLACK * (1.0 + fy.abs()) {
                    z = zc;
                    fz = fzc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }

        // monotone safeguard: never let the accepted objective rise above fx
        if !accepted || fz > fx {
            let mut s2 = step;
            let mut fallback: Option<(Vec<f64>, f64)> = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = x.iter().zip(&gx).map(|(&xi, &gi)| xi - s2 * gi).collect();
                let zc = project_l1(&cand, m)?;
                let fzc = oracle.value(&zc);
                if fzc.is_finite() && fzc <= fx {
                    fallback = Some((zc, fzc));
                    break;
                }
                s2 *= 0.5;
            }
            match fallback {
                Some((zc, fzc)) => {
                    z = zc;
                    fz = fzc;
                }
                None => {
                    z = x.clone();
                    fz = fx;
                }
            }
            t_next = 1.0;
        }

        // momentum reversal restart
        if dot(&sub(&y, &z), &sub(&z, &x)) > 0.0 {
            t_next = 1.0;
        }

        let rel_dec = (fx - fz) / (1.0 + fz.abs());
        x_prev = std::mem::replace(&mut x, z);
        let fx_new = check_finite(oracle.eval(&x, &mut gx), "objective", k)?;
        check_grad(&gx, k)?;
        fx = fx_new.min(fz);
        t = t_next;
        step *= 1.25;
        if let Some(tr) = trace.as_mut() {
            tr.push(fx);
        }

        report.iterations = k;
        report.objective = fx;
        report.fw_gap = fw_gap(&gx, &x, m);
        if report.fw_gap <= opts.tol * (1.0 + fx.abs()) {
            report.converged = true;
            report.termination = Termination::GapCertified;
            return Ok((x, report));
        }
        if rel_dec < STALL_REL {
            stall += 1;
            if stall >= STALL_LIMIT {
                // objective progress saturated before the certificate: try
                // the face refinement, then either finish or stall honestly
                if polish_rounds < POLISH_ROUNDS {
                    polish_rounds += 1;
                    let before = report.fw_gap;
                    if let Some((nx, nfx, ngx, ngap)) = try_polish(oracle, m, &x, fx, &gx)? {
                        x = nx;
                        x_prev = x.clone();
                        fx = nfx;
                        gx = ngx;
                        t = 1.0;
                        report.polished = true;
                        report.objective = fx;
                        report.fw_gap = ngap;
                        if let Some(tr) = trace.as_mut() {
                            tr.push(fx);
                        }
                        if ngap <= opts.tol * (1.0 + fx.abs()) {
                            report.converged = true;
                            report.termination = Termination::GapCertified;
                            return Ok((x, report));
                        }
                        if ngap < before / 3.0 {
                            stall = 0;
                            continue;
                        }
                    }
                }
                report.termination = Termination::Stalled;
                return Ok((x, report));
            }
        } else {
            stall = 0;
        }
    }
    Ok((x, report))
}

fn fw_loop<O: ObjectiveOracle>(
    oracle: &O,
    m: f64,
    opts: &SolveOptions,
    mut x: Vec<f64>,
    mut fx: f64,
    mut gx: Vec<f64>,
    trace: &mut Option<Vec<f64>>,
) -> Result<(Vec<f64>, SolveReport)> {
    let mut stall = 0usize;
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        objective: fx,
        fw_gap: f64::INFINITY,
        step_rule: StepRule::Fw,
        termination: Termination::MaxIter,
        polished: false,
        trace: None,
    };
    for k in 1..=opts.max_iter {
        let (k_star, g_star) = gx
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, &g)| (i, g))
            .unwrap();
        let gap = fw_gap(&gx, &x, m);
        // vertex minimizing the linearization, direction toward it
        let vert_val = -m * g_star.signum();
        let mut gamma = 1.0;
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand = x.iter().map(|&xi| (1.0 - gamma) * xi).collect::<Vec<f64>>();
            cand[k_star] += gamma * vert_val;
            let fc = oracle.value(&cand);
            if fc.is_finite() && fc <= fx - 1e-4 * gamma * gap {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            gamma *= 0.5;
        }
        let rel_dec = if improved {
            (report.objective - fx) / (1.0 + fx.abs())
        } else {
            0.0
        };
        let fx_new = check_finite(oracle.eval(&x, &mut gx), "objective", k)?;
        check_grad(&gx, k)?;
        fx = fx_new;
        if let Some(tr) = trace.as_mut() {
            tr.push(fx);
        }
        report.iterations = k;
        report.objective = fx;
        report.fw_gap = fw_gap(&gx, &x, m);
        if report.fw_gap <= opts.tol * (1.0 + fx.abs()) {
            report.converged = true;
            report.termination = Termination::GapCertified;
            return Ok((x, report));
        }
        if rel_dec < STALL_REL {
            stall += 1;
            if stall >= STALL_LIMIT {
                report.termination = Termination::Stalled;
                return Ok((x, report));
            }
        } else {
            stall = 0;
        }
    }
    Ok((x, report))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_matches_worked_values() {
        assert_eq!(project_l1(&[3.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project_l1(&[2.0, 1.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project_l1(&[0.5, -0.25], 1.0).unwrap(), vec![0.5, -0.25]);
        // exact equality stays untouched
        assert_eq!(project_l1(&[0.75, -0.25], 1.0).unwrap(), vec![0.75, -0.25]);
        assert_eq!(project_l1(&[5.0, -7.0], 0.0).unwrap(), vec![0.0, 0.0]);
        assert!(project_l1(&[1.0], -1.0).is_err());
    }

    #[test]
    fn gap_matches_worked_value() {
        assert_eq!(fw_gap(&[1.0, -2.0], &[0.0, 0.0], 1.0), 2.0);
    }

    /// Quadratic distance objective: the constrained minimizer is the
    /// projection itself, an independent check of the whole loop.
    #[test]
    fn solver_reproduces_l1_projection_of_a_point() {
        let target = vec![2.0, -1.0, 0.5, 0.0, 3.0];
        let oracle = FnOracle {
            dim: 5,
            f: |b: &[f64], g: &mut [f64]| {
                let mut v = 0.0;
                for i in 0..5 {
                    let t = [2.0, -1.0, 0.5, 0.0, 3.0][i];
                    g[i] = 2.0 * (b[i] - t);
                    v += (b[i] - t) * (b[i] - t);
                }
                v
            },
        };
        for m in [0.5, 1.0, 2.5, 7.0] {
            let (beta, report) = minimize_l1ball(&oracle, m, &SolveOptions::default()).unwrap();
            assert!(report.converged, "m={m}: {report:?}");
            let proj = project_l1(&target, m).unwrap();
            for (a, b) in beta.iter().zip(&proj) {
                assert!((a - b).abs() < 1e-6, "m={m}: {beta:?} vs {proj:?}");
            }
        }
    }

    #[test]
    fn exp_objective_puts_all_budget_on_the_free_coordinate() {
        // grid-search oracle over the ball boundary agrees: the minimum of
        // 0.5*exp(b0) - b0 - b1 with |b0|+|b1| <= 1 sits at (0, 1)
        let oracle = FnOracle {
            dim: 2,
            f: |b: &[f64], g: &mut [f64]| {
                g[0] = 0.5 * b[0].exp() - 1.0;
                g[1] = -1.0;
                0.5 * b[0].exp() - b[0] - b[1]
            },
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let n = 4000;
        for i in 0..=n {
            let b0 = -1.0 + 2.0 * i as f64 / n as f64;
            let b1 = 1.0 - b0.abs();
            let v = 0.5 * b0.exp() - b0 - b1;
            if v < best.0 {
                best = (v, b0, b1);
            }
        }
        assert!(best.1.abs() < 1e-3 && (best.2 - 1.0).abs() < 1e-3);

        for rule in [StepRule::Apg, StepRule::Fw] {
            let opts = SolveOptions { step_rule: rule, ..Default::default() };
            let (beta, report) = minimize_l1ball(&oracle, 1.0, &opts).unwrap();
            assert!(report.converged, "{rule:?}: {report:?}");
            assert!(beta[0].abs() < 1e-6, "{rule:?}: {beta:?}");
            assert!((beta[1] - 1.0).abs() < 1e-6, "{rule:?}: {beta:?}");
            assert!((report.objective - -0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_budget_returns_origin_immediately() {
        let oracle = FnOracle {
            dim: 3,
            f: |b: &[f64], g: &mut [f64]| {
                g.copy_from_slice(&[1.0, 1.0, 1.0]);
                b.iter().sum()
            },
        };
        let (beta, report) = minimize_l1ball(&oracle, 0.0, &SolveOptions::default()).unwrap();
        assert_eq!(beta, vec![0.0; 3]);
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.fw_gap, 0.0);
    }

    #[test]
    fn non_finite_objective_is_reported_with_iteration() {
        let oracle = FnOracle {
            dim: 1,
            f: |_: &[f64], g: &mut [f64]| {
                g[0] = f64::NAN;
                f64::NAN
            },
        };
        match minimize_l1ball(&oracle, 1.0, &SolveOptions::default()) {
            Err(HalError::NonFinite { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn objective_trace_is_monotone_nonincreasing() {
        let oracle = FnOracle {
            dim: 4,
            f: |b: &[f64], g: &mut [f64]| {
                // ill-scaled quadratic to exercise backtracking and momentum
                let scale = [100.0, 1.0, 0.01, 10.0];
                let t = [1.0, -2.0, 3.0, 0.2];
                let mut v = 0.0;
                for i in 0..4 {
                    g[i] = 2.0 * scale[i] * (b[i] - t[i]);
                    v += scale[i] * (b[i] - t[i]) * (b[i] - t[i]);
                }
                v
            },
        };
        let opts = SolveOptions { record_trace: true, ..Default::default() };
        let (_, report) = minimize_l1ball(&oracle, 2.0, &opts).unwrap();
        let trace = report.trace.as_ref().unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
        assert!(report.converged);
    }

    #[test]
    fn warm_start_is_projected_into_the_ball() {
        let oracle = FnOracle {
            dim: 2,
            f: |b: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * b[0];
                g[1] = 2.0 * b[1];
                b[0] * b[0] + b[1] * b[1]
            },
        };
        let opts = SolveOptions { init: Some(vec![50.0, -50.0]), ..Default::default() };
        let (beta, report) = minimize_l1ball(&oracle, 1.0, &opts).unwrap();
        assert!(report.converged);
        assert!(beta[0].abs() < 1e-6 && beta[1].abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_nonexpansive(
            v in proptest::collection::vec(-10.0f64..10.0, 1..8),
            w_shift in proptest::collection::vec(-1.0f64..1.0, 8),
            m in 0.0f64..5.0,
        ) {
            let pv = project_l1(&v, m).unwrap();
            let l1: f64 = pv.iter().map(|x| x.abs()).sum();
            prop_assert!(l1 <= m + 1e-9);
            let w: Vec<f64> = v.iter().zip(&w_shift).map(|(a, b)| a + b).collect();
            let pw = project_l1(&w, m).unwrap();
            let before: f64 = v.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
            let after: f64 = pv.iter().zip(&pw).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(after <= before + 1e-9);
        }
    }
}
