//! Low-discrepancy point sets for cube integrals.
//!
//! A small Sobol generator with hardcoded direction numbers for up to seven
//! dimensions, which is plenty for the desk-scale integrals in this crate.
//! Points are generated in Gray-code order so the full set of any length is
//! deterministic; there is no scrambling.

use crate::error::{HalError, Result};

/// Joe-Kuo parameters per dimension beyond the first: (degree, a, m values).
const DIRECTIONS: [(u32, u32, &[u32]); 6] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
];

const BITS: u32 = 31;

/// First `n` points of the Sobol sequence in `d` dimensions.
///
/// The point at index 0 is the origin, as in the plain (unshifted) sequence.
pub fn sobol_points(n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > DIRECTIONS.len() + 1 {
        return Err(HalError::TooLarge(format!(
            "sobol_points supports 1 <= d <= {}, got {d}",
            DIRECTIONS.len() + 1
        )));
    }
    if n as u64 >= 1u64 << BITS {
        return Err(HalError::TooLarge(format!("n = {n} exceeds 2^{BITS} points")));
    }

    // direction vectors, one set of BITS numbers per dimension
    let mut v = vec![[0u32; BITS as usize]; d];
    for k in 0..BITS as usize {
        v[0][k] = 1u32 << (BITS - 1 - k as u32);
    }
    for (dim, &(s, a, m)) in DIRECTIONS.iter().enumerate().take(d.saturating_sub(1)) {
        let s = s as usize;
        let vd = &mut v[dim + 1];
        for k in 0..BITS as usize {
            if k < s {
                vd[k] = m[k] << (BITS - 1 - k as u32);
            } else {
                let mut val = vd[k - s] ^ (vd[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        val ^= vd[k - j];
                    }
                }
                vd[k] = val;
            }
        }
    }

    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut state = vec![0u32; d];
    let mut out = Vec::with_capacity(n);
    out.push(vec![0.0; d]);
    for i in 1..n as u64 {
        let c = (i - 1).trailing_ones() as usize;
        for j in 0..d {
            state[j] ^= v[j][c];
        }
        out.push(state.iter().map(|&x| x as f64 * scale).collect());
    }
    out.truncate(n);
    Ok(out)
}

/// Average of `f` over the Sobol point set, an estimate of the cube integral.
pub fn qmc_integral<F: Fn(&[f64]) -> f64>(f: F, n: usize, d: usize) -> Result<f64> {
    let pts = sobol_points(n, d)?;
    Ok(pts.iter().map(|p| f(p)).sum::<f64>() / n as f64)
}
