//! Dense-diagonal circuits that reproduce a target distribution.

use std::f64::consts::PI;

use crate::circuit::IqpCircuit;
use crate::dist::{BitString, ProbVector};
use crate::error::{Error, Result};

use super::decompose::decompose_2sparse;
use super::uma::phases_for_2sparse;

/// Largest visible width for [`build_universal_circuit`] (`2n + 1` qubits).
pub const MAX_UNIVERSAL_BITS: usize = 8;

/// Circuit with `n + 1` hidden qubits whose visible marginal is `p`
/// exactly: hidden branch `k` encodes the `k`-th two-sparse component.
pub fn build_universal_circuit(p: &ProbVector) -> Result<IqpCircuit> {
    let n = p.n();
    if n > MAX_UNIVERSAL_BITS {
        return Err(Error::SizeCap {
            what: "universal construction",
            requested: n,
            limit: MAX_UNIVERSAL_BITS,
        });
    }
    let comps = decompose_2sparse(p.mass())?;
    let mut phases = Vec::with_capacity(comps.len() << n);
    for c in &comps {
        let s1 = BitString::new(c.support()[0] as u64, n)?;
        let (s2, w) = match c.support().get(1) {
            Some(&b) => (BitString::new(b as u64, n)?, c.weights()[0]),
            None => (s1, 1.0),
        };
        phases.extend(phases_for_2sparse(n, s1, s2, w.clamp(0.0, 1.0))?);
    }
    IqpCircuit::with_dense(n, n + 1, phases)
}

/// Counts `c_s` with `Σ c_s = 2^m` and `|c_s/2^m − p_s| < 2^{−m}`:
/// floors of `2^m p_s`, with the shortfall given to the entries with the
/// largest fractional parts (ties to the lower index).
pub fn grid_counts(p: &ProbVector, m: usize) -> Result<Vec<u64>> {
    if m > 40 {
        return Err(Error::SizeCap {
            what: "grid resolution",
            requested: m,
            limit: 40,
        });
    }
    let scale = (1u64 << m) as f64;
    let mut counts: Vec<u64> = p.mass().iter().map(|&v| (v * scale).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let total = 1u64 << m;
    if assigned > total {
        return Err(Error::InvalidDistribution("masses exceed one after rounding".into()));
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let frac = |j: usize| p.mass()[j] * scale - counts[j] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    for &j in order.iter().take((total - assigned) as usize) {
        counts[j] += 1;
    }
    Ok(counts)
}

/// Circuit with `m` hidden qubits and phases in `{0, π}`: hidden index `j`
/// deterministically emits one string, so the output is the grid
/// distribution from [`grid_counts`], within `2^{n−1−m}` of `p` in TVD.
pub fn build_grid_circuit(p: &ProbVector, m: usize) -> Result<IqpCircuit> {
    let n = p.n();
    let width = n + m;
    if width > crate::circuit::MAX_DENSE_DIAGONAL_BITS {
        return Err(Error::SizeCap {
            what: "grid construction",
            requested: width,
            limit: crate::circuit::MAX_DENSE_DIAGONAL_BITS,
        });
    }
    let counts = grid_counts(p, m)?;
    let mut phases = Vec::with_capacity(1 << width);
    for (s, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            phases.extend((0..1u64 << n).map(|y| {
                if (s as u64 & y).count_ones() % 2 == 1 {
                    PI
                } else {
                    0.0
                }
            }));
        }
    }
    IqpCircuit::with_dense(n, m, phases)
}
