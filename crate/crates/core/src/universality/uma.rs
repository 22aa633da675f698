//! Phase patterns of uniform-magnitude states that put weight `p` on one
//! X-basis product state and `1 − p` on another.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dist::{parity_sign, BitString};
use crate::error::{Error, Result};

const MAGNITUDE_TOL: f64 = 1e-9;

/// Phases `θ_y` of `|ψ⟩ = 2^{−n/2} Σ_y e^{iθ_y}|y⟩` such that
/// `|⟨s̃1|ψ⟩|² = p` and `|⟨s̃2|ψ⟩|² = 1 − p`, where `s̃ = H^{⊗n}|s⟩`.
///
/// One differing position `d` carries the single-qubit state
/// `(|0⟩ + e^{iθ}|1⟩)/√2` with `cos²(θ/2) = p`, the other qubits carry
/// `s̃1`, and an X-controlled `Z`-string maps `|−⟩|s̃1'⟩` onto `|−⟩|s̃2'⟩`.
/// In the computational basis that controlled gate is a permutation, so
/// the magnitudes stay uniform.
pub fn phases_for_2sparse(n: usize, s1: BitString, s2: BitString, p: f64) -> Result<Vec<f64>> {
    for s in [s1, s2] {
        if s.width() != n {
            return Err(Error::WidthMismatch {
                expected: n,
                actual: s.width(),
            });
        }
    }
    if n > 24 {
        return Err(Error::SizeCap {
            what: "phase pattern",
            requested: n,
            limit: 24,
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("weight {p} outside [0, 1]")));
    }
    let dim = 1u64 << n;
    let pattern = |s: BitString| -> Vec<f64> {
        (0..dim)
            .map(|y| if (s.bits() & y).count_ones() % 2 == 1 { PI } else { 0.0 })
            .collect()
    };
    if p == 1.0 {
        return Ok(pattern(s1));
    }
    if p == 0.0 {
        return Ok(pattern(s2));
    }
    if s1 == s2 {
        return Err(Error::invalid(
            "identical outcomes need weight 0 or 1",
        ));
    }

    let diff = s1.bits() ^ s2.bits();
    let d_bit = 1u64 << (63 - diff.leading_zeros());
    let (s1, p) = if s1.bits() & d_bit != 0 { (s2, 1.0 - p) } else { (s1, p) };
    let theta = 2.0 * p.sqrt().min(1.0).acos();
    let control = diff & !d_bit;

    let norm = (dim as f64).sqrt().recip();
    let mut phases = Vec::with_capacity(dim as usize);
    for y in 0..dim {
        let src = if (control & y).count_ones() % 2 == 1 { y ^ d_bit } else { y };
        let seed_phase = if src & d_bit != 0 { theta } else { 0.0 };
        let amp = Complex64::from_polar(norm, seed_phase) * parity_sign(s1.bits(), src);
        if (amp.norm() - norm).abs() > MAGNITUDE_TOL {
            return Err(Error::invalid("phase construction lost uniform magnitude"));
        }
        phases.push(amp.arg());
    }
    Ok(phases)
}
