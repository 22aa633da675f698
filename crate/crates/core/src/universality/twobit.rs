//! Two visible qubits: the reachable set without hidden qubits, and an
//! exact construction with one hidden qubit.
//!
//! A distribution on two bits is the point `(x, y, z) = (⟨Z1⟩, ⟨Z2⟩, ⟨Z1Z2⟩)`
//! of the tetrahedron `−1 + |x + y| ≤ z ≤ 1 − |x − y|`. With phases
//! `(θ1, θ2, θ3)` on `10`, `01`, `11` and `θ3 = θ1 + θ2 + δ`, one branch
//! reaches `(au, av, uv)` with `a = cos(δ/2)`, `u = cos(θ1 + δ/2)`,
//! `v = cos(θ2 + δ/2)`; a hidden qubit averages two such branches.

use std::f64::consts::PI;

use crate::circuit::IqpCircuit;
use crate::dist::{tvd, ProbVector};
use crate::error::{Error, Result};

const TETRA_TOL: f64 = 1e-9;

/// `(⟨Z1⟩, ⟨Z2⟩, ⟨Z1Z2⟩)` of a two-bit distribution.
pub fn tetrahedron_coords(p: &ProbVector) -> Result<(f64, f64, f64)> {
    if p.n() != 2 {
        return Err(Error::WidthMismatch {
            expected: 2,
            actual: p.n(),
        });
    }
    let m = p.mass();
    Ok((
        m[0] + m[1] - m[2] - m[3],
        m[0] - m[1] + m[2] - m[3],
        m[0] - m[1] - m[2] + m[3],
    ))
}

fn from_coords(x: f64, y: f64, z: f64) -> [f64; 4] {
    [
        0.25 * (1.0 + x + y + z),
        0.25 * (1.0 + x - y - z),
        0.25 * (1.0 - x + y - z),
        0.25 * (1.0 - x - y + z),
    ]
}

/// Output of the two-qubit, no-hidden model with phases `θ1` on `10`,
/// `θ2` on `01` and `θ3` on `11`.
pub fn two_bit_model_distribution(t1: f64, t2: f64, t3: f64) -> [f64; 4] {
    let x = 0.5 * (t1.cos() + (t2 - t3).cos());
    let y = 0.5 * (t2.cos() + (t1 - t3).cos());
    let z = 0.5 * (t3.cos() + (t1 - t2).cos());
    from_coords(x, y, z)
}

/// Smallest TVD to `target` over the grid `θ_i ∈ {2πk/steps}` of the
/// no-hidden two-qubit model, with the minimising angles.
pub fn min_tvd_on_angle_grid(target: &ProbVector, steps: usize) -> Result<(f64, [f64; 3])> {
    if target.n() != 2 {
        return Err(Error::WidthMismatch {
            expected: 2,
            actual: target.n(),
        });
    }
    if steps == 0 {
        return Err(Error::invalid("angle grid needs at least one step"));
    }
    let t = target.mass();
    let angle = |k: usize| 2.0 * PI * k as f64 / steps as f64;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..steps {
        for j in 0..steps {
            for k in 0..steps {
                let (a, b, c) = (angle(i), angle(j), angle(k));
                let q = two_bit_model_distribution(a, b, c);
                let d = 0.5 * q.iter().zip(t).map(|(u, v)| (u - v).abs()).sum::<f64>();
                if d < best.0 {
                    best = (d, [a, b, c]);
                }
            }
        }
    }
    Ok(best)
}

/// Branch parameters `(a, u, v)` for the canonical region `x ≥ y ≥ 0`.
fn solve_canonical(x: f64, y: f64, z: f64) -> [(f64, f64, f64); 2] {
    if x > 0.5 {
        let b = 2.0 * z - 2.0 * y;
        let c = 2.0 * x - 1.0;
        let a_t = ((-b + (b * b + 4.0 * c).sqrt()) / 2.0).clamp(c, 1.0);
        let u_t = c / a_t;
        let v = 2.0 * y - a_t;
        [(1.0, 1.0, v), (a_t, u_t, 1.0)]
    } else {
        let v = (y - z) / (1.0 - x);
        let v_t = 2.0 * y - (1.0 - 2.0 * x) * v;
        [(1.0 - 2.0 * x, -1.0, v), (1.0, 1.0, v_t)]
    }
}

fn branch_phases(a: f64, u: f64, v: f64) -> [f64; 4] {
    let delta = 2.0 * a.clamp(0.0, 1.0).acos();
    let t1 = u.clamp(-1.0, 1.0).acos() - delta / 2.0;
    let t2 = v.clamp(-1.0, 1.0).acos() - delta / 2.0;
    // Index order 00, 01, 10, 11: qubit 1 is the leading bit.
    [0.0, t2, t1, t1 + t2 + delta]
}

/// One-hidden-qubit circuit (dense diagonal over 3 qubits) reproducing any
/// two-bit distribution.
pub fn solve_two_bit_hidden(p: &ProbVector) -> Result<IqpCircuit> {
    let (x0, y0, z0) = tetrahedron_coords(p)?;
    if z0 < -1.0 + (x0 + y0).abs() - TETRA_TOL || z0 > 1.0 - (x0 - y0).abs() + TETRA_TOL {
        return Err(Error::InvalidDistribution(format!(
            "({x0}, {y0}, {z0}) lies outside the tetrahedron"
        )));
    }
    // Reflect into x ≥ y ≥ 0: negating x (or y) flips the sign of u (or v)
    // and of z; swapping x and y swaps u and v.
    let (flip_x, flip_y) = (x0 < 0.0, y0 < 0.0);
    let (mut x, mut y) = (x0.abs(), y0.abs());
    let z = z0 * if flip_x != flip_y { -1.0 } else { 1.0 };
    let swap = y > x;
    if swap {
        std::mem::swap(&mut x, &mut y);
    }
    let branches = solve_canonical(x, y, z);
    let mut phases = Vec::with_capacity(8);
    for (a, mut u, mut v) in branches {
        if swap {
            std::mem::swap(&mut u, &mut v);
        }
        if flip_x {
            u = -u;
        }
        if flip_y {
            v = -v;
        }
        phases.extend(branch_phases(a, u, v));
    }
    let c = IqpCircuit::with_dense(2, 1, phases)?;
    let q = crate::sim::exact_visible_distribution(&c)?;
    let err = tvd(p, &q)?;
    if err > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "two-bit construction missed the target by {err:e}"
        )));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::IqpCircuit;
    use crate::rng::stream_rng;
    use crate::sim::exact_visible_distribution;
    use rand::Rng;

    fn third() -> ProbVector {
        ProbVector::new(2, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]).unwrap()
    }

    #[test]
    fn closed_form_matches_simulator() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..50 {
            let (a, b, c): (f64, f64, f64) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let circ = IqpCircuit::with_dense(2, 0, vec![0.0, b, a, c]).unwrap();
            let q = exact_visible_distribution(&circ).unwrap();
            for (x, y) in q.mass().iter().zip(two_bit_model_distribution(a, b, c)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coords_of_examples() {
        let (x, y, z) = tetrahedron_coords(&third()).unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-15 && (y - 1.0 / 3.0).abs() < 1e-15);
        assert!((z + 1.0 / 3.0).abs() < 1e-15);
        let (x, y, z) = tetrahedron_coords(&ProbVector::uniform(2).unwrap()).unwrap();
        assert_eq!((x, y, z), (0.0, 0.0, 0.0));
    }

    #[test]
    fn case_b_example_parameters() {
        let [(_, _, v), (_, _, v_t)] = solve_canonical(1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((v_t - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hidden_qubit_reaches_everything() {
        let mut targets = vec![
            third(),
            ProbVector::uniform(2).unwrap(),
            ProbVector::new(2, vec![0.5, 0.0, 0.0, 0.5]).unwrap(),
            ProbVector::delta("10".parse().unwrap()).unwrap(),
            ProbVector::new(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap(),
        ];
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>().powi(2)).collect();
            let s: f64 = v.iter().sum();
            targets.push(ProbVector::new(2, v.iter().map(|x| x / s).collect()).unwrap());
        }
        for p in &targets {
            let c = solve_two_bit_hidden(p).unwrap();
            let q = exact_visible_distribution(&c).unwrap();
            assert!(tvd(p, &q).unwrap() <= 1e-9, "{:?}", p.mass());
        }
    }

    #[test]
    fn no_hidden_model_misses_three_sparse_target() {
        let (floor, _) = min_tvd_on_angle_grid(&third(), 60).unwrap();
        assert!(floor > 0.01, "floor {floor}");
        let (hit, _) = min_tvd_on_angle_grid(&ProbVector::uniform(2).unwrap(), 8).unwrap();
        assert!(hit < 1e-12);
    }
}
