//! Exact statevector simulation of IQP circuits with hidden qubits, and the
//! Monte-Carlo estimator of visible Pauli-Z expectations.
//!
//! For a generator-mode circuit on `m` hidden and `n` visible qubits,
//!
//! ```text
//! ⟨Z_α⟩ = E_{x ~ U(m+n)} cos( Σ_j θ_j (-1)^{g_j·x} (1 - (-1)^{g_j^vis·α}) )
//! ```
//!
//! where `g_j^vis` is the visible part of the generator mask. Only gates whose
//! visible support has odd overlap with `α` contribute, each with weight `2θ_j`.

use num_complex::Complex64;
use rand::Rng;

use crate::circuit::{Diagonal, IqpCircuit};
use crate::dist::{fwht, parity_sign, BitString, ProbVector, MAX_DENSE_BITS};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};

/// Monte-Carlo estimate of `⟨Z_α⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// How the uniform `(y, z)` pairs of the estimator are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    /// `S` independent uniform strings over the whole register.
    Paired(usize),
    /// Full cross product of `hidden` hidden strings with `visible` visible
    /// strings.
    Cross { hidden: usize, visible: usize },
}

impl Shots {
    pub fn total(&self) -> usize {
        match *self {
            Shots::Paired(s) => s,
            Shots::Cross { hidden, visible } => hidden * visible,
        }
    }

    /// Splits the budget into two equal independent halves.
    pub fn halves(&self) -> Result<Shots> {
        match *self {
            Shots::Paired(s) if s >= 2 => Ok(Shots::Paired(s / 2)),
            Shots::Cross { hidden, visible } if visible >= 2 && hidden >= 1 => Ok(Shots::Cross {
                hidden,
                visible: visible / 2,
            }),
            _ => Err(Error::invalid("shot budget must allow two halves of at least one draw")),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shots::Paired(s) => s >= 1,
            Shots::Cross { hidden, visible } => hidden >= 1 && visible >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("sample counts must be at least 1"))
        }
    }
}

fn check_exact_size(c: &IqpCircuit) -> Result<()> {
    if c.total_width() > MAX_DENSE_BITS {
        return Err(Error::SizeCap {
            what: "exact simulation",
            requested: c.total_width(),
            limit: MAX_DENSE_BITS,
        });
    }
    Ok(())
}

/// `Φ(x)` for every basis state of the full register.
fn phase_table(c: &IqpCircuit) -> Vec<f64> {
    match c.diagonal() {
        Diagonal::Dense(p) => p.clone(),
        Diagonal::Generators(gates) => {
            // Φ(x) = Σ_g θ_g (-1)^{g·x} is the Walsh transform of the angles
            // placed at their masks.
            let mut table = vec![0.0; 1usize << c.total_width()];
            for g in gates {
                table[g.mask.index()] += g.angle;
            }
            fwht(&mut table);
            table
        }
    }
}

/// Complex in-place Walsh–Hadamard butterfly.
fn fwht_complex(v: &mut [Complex64]) {
    let len = v.len();
    let mut h = 1;
    while h < len {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Visible amplitudes `⟨s| H^{⊗n} |ψ_k⟩` for hidden branch `k`.
fn branch_amplitudes(phases: &[f64], n: usize, k: usize) -> Vec<Complex64> {
    let dim = 1usize << n;
    let scale = 1.0 / dim as f64;
    let mut amp: Vec<Complex64> = phases[k * dim..(k + 1) * dim]
        .iter()
        .map(|&t| Complex64::from_polar(scale, t))
        .collect();
    fwht_complex(&mut amp);
    amp
}

/// Output distribution over the visible qubits: the uniform mixture over
/// hidden branches `k` of `|⟨s̃|ψ_k⟩|²`.
pub fn exact_visible_distribution(c: &IqpCircuit) -> Result<ProbVector> {
    check_exact_size(c)?;
    let n = c.n_visible();
    let branches = 1usize << c.m_hidden();
    let phases = phase_table(c);
    let mut q = vec![0.0; 1usize << n];
    let w = 1.0 / branches as f64;
    for k in 0..branches {
        for (qs, a) in q.iter_mut().zip(branch_amplitudes(&phases, n, k)) {
            *qs += w * a.norm_sqr();
        }
    }
    ProbVector::new(n, q)
}

/// `⟨Z_α⟩ = Σ_s q(s) (-1)^{α·s}` under exact simulation.
pub fn exact_z_expectation(c: &IqpCircuit, alpha: BitString) -> Result<f64> {
    if alpha.width() != c.n_visible() {
        return Err(Error::WidthMismatch {
            expected: c.n_visible(),
            actual: alpha.width(),
        });
    }
    let q = exact_visible_distribution(c)?;
    Ok(q
        .mass()
        .iter()
        .enumerate()
        .map(|(s, &p)| p * parity_sign(alpha.bits(), s as u64))
        .sum())
}

/// Exact `∂q(s)/∂θ_j` for every gate `j` of a generator-mode circuit.
pub fn exact_distribution_jacobian(c: &IqpCircuit) -> Result<Vec<Vec<f64>>> {
    check_exact_size(c)?;
    let gates = c.gates()?;
    let n = c.n_visible();
    let dim = 1usize << n;
    let branches = 1usize << c.m_hidden();
    let phases = phase_table(c);
    let w = 1.0 / branches as f64;
    let mut jac = vec![vec![0.0; dim]; gates.len()];
    for k in 0..branches {
        let amp = branch_amplitudes(&phases, n, k);
        for (j, g) in gates.iter().enumerate() {
            let mut d: Vec<Complex64> = (0..dim)
                .map(|y| {
                    let x = ((k << n) | y) as u64;
                    let t = phases[x as usize];
                    Complex64::i() * parity_sign(g.mask.bits(), x) * Complex64::from_polar(1.0 / dim as f64, t)
                })
                .collect();
            fwht_complex(&mut d);
            for ((js, a), da) in jac[j].iter_mut().zip(&amp).zip(&d) {
                *js += w * 2.0 * (a.conj() * da).re;
            }
        }
    }
    Ok(jac)
}

/// A generator-mode circuit compiled for repeated Monte-Carlo evaluation.
#[derive(Clone, Debug)]
pub(crate) struct CompiledCircuit {
    n_visible: usize,
    m_hidden: usize,
    masks: Vec<u64>,
    angles: Vec<f64>,
}

/// Per-frequency sample statistics.
#[derive(Clone, Debug)]
pub(crate) struct ZStats {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `∂⟨Z_α⟩/∂θ_j` estimates, one per gate, when requested.
    pub grad: Option<Vec<f64>>,
}

impl CompiledCircuit {
    pub fn new(c: &IqpCircuit) -> Result<Self> {
        let gates = c.gates()?;
        Ok(Self {
            n_visible: c.n_visible(),
            m_hidden: c.m_hidden(),
            masks: gates.iter().map(|g| g.mask.bits()).collect(),
            angles: gates.iter().map(|g| g.angle).collect(),
        })
    }

    pub fn num_gates(&self) -> usize {
        self.masks.len()
    }

    fn random_bits(rng: &mut SimRng, width: usize) -> u64 {
        let r: u64 = rng.random();
        if width >= 64 {
            r
        } else {
            r & ((1u64 << width) - 1)
        }
    }

    pub fn z_stats(&self, alpha: u64, shots: Shots, rng: &mut SimRng, want_grad: bool) -> ZStats {
        let n = self.n_visible;
        let vis = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut act_idx = Vec::new();
        let mut act_mask = Vec::new();
        let mut act_w = Vec::new();
        for (j, (&m, &a)) in self.masks.iter().zip(&self.angles).enumerate() {
            if (m & vis & alpha).count_ones() & 1 == 1 {
                act_idx.push(j);
                act_mask.push(m);
                act_w.push(2.0 * a);
            }
        }
        let mut sin_acc = vec![0.0; if want_grad { act_idx.len() } else { 0 }];
        let mut eval = |x: u64| -> f64 {
            let mut arg = 0.0;
            for (&m, &w) in act_mask.iter().zip(&act_w) {
                arg += w * parity_sign(m, x);
            }
            if want_grad && !act_mask.is_empty() {
                let s = arg.sin();
                for (acc, &m) in sin_acc.iter_mut().zip(&act_mask) {
                    *acc += s * parity_sign(m, x);
                }
            }
            arg.cos()
        };

        let (mean, std_error, total) = match shots {
            Shots::Paired(s) => {
                let width = n + self.m_hidden;
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..s {
                    let v = eval(Self::random_bits(rng, width));
                    sum += v;
                    sum_sq += v * v;
                }
                let mean = sum / s as f64;
                (mean, std_err(sum, sum_sq, s), s)
            }
            Shots::Cross { hidden, visible } => {
                let ys: Vec<u64> = (0..hidden)
                    .map(|_| Self::random_bits(rng, self.m_hidden) << n)
                    .collect();
                let zs: Vec<u64> = (0..visible).map(|_| Self::random_bits(rng, n)).collect();
                let mut row = vec![0.0; hidden];
                let mut col = vec![0.0; visible];
                for (ri, &y) in ys.iter().enumerate() {
                    for (ci, &z) in zs.iter().enumerate() {
                        let v = eval(y | z);
                        row[ri] += v;
                        col[ci] += v;
                    }
                }
                let total = hidden * visible;
                let mean = row.iter().sum::<f64>() / total as f64;
                row.iter_mut().for_each(|r| *r /= visible as f64);
                col.iter_mut().for_each(|c| *c /= hidden as f64);
                let var_row = sample_var(&row);
                let var_col = sample_var(&col);
                let se = (var_row / hidden as f64 + var_col / visible as f64).sqrt();
                (mean, se, total)
            }
        };

        let grad = want_grad.then(|| {
            let mut g = vec![0.0; self.masks.len()];
            for (&j, &acc) in act_idx.iter().zip(&sin_acc) {
                g[j] = -2.0 * acc / total as f64;
            }
            g
        });
        ZStats {
            mean,
            std_error,
            samples: total,
            grad,
        }
    }
}

fn std_err(sum: f64, sum_sq: f64, count: usize) -> f64 {
    if count < 2 {
        return 0.0;
    }
    let c = count as f64;
    let mean = sum / c;
    let var = ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0);
    (var / c).sqrt()
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn check_alpha(c: &IqpCircuit, alpha: BitString) -> Result<()> {
    if alpha.width() != c.n_visible() {
        return Err(Error::WidthMismatch {
            expected: c.n_visible(),
            actual: alpha.width(),
        });
    }
    Ok(())
}

/// Unbiased Monte-Carlo estimate of `⟨Z_α⟩`. Draws come from stream
/// `α` of the generator keyed by `seed`.
pub fn mc_z_expectation(c: &IqpCircuit, alpha: BitString, shots: Shots, seed: u64) -> Result<ZEstimate> {
    check_alpha(c, alpha)?;
    shots.validate()?;
    let compiled = CompiledCircuit::new(c)?;
    let mut rng = stream_rng(seed, alpha.bits());
    let s = compiled.z_stats(alpha.bits(), shots, &mut rng, false);
    Ok(ZEstimate {
        value: s.mean,
        std_error: s.std_error,
        samples: s.samples,
    })
}

/// Unbiased estimate of `∂⟨Z_α⟩/∂θ_j` for every gate, from the same draws
/// [`mc_z_expectation`] would use.
pub fn mc_z_gradient(c: &IqpCircuit, alpha: BitString, shots: Shots, seed: u64) -> Result<Vec<f64>> {
    check_alpha(c, alpha)?;
    shots.validate()?;
    let compiled = CompiledCircuit::new(c)?;
    let mut rng = stream_rng(seed, alpha.bits());
    Ok(compiled
        .z_stats(alpha.bits(), shots, &mut rng, true)
        .grad
        .expect("gradient requested"))
}
