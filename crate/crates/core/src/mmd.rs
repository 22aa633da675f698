//! Spectral MMD between a dataset (or target distribution) and an IQP model.
//!
//! For a stationary kernel with spectral measure `G`,
//! `MMD² = Σ_α G(α) (φ_p(α) − φ_q(α))²`. The Monte-Carlo path samples
//! frequencies from `G`, computes the data side exactly over the dataset and
//! estimates the circuit side twice from independent shot halves `A`, `B`, so
//! that `(d − Ẑ_A)(d − Ẑ_B)` is unbiased for `(d − ⟨Z_α⟩)²`.

use rayon::prelude::*;

use crate::circuit::IqpCircuit;
use crate::dist::{BitString, Dataset, ProbVector};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::sim::{exact_distribution_jacobian, exact_visible_distribution, CompiledCircuit, Shots};
use crate::spectral::{Fvsbn, FvsbnGrad, SpectralMeasure};

/// Largest width accepted by the enumerating (exact) MMD routines.
pub const MAX_EXACT_MMD_BITS: usize = 20;

const FREQ_TAG: u64 = 0x6672_6571;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdEstimate {
    /// Mean of the per-frequency products; may dip slightly below zero.
    pub value: f64,
    /// Standard error of `value` over the frequency batch.
    pub std_error: f64,
    pub freq_batch: usize,
    pub shots: Shots,
    pub seed: u64,
}

/// Loss estimate and gradients from one shared frequency batch.
#[derive(Clone, Debug)]
pub struct MmdBatch {
    pub estimate: MmdEstimate,
    pub grad_theta: Option<Vec<f64>>,
    /// Ascent direction of the loss in the critic's parameters.
    pub grad_gamma: Option<FvsbnGrad>,
}

fn check_exact_width(n: usize) -> Result<()> {
    if n > MAX_EXACT_MMD_BITS {
        return Err(Error::SizeCap {
            what: "exact MMD enumeration",
            requested: n,
            limit: MAX_EXACT_MMD_BITS,
        });
    }
    Ok(())
}

fn check_pair(p: &ProbVector, q: &ProbVector, g: &dyn SpectralMeasure) -> Result<()> {
    for w in [q.n(), g.n()] {
        if w != p.n() {
            return Err(Error::WidthMismatch {
                expected: p.n(),
                actual: w,
            });
        }
    }
    check_exact_width(p.n())
}

/// Characteristic-function differences `φ_p(α) − φ_q(α)` for every `α`.
fn spectral_difference(p: &ProbVector, q: &ProbVector) -> Vec<f64> {
    let fp = p.char_spectrum();
    let fq = q.char_spectrum();
    fp.values().iter().zip(fq.values()).map(|(a, b)| a - b).collect()
}

/// `Σ_α G(α)(φ_p(α) − φ_q(α))²` by enumeration.
pub fn mmd_exact(p: &ProbVector, q: &ProbVector, g: &dyn SpectralMeasure) -> Result<f64> {
    check_pair(p, q, g)?;
    let delta = spectral_difference(p, q);
    let masses = g.masses()?;
    Ok(masses.iter().zip(&delta).map(|(m, d)| m * d * d).sum())
}

/// Exact `∂/∂θ_j mmd_exact(target, q_θ, G)` for a generator-mode circuit.
pub fn mmd_exact_grad_theta(target: &ProbVector, c: &IqpCircuit, g: &dyn SpectralMeasure) -> Result<Vec<f64>> {
    let q = exact_visible_distribution(c)?;
    check_pair(target, &q, g)?;
    let masses = g.masses()?;
    // ∂MMD/∂q(s) = −2 Σ_α G(α) Δ(α) (−1)^{α·s}
    let mut dq: Vec<f64> = spectral_difference(target, &q)
        .iter()
        .zip(&masses)
        .map(|(d, m)| -2.0 * d * m)
        .collect();
    crate::dist::fwht(&mut dq);
    let jac = exact_distribution_jacobian(c)?;
    Ok(jac
        .iter()
        .map(|row| row.iter().zip(&dq).map(|(a, b)| a * b).sum())
        .collect())
}

/// Exact `∇_γ Σ_α G_γ(α)(φ_p − φ_q)²` for an FVSBN critic.
pub fn mmd_exact_grad_gamma(p: &ProbVector, q: &ProbVector, f: &Fvsbn) -> Result<FvsbnGrad> {
    check_pair(p, q, f)?;
    let delta = spectral_difference(p, q);
    let n = p.n();
    let mut out = FvsbnGrad::zeros(n);
    for (a, d) in delta.iter().enumerate() {
        let alpha = BitString::new(a as u64, n)?;
        let w = f.mass(alpha) * d * d;
        let score = f.grad_log_mass(alpha);
        for (o, s) in out.b.iter_mut().zip(&score.b) {
            *o += w * s;
        }
        for (o, s) in out.w.iter_mut().zip(&score.w) {
            *o += w * s;
        }
    }
    Ok(out)
}

/// Draws `k` frequencies i.i.d. from `g`; the batch used by every
/// estimator keyed by `seed`.
pub fn sample_frequencies(g: &dyn SpectralMeasure, k: usize, seed: u64) -> Vec<BitString> {
    let mut rng = stream_rng(derive_seed(seed, &[FREQ_TAG]), 0);
    (0..k).map(|_| g.sample_with(&mut rng)).collect()
}

struct FreqTerm {
    product: f64,
    grad: Option<Vec<f64>>,
}

fn check_inputs(data: &Dataset, c: &IqpCircuit, k: usize, shots: Shots) -> Result<Shots> {
    if data.n() != c.n_visible() {
        return Err(Error::WidthMismatch {
            expected: c.n_visible(),
            actual: data.n(),
        });
    }
    if k < 2 {
        return Err(Error::invalid("frequency batch must hold at least 2 frequencies"));
    }
    c.gates()?;
    shots.halves()
}

/// Estimates the loss, and optionally both gradients, on the frequencies
/// `freqs`. Shot half `h ∈ {0, 1}` of frequency `k` draws from
/// `derive_seed(seed, [k, h])`, stream `α_k`.
pub fn mmd_batch(
    data: &Dataset,
    c: &IqpCircuit,
    freqs: &[BitString],
    shots: Shots,
    seed: u64,
    want_theta: bool,
    critic: Option<&Fvsbn>,
) -> Result<MmdBatch> {
    let half = check_inputs(data, c, freqs.len(), shots)?;
    if let Some(&bad) = freqs.iter().find(|a| a.width() != c.n_visible()) {
        return Err(Error::WidthMismatch {
            expected: c.n_visible(),
            actual: bad.width(),
        });
    }
    if let Some(f) = critic {
        if f.n() != c.n_visible() {
            return Err(Error::WidthMismatch {
                expected: c.n_visible(),
                actual: f.n(),
            });
        }
    }
    let compiled = CompiledCircuit::new(c)?;
    let terms: Vec<FreqTerm> = freqs
        .par_iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let d = data.z_expectation(alpha).expect("width checked");
            let mut ra = stream_rng(derive_seed(seed, &[k as u64, 0]), alpha.bits());
            let mut rb = stream_rng(derive_seed(seed, &[k as u64, 1]), alpha.bits());
            let a = compiled.z_stats(alpha.bits(), half, &mut ra, want_theta);
            let b = compiled.z_stats(alpha.bits(), half, &mut rb, want_theta);
            let (ea, eb) = (d - a.mean, d - b.mean);
            // Each difference factor is paired with the gradient from the
            // other half; averaging both pairings keeps the estimate unbiased.
            let grad = match (a.grad, b.grad) {
                (Some(ga), Some(gb)) => Some(
                    ga.iter()
                        .zip(&gb)
                        .map(|(da, db)| -(ea * db + eb * da))
                        .collect(),
                ),
                _ => None,
            };
            FreqTerm {
                product: ea * eb,
                grad,
            }
        })
        .collect();

    let kf = freqs.len() as f64;
    let value = terms.iter().map(|t| t.product).sum::<f64>() / kf;
    let var = terms.iter().map(|t| (t.product - value).powi(2)).sum::<f64>() / (kf - 1.0);
    let grad_theta = want_theta.then(|| {
        let mut g = vec![0.0; compiled.num_gates()];
        for t in &terms {
            for (o, v) in g.iter_mut().zip(t.grad.as_ref().expect("requested")) {
                *o += v;
            }
        }
        g.iter_mut().for_each(|v| *v /= kf);
        g
    });
    let grad_gamma = critic.map(|f| {
        let mut out = FvsbnGrad::zeros(f.n());
        for (t, &alpha) in terms.iter().zip(freqs) {
            let s = f.grad_log_mass(alpha);
            for (o, v) in out.b.iter_mut().zip(&s.b) {
                *o += v * t.product;
            }
            for (o, v) in out.w.iter_mut().zip(&s.w) {
                *o += v * t.product;
            }
        }
        out.b.iter_mut().chain(out.w.iter_mut()).for_each(|v| *v /= kf);
        out
    });
    Ok(MmdBatch {
        estimate: MmdEstimate {
            value,
            std_error: (var / kf).sqrt(),
            freq_batch: freqs.len(),
            shots,
            seed,
        },
        grad_theta,
        grad_gamma,
    })
}

#[allow(clippy::too_many_arguments)]
fn sampled_batch(
    data: &Dataset,
    c: &IqpCircuit,
    g: &dyn SpectralMeasure,
    k: usize,
    shots: Shots,
    seed: u64,
    want_theta: bool,
    critic: Option<&Fvsbn>,
) -> Result<MmdBatch> {
    check_inputs(data, c, k, shots)?;
    if g.n() != c.n_visible() {
        return Err(Error::WidthMismatch {
            expected: c.n_visible(),
            actual: g.n(),
        });
    }
    let freqs = sample_frequencies(g, k, seed);
    mmd_batch(data, c, &freqs, shots, seed, want_theta, critic)
}

/// Unbiased estimate of `E_{α~G}[(d_α − ⟨Z_α⟩)²]`.
pub fn mmd_estimate(
    data: &Dataset,
    c: &IqpCircuit,
    g: &dyn SpectralMeasure,
    k: usize,
    shots: Shots,
    seed: u64,
) -> Result<MmdEstimate> {
    Ok(sampled_batch(data, c, g, k, shots, seed, false, None)?.estimate)
}

/// Unbiased estimate of `∂MMD²/∂θ_j` for every gate.
pub fn mmd_grad_theta(
    data: &Dataset,
    c: &IqpCircuit,
    g: &dyn SpectralMeasure,
    k: usize,
    shots: Shots,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(sampled_batch(data, c, g, k, shots, seed, true, None)?
        .grad_theta
        .expect("requested"))
}

/// Score-function estimate of `∇_γ MMD²` (the critic's ascent direction).
pub fn mmd_grad_gamma(
    data: &Dataset,
    c: &IqpCircuit,
    f: &Fvsbn,
    k: usize,
    shots: Shots,
    seed: u64,
) -> Result<FvsbnGrad> {
    Ok(sampled_batch(data, c, f, k, shots, seed, false, Some(f))?
        .grad_gamma
        .expect("requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GeneratorGate;
    use crate::dist::tvd;
    use crate::sim::tests::random_circuit;
    use crate::spectral::{GaussianMeasure, PointMassMeasure, FVSBN_EPS};
    use proptest::prelude::*;
    use rand::Rng;

    fn vanishing_circuit(n: usize) -> IqpCircuit {
        let gates = (0..n)
            .map(|i| GeneratorGate {
                mask: BitString::unit(n, i),
                angle: if i == 0 {
                    std::f64::consts::FRAC_PI_8
                } else {
                    std::f64::consts::FRAC_PI_4
                },
            })
            .collect();
        IqpCircuit::with_generators(n, 0, gates).unwrap()
    }

    fn random_dist(n: usize, seed: u64) -> ProbVector {
        let mut rng = stream_rng(seed, 99);
        let v: Vec<f64> = (0..1usize << n).map(|_| rng.random::<f64>().powi(3)).collect();
        let s: f64 = v.iter().sum();
        ProbVector::new(n, v.into_iter().map(|x| x / s).collect()).unwrap()
    }

    #[test]
    fn vanishing_instance_closed_forms() {
        let n = 10;
        let c = vanishing_circuit(n);
        let q = exact_visible_distribution(&c).unwrap();
        let u = ProbVector::uniform(n).unwrap();
        let g = GaussianMeasure::new(n, 1.0).unwrap();
        let p = g.p_sigma();
        let want = 0.5 * p * (1.0 - p).powi(9);
        assert!((mmd_exact(&u, &q, &g).unwrap() - want).abs() < 1e-12);
        let star = BitString::unit(n, 0);
        let pm = PointMassMeasure::new(star, 0.01).unwrap();
        assert!((mmd_exact(&u, &q, &pm).unwrap() - 0.5 * 0.99).abs() < 1e-12);

        let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gg = norm(mmd_exact_grad_theta(&u, &c, &g).unwrap());
        assert!((gg - 2.0 * p * (1.0 - p).powi(9)).abs() < 1e-9);
        let gp = norm(mmd_exact_grad_theta(&u, &c, &pm).unwrap());
        assert!((gp - 2.0 * 0.99).abs() < 1e-9);
    }

    #[test]
    fn exact_is_zero_on_equal_inputs() {
        let p = random_dist(5, 1);
        let g = GaussianMeasure::new(5, 0.6).unwrap();
        assert_eq!(mmd_exact(&p, &p, &g).unwrap(), 0.0);
        let q = random_dist(4, 1);
        assert!(matches!(mmd_exact(&p, &q, &g), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn trivial_estimates_vanish() {
        let n = 5;
        let data = Dataset::new(n, vec![BitString::zeros(n); 10]).unwrap();
        let c = IqpCircuit::all_gates(n, 1, 2).unwrap();
        let g = GaussianMeasure::new(n, 0.0).unwrap();
        let e = mmd_estimate(&data, &c, &g, 50, Shots::Paired(20), 3).unwrap();
        assert_eq!(e.value, 0.0);
        let gr = mmd_grad_theta(&data, &c, &g, 50, Shots::Paired(20), 3).unwrap();
        assert!(gr.iter().all(|&v| v == 0.0));
        let f = Fvsbn::new(n, FVSBN_EPS).unwrap();
        let gg = mmd_grad_gamma(&data, &c, &f, 50, Shots::Paired(20), 3).unwrap();
        assert!(gg.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = Dataset::new(3, vec![BitString::zeros(3)]).unwrap();
        let c = IqpCircuit::all_gates(3, 0, 1).unwrap();
        let g = GaussianMeasure::new(3, 0.0).unwrap();
        assert!(mmd_estimate(&data, &c, &g, 1, Shots::Paired(10), 0).is_err());
        assert!(mmd_estimate(&data, &c, &g, 10, Shots::Paired(1), 0).is_err());
        let d = IqpCircuit::with_dense(3, 0, vec![0.0; 8]).unwrap();
        assert!(matches!(
            mmd_estimate(&data, &d, &g, 10, Shots::Paired(10), 0),
            Err(Error::DenseModeUnsupported)
        ));
    }

    #[test]
    fn estimate_is_deterministic() {
        let c = random_circuit(6, 1, 2, 5);
        let data = random_dist(6, 2).sample(200, &mut stream_rng(1, 0)).unwrap();
        let g = GaussianMeasure::new(6, 0.8).unwrap();
        let a = mmd_batch(&data, &c, &sample_frequencies(&g, 40, 9), Shots::Paired(64), 9, true, None).unwrap();
        let b = mmd_batch(&data, &c, &sample_frequencies(&g, 40, 9), Shots::Paired(64), 9, true, None).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.grad_theta, b.grad_theta);
    }

    #[test]
    fn estimate_is_unbiased() {
        let n = 6;
        let c = random_circuit(n, 2, 2, 8);
        let data = random_dist(n, 4).sample(300, &mut stream_rng(2, 0)).unwrap();
        let g = GaussianMeasure::new(n, 0.9).unwrap();
        let exact = mmd_exact(&data.empirical().unwrap(), &exact_visible_distribution(&c).unwrap(), &g).unwrap();
        let runs: Vec<f64> = (0..100)
            .map(|s| mmd_estimate(&data, &c, &g, 100, Shots::Paired(100), s).unwrap().value)
            .collect();
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        let sd = (runs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd / 10.0, "{mean} vs {exact} (sd {sd})");
    }

    #[test]
    fn exact_theta_gradient_matches_finite_differences() {
        let c = random_circuit(4, 1, 2, 3);
        let target = random_dist(4, 6);
        let g = GaussianMeasure::new(4, 0.7).unwrap();
        let grad = mmd_exact_grad_theta(&target, &c, &g).unwrap();
        let base = c.angles().unwrap();
        let h = 1e-6;
        for j in 0..base.len() {
            let eval = |delta: f64| {
                let mut cc = c.clone();
                let mut a = base.clone();
                a[j] += delta;
                cc.set_angles(&a).unwrap();
                mmd_exact(&target, &exact_visible_distribution(&cc).unwrap(), &g).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((grad[j] - fd).abs() < 1e-7, "{j}: {} vs {fd}", grad[j]);
        }
    }

    #[test]
    fn exact_gamma_gradient_matches_finite_differences() {
        let n = 5;
        let p = random_dist(n, 1);
        let q = random_dist(n, 2);
        let mut f = Fvsbn::new(n, FVSBN_EPS).unwrap();
        let mut rng = stream_rng(3, 0);
        let params: Vec<f64> = (0..f.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        f.set_params(&params).unwrap();
        let grad = mmd_exact_grad_gamma(&p, &q, &f).unwrap().flat();
        let h = 1e-6;
        for k in 0..params.len() {
            let eval = |delta: f64| {
                let mut ff = f.clone();
                let mut a = params.clone();
                a[k] += delta;
                ff.set_params(&a).unwrap();
                mmd_exact(&p, &q, &ff).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((grad[k] - fd).abs() < 1e-8, "{k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn sandwich_bound_on_random_pairs() {
        for seed in 0..30u64 {
            let n = 2 + (seed % 6) as usize;
            let p = random_dist(n, seed);
            let q = random_dist(n, seed + 1000);
            let t = tvd(&p, &q).unwrap();
            let g = GaussianMeasure::new(n, 0.5 + seed as f64 * 0.05).unwrap();
            let masses = g.masses().unwrap();
            let lo = masses.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = masses.iter().cloned().fold(0.0, f64::max);
            let m = mmd_exact(&p, &q, &g).unwrap();
            assert!(4.0 * lo * t * t <= m * (1.0 + 1e-12));
            assert!(m <= 4.0 * (1u64 << n) as f64 * hi * t * t * (1.0 + 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn exact_mmd_is_nonnegative(seed in any::<u64>(), n in 1usize..7, sigma in 0.0f64..3.0) {
            let p = random_dist(n, seed);
            let q = random_dist(n, seed ^ 0xabc);
            let g = GaussianMeasure::new(n, sigma).unwrap();
            let m = mmd_exact(&p, &q, &g).unwrap();
            prop_assert!(m >= 0.0);
        }
    }
}
