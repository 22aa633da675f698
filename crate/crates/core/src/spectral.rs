//! Spectral measures over frequencies `α ∈ {0,1}^n`.
//!
//! A stationary kernel on the Boolean cube is determined by a probability
//! mass `G` over frequencies; it is characteristic exactly when `G(α) > 0`
//! for every `α`. Three families are provided: the product-Bernoulli measure
//! of the binary Gaussian kernel, a point mass with a uniform floor, and a
//! trainable fully visible sigmoid belief network.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::dist::{BitString, MAX_DENSE_BITS};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};

/// Default conditional-probability clamp of [`Fvsbn`].
pub const FVSBN_EPS: f64 = 1e-6;

pub trait SpectralMeasure: Send + Sync {
    fn n(&self) -> usize;

    fn log_mass(&self, alpha: BitString) -> f64;

    fn mass(&self, alpha: BitString) -> f64 {
        self.log_mass(alpha).exp()
    }

    fn sample_with(&self, rng: &mut SimRng) -> BitString;

    fn sample(&self, seed: u64) -> BitString {
        self.sample_with(&mut stream_rng(seed, 0))
    }

    /// All `2^n` masses, indexed by `α`.
    fn masses(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > MAX_DENSE_BITS {
            return Err(Error::SizeCap {
                what: "spectral enumeration",
                requested: n,
                limit: MAX_DENSE_BITS,
            });
        }
        Ok((0..1u64 << n)
            .map(|a| self.mass(BitString::new(a, n).expect("fits")))
            .collect())
    }
}

fn check_width(n: usize, alpha: BitString) {
    assert_eq!(alpha.width(), n, "frequency width does not match the measure");
}

fn sample_bits_independent(n: usize, p: impl Fn(usize) -> f64, rng: &mut SimRng) -> BitString {
    let mut bits = 0u64;
    for i in 0..n {
        bits = (bits << 1) | u64::from(rng.random::<f64>() < p(i));
    }
    BitString::new(bits, n).expect("fits")
}

/// Spectral measure of `k(b, b') = exp(-|b ⊕ b'| / (2σ²))`:
/// each bit of `α` is independently 1 with probability `p_σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure {
    n: usize,
    sigma: f64,
    p_sigma: f64,
}

/// `p_σ = ½(1 − exp(−1/(2σ²)))`, with `σ = 0` read as `½`.
pub fn p_sigma(sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.5
    } else {
        0.5 * (1.0 - (-1.0 / (2.0 * sigma * sigma)).exp())
    }
}

impl GaussianMeasure {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::invalid(format!("bit width {n} outside 1..=64")));
        }
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::invalid(format!("bandwidth must be >= 0, got {sigma}")));
        }
        Ok(Self {
            n,
            sigma,
            p_sigma: p_sigma(sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn p_sigma(&self) -> f64 {
        self.p_sigma
    }
}

impl SpectralMeasure for GaussianMeasure {
    fn n(&self) -> usize {
        self.n
    }

    fn mass(&self, alpha: BitString) -> f64 {
        check_width(self.n, alpha);
        let w = alpha.weight() as i32;
        (1.0 - self.p_sigma).powi(self.n as i32 - w) * self.p_sigma.powi(w)
    }

    fn log_mass(&self, alpha: BitString) -> f64 {
        check_width(self.n, alpha);
        let w = alpha.weight() as f64;
        let zero_part = if self.n as f64 - w > 0.0 {
            (self.n as f64 - w) * (1.0 - self.p_sigma).ln()
        } else {
            0.0
        };
        let one_part = if w > 0.0 { w * self.p_sigma.ln() } else { 0.0 };
        zero_part + one_part
    }

    fn sample_with(&self, rng: &mut SimRng) -> BitString {
        sample_bits_independent(self.n, |_| self.p_sigma, rng)
    }
}

/// Mass `1 − ε` on `α*`, the rest spread uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMassMeasure {
    alpha_star: BitString,
    eps: f64,
}

impl PointMassMeasure {
    pub fn new(alpha_star: BitString, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(format!("point-mass eps must lie in (0,1), got {eps}")));
        }
        Ok(Self { alpha_star, eps })
    }

    pub fn alpha_star(&self) -> BitString {
        self.alpha_star
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn others(&self) -> f64 {
        (2f64).powi(self.n() as i32) - 1.0
    }
}

impl SpectralMeasure for PointMassMeasure {
    fn n(&self) -> usize {
        self.alpha_star.width()
    }

    fn mass(&self, alpha: BitString) -> f64 {
        check_width(self.n(), alpha);
        if alpha == self.alpha_star {
            1.0 - self.eps
        } else {
            self.eps / self.others()
        }
    }

    fn log_mass(&self, alpha: BitString) -> f64 {
        self.mass(alpha).ln()
    }

    fn sample_with(&self, rng: &mut SimRng) -> BitString {
        let n = self.n();
        if rng.random::<f64>() < 1.0 - self.eps {
            return self.alpha_star;
        }
        let others = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        let r = rng.random_range(0..others);
        let bits = if r >= self.alpha_star.bits() { r + 1 } else { r };
        BitString::new(bits, n).expect("fits")
    }
}

/// Autoregressive measure
/// `p(α_i = 1 | α_<i) = ε + (1 − 2ε) σ(b_i + Σ_{r<i} W_ir (2α_r − 1))`.
///
/// `W` is strictly lower triangular and stored packed row by row; entries
/// on or above the diagonal do not exist.
#[derive(Clone, Debug, PartialEq)]
pub struct Fvsbn {
    n: usize,
    b: Vec<f64>,
    w: Vec<f64>,
    eps: f64,
}

/// Gradient of `log G(α)` in the parameter layout of [`Fvsbn::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct FvsbnGrad {
    pub b: Vec<f64>,
    /// Packed strictly-lower-triangular entries, row by row.
    pub w: Vec<f64>,
}

impl FvsbnGrad {
    pub fn zeros(n: usize) -> Self {
        Self {
            b: vec![0.0; n],
            w: vec![0.0; n * (n.saturating_sub(1)) / 2],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.b.iter().chain(&self.w).copied().collect()
    }
}

#[inline]
fn tri(i: usize, r: usize) -> usize {
    i * (i - 1) / 2 + r
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Fvsbn {
    /// All-zero parameters: the uniform measure.
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::invalid(format!("bit width {n} outside 1..=64")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::invalid(format!("clamp eps must lie in (0, 0.5), got {eps}")));
        }
        Ok(Self {
            n,
            b: vec![0.0; n],
            w: vec![0.0; n * (n - 1) / 2],
            eps,
        })
    }

    /// `W = 0`, `b_i = log(p − ε) − log(1 − p − ε)` with `p = p_σ`, which
    /// reproduces the Gaussian spectral measure of bandwidth `σ`.
    pub fn init_gaussian(n: usize, sigma: f64, eps: f64) -> Result<Self> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::invalid(format!("bandwidth must be >= 0, got {sigma}")));
        }
        let mut f = Self::new(n, eps)?;
        if sigma > 0.0 {
            let p = p_sigma(sigma);
            if p <= eps {
                return Err(Error::invalid(format!(
                    "p_sigma = {p:e} is below the clamp eps = {eps:e}"
                )));
            }
            let bias = (p - eps).ln() - (1.0 - p - eps).ln();
            f.b.iter_mut().for_each(|b| *b = bias);
        }
        Ok(f)
    }

    /// Sparse warm start for `n = 12` that concentrates mass on
    /// `111111110000`, `000011111111` and their XOR as `k` grows.
    pub fn init_warm(n: usize, k: f64, eps: f64) -> Result<Self> {
        if n != 12 {
            return Err(Error::invalid(format!("warm initialisation is defined for n = 12 only, got {n}")));
        }
        let mut f = Self::new(n, eps)?;
        // 1-based (i, value) and (i, r, value) as in the usual notation.
        let biases = [
            (1, 2f64.ln()),
            (5, k / 2.0),
            (9, k),
            (10, k),
            (11, k),
            (12, k),
        ];
        for (i, v) in biases {
            f.b[i - 1] = v;
        }
        let weights = [
            (2, 1, k),
            (3, 1, k),
            (4, 1, k),
            (6, 5, k),
            (7, 5, k),
            (8, 5, k),
            (9, 1, -k),
            (10, 1, -k),
            (11, 1, -k),
            (12, 1, -k),
            (9, 5, -k),
            (10, 5, -k),
            (11, 5, -k),
            (12, 5, -k),
            (5, 1, -k / 2.0),
        ];
        for (i, r, v) in weights {
            f.set_w(i - 1, r - 1, v)?;
        }
        Ok(f)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    /// `W_ir` for `r < i` (0-based); zero on and above the diagonal.
    pub fn w(&self, i: usize, r: usize) -> f64 {
        if r < i {
            self.w[tri(i, r)]
        } else {
            0.0
        }
    }

    pub fn set_w(&mut self, i: usize, r: usize, value: f64) -> Result<()> {
        if i >= self.n || r >= i {
            return Err(Error::invalid(format!(
                "W[{i}][{r}] is outside the strictly lower triangle"
            )));
        }
        self.w[tri(i, r)] = value;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.b.len() + self.w.len()
    }

    /// `b` followed by the packed `W`.
    pub fn params(&self) -> Vec<f64> {
        self.b.iter().chain(&self.w).copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.num_params()
            )));
        }
        let (b, w) = params.split_at(self.n);
        self.b.copy_from_slice(b);
        self.w.copy_from_slice(w);
        Ok(())
    }

    fn logit(&self, i: usize, bits: &[bool]) -> f64 {
        let row = &self.w[tri_start(i)..tri_start(i) + i];
        self.b[i]
            + row
                .iter()
                .zip(bits)
                .map(|(w, &a)| if a { *w } else { -*w })
                .sum::<f64>()
    }

    /// Conditional probabilities `p_i` of `α_i = 1`, with the raw sigmoid
    /// outputs `s_i`.
    pub fn conditionals(&self, alpha: BitString) -> (Vec<f64>, Vec<f64>) {
        check_width(self.n, alpha);
        let bits: Vec<bool> = (0..self.n).map(|i| alpha.bit(i)).collect();
        let mut p = Vec::with_capacity(self.n);
        let mut s = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let si = sigmoid(self.logit(i, &bits));
            s.push(si);
            p.push(self.eps + (1.0 - 2.0 * self.eps) * si);
        }
        (p, s)
    }

    /// Analytic `∇ log G(α)` with respect to `b` and `W`.
    pub fn grad_log_mass(&self, alpha: BitString) -> FvsbnGrad {
        let (p, s) = self.conditionals(alpha);
        let floor = self.eps * self.eps / 4.0;
        let mut g = FvsbnGrad::zeros(self.n);
        for i in 0..self.n {
            let a = if alpha.bit(i) { 1.0 } else { 0.0 };
            let denom = (p[i] * (1.0 - p[i])).max(floor);
            let d = (a - p[i]) * (1.0 - 2.0 * self.eps) * s[i] * (1.0 - s[i]) / denom;
            g.b[i] = d;
            for r in 0..i {
                g.w[tri(i, r)] = d * if alpha.bit(r) { 1.0 } else { -1.0 };
            }
        }
        g
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n = {}", self.n)?;
        writeln!(w, "eps = {:.16e}", self.eps)?;
        for b in &self.b {
            writeln!(w, "b {b:.16e}")?;
        }
        for i in 1..self.n {
            for r in 0..i {
                let v = self.w[tri(i, r)];
                if v != 0.0 {
                    writeln!(w, "({}, {}, {v:.16e})", i + 1, r + 1)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self> {
        let mut n = None;
        let mut eps = None;
        let mut b = Vec::new();
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad number {s:?}: {e}")))
            };
            if let Some(v) = t.strip_prefix("b ") {
                b.push(num(v)?);
            } else if let Some(inner) = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
                let parts: Vec<&str> = inner.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(lineno, "expected `(i, r, value)`"));
                }
                let idx = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse(lineno, format!("bad index {s:?}: {e}")))
                };
                entries.push((lineno, idx(parts[0])?, idx(parts[1])?, num(parts[2])?));
            } else if let Some((k, v)) = t.split_once('=') {
                match k.trim() {
                    "n" => {
                        n = Some(v.trim().parse::<usize>().map_err(|e| {
                            Error::parse(lineno, format!("bad n: {e}"))
                        })?)
                    }
                    "eps" => eps = Some(num(v)?),
                    other => return Err(Error::parse(lineno, format!("unknown key {other:?}"))),
                }
            } else {
                return Err(Error::parse(lineno, format!("unrecognised line {t:?}")));
            }
        }
        let n = n.ok_or_else(|| Error::parse(0, "missing `n`"))?;
        let mut f = Self::new(n, eps.ok_or_else(|| Error::parse(0, "missing `eps`"))?)?;
        if b.len() != n {
            return Err(Error::parse(0, format!("expected {n} bias lines, found {}", b.len())));
        }
        f.b = b;
        for (lineno, i, r, v) in entries {
            if i == 0 || r == 0 {
                return Err(Error::parse(lineno, "indices are 1-based"));
            }
            f.set_w(i - 1, r - 1, v)
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        Ok(f)
    }
}

#[inline]
fn tri_start(i: usize) -> usize {
    if i == 0 {
        0
    } else {
        tri(i, 0)
    }
}

impl SpectralMeasure for Fvsbn {
    fn n(&self) -> usize {
        self.n
    }

    fn log_mass(&self, alpha: BitString) -> f64 {
        let (p, _) = self.conditionals(alpha);
        p.iter()
            .enumerate()
            .map(|(i, &pi)| if alpha.bit(i) { pi.ln() } else { (1.0 - pi).ln() })
            .sum()
    }

    fn sample_with(&self, rng: &mut SimRng) -> BitString {
        let mut bits = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let p = self.eps + (1.0 - 2.0 * self.eps) * sigmoid(self.logit(i, &bits));
            bits.push(rng.random::<f64>() < p);
        }
        let v = bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b));
        BitString::new(v, self.n).expect("fits")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{fwht, ProbVector};
    use approx::assert_abs_diff_eq;

    fn all(n: usize) -> impl Iterator<Item = BitString> {
        (0..1u64 << n).map(move |a| BitString::new(a, n).unwrap())
    }

    fn random_fvsbn(n: usize, seed: u64, scale: f64) -> Fvsbn {
        let mut f = Fvsbn::new(n, FVSBN_EPS).unwrap();
        let mut rng = stream_rng(seed, 1);
        let p: Vec<f64> = (0..f.num_params())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        f.set_params(&p).unwrap();
        f
    }

    fn empirical_tvd(m: &dyn SpectralMeasure, draws: usize, seed: u64) -> f64 {
        let n = m.n();
        let mut counts = vec![0.0; 1 << n];
        let mut rng = stream_rng(seed, 0);
        for _ in 0..draws {
            counts[m.sample_with(&mut rng).index()] += 1.0;
        }
        let exact = m.masses().unwrap();
        0.5 * counts
            .iter()
            .zip(&exact)
            .map(|(c, e)| (c / draws as f64 - e).abs())
            .sum::<f64>()
    }

    #[test]
    fn gaussian_examples() {
        let g = GaussianMeasure::new(5, 0.0).unwrap();
        assert_eq!(g.p_sigma(), 0.5);
        assert!(all(5).all(|a| (g.mass(a) - 1.0 / 32.0).abs() < 1e-15));

        let wide = GaussianMeasure::new(4, 1e6).unwrap();
        assert!(wide.mass(BitString::zeros(4)) > 1.0 - 1e-10);

        let sigma = (1.0 / (2.0 * 2f64.ln())).sqrt();
        let g1 = GaussianMeasure::new(1, sigma).unwrap();
        assert_abs_diff_eq!(g1.p_sigma(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g1.mass("1".parse().unwrap()), 0.25, epsilon = 1e-15);
        assert!(GaussianMeasure::new(3, -1.0).is_err());
    }

    #[test]
    fn gaussian_log_mass_consistent() {
        let g = GaussianMeasure::new(6, 0.8).unwrap();
        for a in all(6) {
            assert_abs_diff_eq!(g.log_mass(a).exp(), g.mass(a), epsilon = 1e-15);
        }
    }

    #[test]
    fn gaussian_kernel_walsh_transform_is_product_measure() {
        for (n, sigma) in [(6usize, 0.7f64), (10, 1.3)] {
            let mut k: Vec<f64> = (0..1u64 << n)
                .map(|b| (-(b.count_ones() as f64) / (2.0 * sigma * sigma)).exp())
                .collect();
            fwht(&mut k);
            let total: f64 = k.iter().sum();
            let g = GaussianMeasure::new(n, sigma).unwrap();
            for a in all(n) {
                let lhs = k[a.index()] / total;
                assert!((lhs - g.mass(a)).abs() <= 1e-9 * g.mass(a).max(1e-300));
            }
        }
    }

    #[test]
    fn gaussian_sampling() {
        let g = GaussianMeasure::new(8, 0.0).unwrap();
        // chi-square uniformity over 256 cells, 10^5 draws
        let draws = 100_000;
        let mut counts = vec![0.0; 256];
        let mut rng = stream_rng(21, 0);
        for _ in 0..draws {
            counts[g.sample_with(&mut rng).index()] += 1.0;
        }
        let e = draws as f64 / 256.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // 0.999 quantile of chi-square with 255 dof is about 330.5
        assert!(chi2 < 330.5, "chi2 = {chi2}");

        let cold = GaussianMeasure::new(8, f64::INFINITY).unwrap();
        assert_eq!(cold.sample(3), BitString::zeros(8));

        let g = GaussianMeasure::new(10, 0.9).unwrap();
        let mut rng = stream_rng(4, 0);
        let draws = 20_000;
        let mean_w = (0..draws)
            .map(|_| g.sample_with(&mut rng).weight() as f64)
            .sum::<f64>()
            / draws as f64;
        let p = g.p_sigma();
        let sd = (10.0 * p * (1.0 - p) / draws as f64).sqrt();
        assert!((mean_w - 10.0 * p).abs() < 3.0 * sd);
    }

    #[test]
    fn point_mass_examples() {
        let star: BitString = "100000".parse().unwrap();
        let pm = PointMassMeasure::new(star, 0.05).unwrap();
        assert_eq!(pm.mass(star), 0.95);
        assert_abs_diff_eq!(pm.mass("000001".parse().unwrap()), 0.05 / 63.0, epsilon = 1e-18);
        let total: f64 = pm.masses().unwrap().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        assert!(PointMassMeasure::new(star, 0.0).is_err());
        assert!(empirical_tvd(&pm, 100_000, 9) <= 0.02);
    }

    #[test]
    fn fvsbn_uniform_at_zero() {
        let f = Fvsbn::new(7, FVSBN_EPS).unwrap();
        for a in all(7) {
            let (p, _) = f.conditionals(a);
            assert!(p.iter().all(|&x| x == 0.5));
            assert_abs_diff_eq!(f.log_mass(a), -7.0 * 2f64.ln(), epsilon = 1e-12);
            let g = f.grad_log_mass(a);
            for i in 0..7 {
                let ai = if a.bit(i) { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g.b[i], (ai - 0.5) * (1.0 - 2.0 * FVSBN_EPS), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fvsbn_gaussian_init_reproduces_gaussian() {
        for (n, sigma) in [(8usize, 0.0f64), (10, 0.9), (12, 1.7)] {
            let f = Fvsbn::init_gaussian(n, sigma, FVSBN_EPS).unwrap();
            let g = GaussianMeasure::new(n, sigma).unwrap();
            for a in all(n) {
                let (fm, gm) = (f.mass(a), g.mass(a));
                assert!((fm - gm).abs() <= 1e-9 * gm, "n={n} sigma={sigma} {a}: {fm} vs {gm}");
            }
        }
        let sigma = (1.0 / (2.0 * 2f64.ln())).sqrt();
        let f = Fvsbn::init_gaussian(4, sigma, FVSBN_EPS).unwrap();
        let expect = (0.25 - FVSBN_EPS).ln() - (0.75 - FVSBN_EPS).ln();
        assert!(f.b().iter().all(|&b| (b - expect).abs() < 1e-12));
        assert!(Fvsbn::init_gaussian(4, -0.1, FVSBN_EPS).is_err());
    }

    #[test]
    fn fvsbn_warm_init_entries_and_concentration() {
        let f = Fvsbn::init_warm(12, 10.0, FVSBN_EPS).unwrap();
        assert_eq!(f.b()[0], 2f64.ln());
        assert_eq!(f.b()[4], 5.0);
        assert_eq!(&f.b()[8..], &[10.0; 4]);
        assert_eq!(f.w(4, 0), -5.0);
        assert_eq!(f.w(1, 0), 10.0);
        assert_eq!(f.w(11, 4), -10.0);
        let nonzero = (1..12)
            .flat_map(|i| (0..i).map(move |r| (i, r)))
            .filter(|&(i, r)| f.w(i, r) != 0.0)
            .count();
        assert_eq!(nonzero, 15);

        let masses = f.masses().unwrap();
        let top: f64 = ["111111110000", "000011111111", "111100001111"]
            .iter()
            .map(|s| masses[s.parse::<BitString>().unwrap().index()])
            .sum();
        assert!(top > 0.99, "top-3 mass {top}");

        let flat = Fvsbn::init_warm(12, 0.0, FVSBN_EPS).unwrap();
        assert_eq!(flat.params().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(Fvsbn::init_warm(14, 10.0, FVSBN_EPS).is_err());
    }

    #[test]
    fn fvsbn_lower_triangle_is_structural() {
        let mut f = Fvsbn::new(4, FVSBN_EPS).unwrap();
        assert!(f.set_w(2, 2, 1.0).is_err());
        assert!(f.set_w(1, 3, 1.0).is_err());
        assert_eq!(f.num_params(), 4 + 6);
    }

    #[test]
    fn fvsbn_gradient_matches_finite_differences() {
        for seed in 0..4 {
            let n = 6 + seed as usize;
            let f = random_fvsbn(n, seed, 1.5);
            let mut rng = stream_rng(seed, 7);
            let alpha = BitString::new(rng.random_range(0..1u64 << n), n).unwrap();
            let g = f.grad_log_mass(alpha).flat();
            let base = f.params();
            let h = 1e-6;
            for k in 0..base.len() {
                let mut fp = f.clone();
                let mut fm = f.clone();
                let mut p = base.clone();
                p[k] += h;
                fp.set_params(&p).unwrap();
                p[k] -= 2.0 * h;
                fm.set_params(&p).unwrap();
                let fd = (fp.log_mass(alpha) - fm.log_mass(alpha)) / (2.0 * h);
                assert!(
                    (g[k] - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "param {k}: {} vs {fd}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn fvsbn_score_has_zero_mean() {
        let f = random_fvsbn(6, 3, 1.0);
        let masses = f.masses().unwrap();
        let mut mean = vec![0.0; f.num_params()];
        for a in all(6) {
            for (m, g) in mean.iter_mut().zip(f.grad_log_mass(a).flat()) {
                *m += masses[a.index()] * g;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn fvsbn_sampling_matches_masses() {
        let f = random_fvsbn(6, 11, 2.0);
        assert!(empirical_tvd(&f, 100_000, 5) <= 0.02);
        let z = Fvsbn::new(8, FVSBN_EPS).unwrap();
        assert!(empirical_tvd(&z, 100_000, 6) <= 0.02);

        let mut hot = Fvsbn::new(3, FVSBN_EPS).unwrap();
        hot.b_mut().iter_mut().for_each(|b| *b = 800.0);
        let (p, _) = hot.conditionals(BitString::zeros(3));
        assert!(p.iter().all(|&x| (x - (1.0 - FVSBN_EPS)).abs() < 1e-15));
    }

    #[test]
    fn every_measure_is_normalised_with_full_support() {
        let star: BitString = "0110100".parse().unwrap();
        let measures: Vec<Box<dyn SpectralMeasure>> = vec![
            Box::new(GaussianMeasure::new(7, 1.1).unwrap()),
            Box::new(PointMassMeasure::new(star, 1e-3).unwrap()),
            Box::new(random_fvsbn(7, 2, 3.0)),
        ];
        for m in &measures {
            let masses = m.masses().unwrap();
            assert_abs_diff_eq!(masses.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(masses.iter().all(|&x| x > 0.0));
            assert!(empirical_tvd(m.as_ref(), 100_000, 1) <= 0.02);
        }
        assert!(ProbVector::new(7, measures[2].masses().unwrap()).is_ok());
    }

    #[test]
    fn fvsbn_checkpoint_roundtrip() {
        let f = random_fvsbn(5, 4, 2.0);
        let mut buf = Vec::new();
        f.write_checkpoint(&mut buf).unwrap();
        assert_eq!(Fvsbn::read_checkpoint(&buf[..]).unwrap(), f);
        let warm = Fvsbn::init_warm(12, 10.0, FVSBN_EPS).unwrap();
        let mut buf = Vec::new();
        warm.write_checkpoint(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("(5, 1, -5.0000000000000000e0)"));
        assert_eq!(Fvsbn::read_checkpoint(&buf[..]).unwrap(), warm);
        assert!(Fvsbn::read_checkpoint(&b"n = 2\neps = 1e-6\nb 0\nb 0\n(1, 2, 3.0)\n"[..]).is_err());
    }
}
