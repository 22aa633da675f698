//! Benchmark and adversarial instances: parity-check datasets, worst-case
//! distribution pairs with vanishing spectra, and a single-qubit instance on
//! which the Gaussian kernel is blind.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
use std::io::{BufRead, Write};

use rand::Rng;

use crate::circuit::{GeneratorGate, IqpCircuit};
use crate::dist::{fwht, BitString, Dataset, ProbVector, MAX_DENSE_BITS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

/// Rank above which [`parity_sample`] draws from a null-space basis instead
/// of rejecting uniform strings.
pub const REJECTION_MAX_RANK: usize = 8;

/// Resample budget of [`worst_case_pair`].
pub const WORST_CASE_ATTEMPTS: usize = 100;

/// A binary parity-check matrix `H`; its rows are checks over `n` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheck {
    n: usize,
    rows: Vec<BitString>,
}

impl ParityCheck {
    pub fn new(n: usize, rows: Vec<BitString>) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::invalid(format!("bit width {n} outside 1..=64")));
        }
        if let Some(r) = rows.iter().find(|r| r.width() != n) {
            return Err(Error::WidthMismatch {
                expected: n,
                actual: r.width(),
            });
        }
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[BitString] {
        &self.rows
    }

    /// `Hx = 0 (mod 2)`.
    pub fn accepts(&self, x: BitString) -> bool {
        self.rows
            .iter()
            .all(|r| (r.bits() & x.bits()).count_ones() % 2 == 0)
    }

    /// Rank over GF(2).
    pub fn rank(&self) -> usize {
        reduce(self.rows.iter().map(|r| r.bits()).collect()).len()
    }

    /// A basis of `{x : Hx = 0}`; `n − rank` vectors.
    pub fn null_space_basis(&self) -> Vec<BitString> {
        let n = self.n;
        let col = |j: usize| 1u64 << (n - 1 - j);
        let pivots = reduce(self.rows.iter().map(|r| r.bits()).collect());
        let pivot_cols: Vec<usize> = pivots
            .iter()
            .map(|r| (0..n).find(|&j| r & col(j) != 0).expect("non-zero row"))
            .collect();
        (0..n)
            .filter(|j| !pivot_cols.contains(j))
            .map(|f| {
                let mut x = col(f);
                for (r, &pc) in pivots.iter().zip(&pivot_cols) {
                    if r & col(f) != 0 {
                        x |= col(pc);
                    }
                }
                BitString::new(x, n).expect("fits")
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#n={}", self.n)?;
        for r in &self.rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut n = None;
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if let Some(v) = t.strip_prefix("#n=") {
                n = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::parse(i + 1, "bad width header"))?,
                );
                continue;
            }
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let row: BitString = t.parse().map_err(|e: Error| Error::parse(i + 1, e.to_string()))?;
            if let Some(first) = rows.first().map(|r: &BitString| r.width()) {
                if first != row.width() {
                    return Err(Error::parse(i + 1, "rows have different lengths"));
                }
            }
            rows.push(row);
        }
        let n = n
            .or_else(|| rows.first().map(|r| r.width()))
            .ok_or_else(|| Error::parse(0, "empty matrix without a `#n=` header"))?;
        Self::new(n, rows)
    }
}

/// Row-reduces over GF(2), returning the non-zero rows of the echelon form
/// with distinct leading bits.
fn reduce(mut rows: Vec<u64>) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for bit in (0..64).rev() {
        let b = 1u64 << bit;
        let Some(p) = rows.iter().position(|r| r & b != 0) else {
            continue;
        };
        let pivot = rows.swap_remove(p);
        for r in rows.iter_mut().chain(out.iter_mut()) {
            if *r & b != 0 {
                *r ^= pivot;
            }
        }
        out.push(pivot);
    }
    out
}

/// Uniform distribution over the null space of `h`.
pub fn parity_exact_dist(h: &ParityCheck) -> Result<ProbVector> {
    let n = h.n();
    if n > MAX_DENSE_BITS {
        return Err(Error::SizeCap {
            what: "parity distribution",
            requested: n,
            limit: MAX_DENSE_BITS,
        });
    }
    let support = 1u64 << (n - h.rank());
    let w = 1.0 / support as f64;
    let mass = (0..1u64 << n)
        .map(|x| {
            if h.accepts(BitString::new(x, n).expect("fits")) {
                w
            } else {
                0.0
            }
        })
        .collect();
    ProbVector::new(n, mass)
}

/// `count` uniform samples of the null space of `h`.
pub fn parity_sample(h: &ParityCheck, count: usize, seed: u64) -> Result<Dataset> {
    let n = h.n();
    let mut rng = stream_rng(seed, 0);
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let rows = if h.rank() > REJECTION_MAX_RANK {
        let basis = h.null_space_basis();
        (0..count)
            .map(|_| {
                let x = basis
                    .iter()
                    .filter(|_| rng.random::<bool>())
                    .fold(0u64, |acc, b| acc ^ b.bits());
                BitString::new(x, n).expect("fits")
            })
            .collect()
    } else {
        let mut rows = Vec::with_capacity(count);
        while rows.len() < count {
            let x = BitString::new(rng.random::<u64>() & mask, n).expect("fits");
            if h.accepts(x) {
                rows.push(x);
            }
        }
        rows
    };
    Dataset::new(n, rows)
}

/// Two overlapping blocks of ones whose rows and XOR all have weight above
/// `n/2`. For `n = 12` the rows are `111111110000` and `000011111111`.
pub fn builtin_parity(n: usize) -> Result<ParityCheck> {
    let (first, second_start) = match n {
        12 => (8, 4),
        14 => (9, 5),
        16 => (10, 6),
        _ => return Err(Error::invalid(format!("no built-in parity matrix for n = {n}"))),
    };
    let block = |lo: usize, hi: usize| {
        let bits = (lo..hi).fold(0u64, |acc, j| acc | (1u64 << (n - 1 - j)));
        BitString::new(bits, n).expect("fits")
    };
    ParityCheck::new(n, vec![block(0, first), block(second_start, n)])
}

/// A pair `(p, q)` with disjoint supports (TVD 1) whose non-trivial
/// characteristic functions are all at most `2^{−n/4}` in magnitude.
///
/// `p` is uniform on a random subset of size `⌊2^n/3⌋` and `q` uniform on
/// its complement, so `φ_q(α) = −(m/(N−m)) φ_p(α)` for every `α ≠ 0`.
pub fn worst_case_pair(n: usize, seed: u64) -> Result<(ProbVector, ProbVector)> {
    if !(12..=MAX_DENSE_BITS).contains(&n) {
        return Err(Error::invalid(format!(
            "worst-case pairs need 12 <= n <= {MAX_DENSE_BITS}, got {n}"
        )));
    }
    let big_n = 1usize << n;
    let m = big_n / 3;
    let threshold = 2f64.powf(-(n as f64) / 4.0);
    let ratio = m as f64 / (big_n - m) as f64;
    for attempt in 0..WORST_CASE_ATTEMPTS {
        let mut rng = stream_rng(derive_seed(seed, &[attempt as u64]), 0);
        let mut perm: Vec<u32> = (0..big_n as u32).collect();
        for i in 0..m {
            let j = rng.random_range(i..big_n);
            perm.swap(i, j);
        }
        let mut in_a = vec![false; big_n];
        for &x in &perm[..m] {
            in_a[x as usize] = true;
        }
        drop(perm);
        let (wp, wq) = (1.0 / m as f64, 1.0 / (big_n - m) as f64);
        let mut phi_p: Vec<f64> = in_a.iter().map(|&a| if a { wp } else { 0.0 }).collect();
        fwht(&mut phi_p);
        if phi_p[1..].iter().any(|v| v.abs() > threshold) {
            continue;
        }
        let p = ProbVector::new(n, in_a.iter().map(|&a| if a { wp } else { 0.0 }).collect())?;
        let q = ProbVector::new(n, in_a.iter().map(|&a| if a { 0.0 } else { wq }).collect())?;
        let phi_q = q.char_spectrum();
        let relation_holds = phi_p[1..]
            .iter()
            .zip(&phi_q.values()[1..])
            .all(|(fp, fq)| (fq + ratio * fp).abs() <= 1e-12);
        let disjoint = p.mass().iter().zip(q.mass()).all(|(a, b)| a * b == 0.0);
        if !(relation_holds && disjoint) {
            return Err(Error::InvalidDistribution(
                "worst-case pair failed its spectral post-conditions".into(),
            ));
        }
        return Ok((p, q));
    }
    Err(Error::ResampleBudget(WORST_CASE_ATTEMPTS))
}

/// Uniform target and the single-qubit circuit with angles
/// `(π/8, π/4, …, π/4)`: all non-trivial moments vanish except the one on
/// the first bit, which is `√2/2`.
pub fn lemma3_instance(n: usize) -> Result<(ProbVector, IqpCircuit)> {
    if n == 0 || n > MAX_DENSE_BITS {
        return Err(Error::invalid(format!("width {n} outside 1..={MAX_DENSE_BITS}")));
    }
    let gates = (0..n)
        .map(|i| GeneratorGate {
            mask: BitString::unit(n, i),
            angle: if i == 0 { FRAC_PI_8 } else { FRAC_PI_4 },
        })
        .collect();
    Ok((
        ProbVector::uniform(n)?,
        IqpCircuit::with_generators(n, 0, gates)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::tvd;
    use crate::sim::{exact_visible_distribution, exact_z_expectation};
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn trivial_parity_matrices() {
        let none = ParityCheck::new(3, vec![]).unwrap();
        let u = parity_exact_dist(&none).unwrap();
        assert!(u.mass().iter().all(|&m| m == 0.125));
        let h = ParityCheck::new(2, vec![bs("11")]).unwrap();
        assert_eq!(parity_exact_dist(&h).unwrap().mass(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn builtin_matrices() {
        let h = builtin_parity(12).unwrap();
        assert_eq!(h.rows()[0].to_string(), "111111110000");
        assert_eq!(h.rows()[1].to_string(), "000011111111");
        for n in [12, 14, 16] {
            let h = builtin_parity(n).unwrap();
            assert_eq!(h.rank(), 2);
            let (a, b) = (h.rows()[0], h.rows()[1]);
            for w in [a.weight(), b.weight(), (a.bits() ^ b.bits()).count_ones()] {
                assert!(w as usize * 2 > n, "n={n} weight {w}");
            }
        }
        assert!(builtin_parity(13).is_err());
        let p = parity_exact_dist(&builtin_parity(12).unwrap()).unwrap();
        let support: Vec<f64> = p.mass().iter().copied().filter(|&m| m > 0.0).collect();
        assert_eq!(support.len(), 1024);
        assert!(support.iter().all(|&m| m == 1.0 / 1024.0));
    }

    #[test]
    fn parity_spectrum_lives_on_the_row_span() {
        let h = builtin_parity(12).unwrap();
        let (a, b) = (h.rows()[0].bits(), h.rows()[1].bits());
        let span = [0, a, b, a ^ b];
        let phi = parity_exact_dist(&h).unwrap().char_spectrum();
        for (alpha, &v) in phi.values().iter().enumerate() {
            let want = if span.contains(&(alpha as u64)) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_pass_every_check() {
        let h = builtin_parity(12).unwrap();
        let d = parity_sample(&h, 2000, 1).unwrap();
        assert_eq!(d.len(), 2000);
        assert!(d.rows().iter().all(|&x| h.accepts(x)));
        let exact = parity_exact_dist(&h).unwrap();
        let small = tvd(&parity_sample(&h, 500, 2).unwrap().empirical().unwrap(), &exact).unwrap();
        let large = tvd(&parity_sample(&h, 50_000, 2).unwrap().empirical().unwrap(), &exact).unwrap();
        assert!(large < small);
        assert_eq!(parity_sample(&h, 30, 5).unwrap(), parity_sample(&h, 30, 5).unwrap());
    }

    #[test]
    fn high_rank_uses_null_space_sampler() {
        let rows: Vec<BitString> = (0..10).map(|i| BitString::unit(14, i)).collect();
        let h = ParityCheck::new(14, rows).unwrap();
        assert_eq!(h.rank(), 10);
        let d = parity_sample(&h, 4000, 3).unwrap();
        assert!(d.rows().iter().all(|&x| h.accepts(x)));
        let emp = d.empirical().unwrap();
        assert!(tvd(&emp, &parity_exact_dist(&h).unwrap()).unwrap() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn null_space_basis_is_a_basis(raw in proptest::collection::vec(any::<u64>(), 0..8), n in 1usize..12) {
            let mask = (1u64 << n) - 1;
            let rows: Vec<BitString> = raw.iter().map(|r| BitString::new(r & mask, n).unwrap()).collect();
            let h = ParityCheck::new(n, rows).unwrap();
            let basis = h.null_space_basis();
            prop_assert_eq!(basis.len(), n - h.rank());
            prop_assert!(basis.iter().all(|&b| h.accepts(b)));
            prop_assert_eq!(reduce(basis.iter().map(|b| b.bits()).collect()).len(), basis.len());
            let support = parity_exact_dist(&h).unwrap().mass().iter().filter(|&&m| m > 0.0).count();
            prop_assert_eq!(support, 1usize << basis.len());
        }
    }

    #[test]
    fn parity_matrix_roundtrip() {
        let h = builtin_parity(14).unwrap();
        let mut buf = Vec::new();
        h.write_to(&mut buf).unwrap();
        assert_eq!(ParityCheck::read_from(&buf[..]).unwrap(), h);
        assert!(ParityCheck::read_from(&b"101\n11\n"[..]).is_err());
    }

    #[test]
    fn worst_case_pair_post_conditions() {
        let (p, q) = worst_case_pair(12, 7).unwrap();
        assert!((tvd(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        let phi = p.char_spectrum();
        assert!(phi.max_nontrivial_abs() <= 2f64.powf(-3.0));
        assert_eq!(worst_case_pair(12, 7).unwrap(), (p, q));
        assert!(worst_case_pair(11, 0).is_err());
    }

    #[test]
    fn vanishing_instance_moments() {
        let (u, c) = lemma3_instance(6).unwrap();
        let q = exact_visible_distribution(&c).unwrap();
        assert!((tvd(&u, &q).unwrap() - 2f64.sqrt() / 4.0).abs() < 1e-12);
        for a in 1..64u64 {
            let alpha = BitString::new(a, 6).unwrap();
            let z = exact_z_expectation(&c, alpha).unwrap();
            let want = if a == 1 << 5 { 2f64.sqrt() / 2.0 } else { 0.0 };
            assert!((z - want).abs() < 1e-12);
        }
    }
}
