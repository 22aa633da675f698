//! Distributions on the Boolean cube, Walsh characteristic functions and
//! bitstring datasets.
//!
//! Bitstrings `b_1 … b_n` are stored as integers with `b_1` as the most
//! significant bit; every dense array in the crate is indexed that way.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Largest width for which dense `2^n` arrays are built.
pub const MAX_DENSE_BITS: usize = 24;

/// Tolerance on total mass when constructing a [`ProbVector`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Parity of the bitwise AND, as `±1.0`.
#[inline]
pub fn parity_sign(a: u64, b: u64) -> f64 {
    // Branch-free: the parity lands in the sign bit.
    f64::from_bits(1f64.to_bits() | (((a & b).count_ones() as u64 & 1) << 63))
}

/// A fixed-width binary word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: u64,
    width: u32,
}

impl BitString {
    pub fn new(bits: u64, width: usize) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::invalid(format!("bit width {width} outside 1..=64")));
        }
        if width < 64 && bits >> width != 0 {
            return Err(Error::invalid(format!(
                "value {bits:#x} does not fit in {width} bits"
            )));
        }
        Ok(Self {
            bits,
            width: width as u32,
        })
    }

    pub fn zeros(width: usize) -> Self {
        Self::new(0, width).expect("valid width")
    }

    /// The string with a single 1 at position `i` (0 = leftmost).
    pub fn unit(width: usize, i: usize) -> Self {
        assert!(i < width, "position {i} out of range for width {width}");
        Self::new(1u64 << (width - 1 - i), width).expect("valid width")
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    /// Bit `b_{i+1}`, counting from the left.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.width());
        (self.bits >> (self.width() - 1 - i)) & 1 == 1
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    /// `(-1)^{self · other}`.
    pub fn parity_sign(&self, other: &BitString) -> f64 {
        parity_sign(self.bits, other.bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.len() > 64 {
            return Err(Error::invalid(format!("bitstring length {} outside 1..=64", s.len())));
        }
        let mut bits = 0u64;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(Error::invalid(format!("invalid bit character {other:?}"))),
                };
        }
        BitString::new(bits, s.len())
    }
}

fn check_dense(n: usize, what: &'static str) -> Result<()> {
    if n > MAX_DENSE_BITS {
        return Err(Error::SizeCap {
            what,
            requested: n,
            limit: MAX_DENSE_BITS,
        });
    }
    Ok(())
}

/// In-place unnormalised Walsh–Hadamard butterfly.
pub fn fwht(values: &mut [f64]) {
    let len = values.len();
    assert!(len.is_power_of_two(), "transform length must be a power of two");
    let mut h = 1;
    while h < len {
        for block in values.chunks_exact_mut(2 * h) {
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

/// Dense probability distribution over `{0,1}^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    n: usize,
    mass: Vec<f64>,
}

impl ProbVector {
    /// Validates and, when the total is within [`NORMALIZATION_TOL`] of one,
    /// renormalises `mass`.
    pub fn new(n: usize, mut mass: Vec<f64>) -> Result<Self> {
        check_dense(n, "probability vector")?;
        if mass.len() != 1usize << n {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries for n = {n}, got {}",
                1usize << n,
                mass.len()
            )));
        }
        for (i, m) in mass.iter_mut().enumerate() {
            if !m.is_finite() || *m < -1e-12 {
                return Err(Error::InvalidDistribution(format!("entry {i} is {m}")));
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total}")));
        }
        mass.iter_mut().for_each(|m| *m /= total);
        Ok(Self { n, mass })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_dense(n, "probability vector")?;
        let len = 1usize << n;
        Ok(Self {
            n,
            mass: vec![1.0 / len as f64; len],
        })
    }

    pub fn delta(x: BitString) -> Result<Self> {
        check_dense(x.width(), "probability vector")?;
        let mut mass = vec![0.0; 1usize << x.width()];
        mass[x.index()] = 1.0;
        Ok(Self { n: x.width(), mass })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, x: BitString) -> f64 {
        self.mass[x.index()]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    /// Walsh characteristic function `φ(α) = Σ_x p(x) (-1)^{α·x}`.
    pub fn char_spectrum(&self) -> CharSpectrum {
        let mut phi = self.mass.clone();
        fwht(&mut phi);
        CharSpectrum { n: self.n, phi }
    }

    /// Draws `count` i.i.d. rows by inverse-CDF lookup.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Dataset> {
        let mut cdf = Vec::with_capacity(self.mass.len());
        let mut acc = 0.0;
        for m in &self.mass {
            acc += m;
            cdf.push(acc);
        }
        let last_nonzero = self.mass.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        let rows = (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let idx = cdf.partition_point(|&c| c <= u).min(last_nonzero);
                BitString::new(idx as u64, self.n).expect("index fits width")
            })
            .collect();
        Dataset::new(self.n, rows)
    }
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tvd(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.n != q.n {
        return Err(Error::WidthMismatch {
            expected: p.n,
            actual: q.n,
        });
    }
    let sum: f64 = p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * sum).min(1.0))
}

/// Walsh characteristic function of `p`.
pub fn walsh_char(p: &ProbVector) -> CharSpectrum {
    p.char_spectrum()
}

/// Characteristic function values `φ(α)` indexed by `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct CharSpectrum {
    n: usize,
    phi: Vec<f64>,
}

impl CharSpectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn get(&self, alpha: BitString) -> f64 {
        self.phi[alpha.index()]
    }

    /// Inverse transform: the butterfly again, scaled by `2^{-n}`.
    pub fn inverse(&self) -> Vec<f64> {
        let mut v = self.phi.clone();
        fwht(&mut v);
        let scale = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x *= scale);
        v
    }

    pub fn to_distribution(&self) -> Result<ProbVector> {
        ProbVector::new(self.n, self.inverse())
    }

    /// Largest `|φ(α)|` over `α ≠ 0`.
    pub fn max_nontrivial_abs(&self) -> f64 {
        self.phi[1..].iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// An ordered, non-empty list of equal-width bitstrings.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    rows: Vec<BitString>,
}

impl Dataset {
    pub fn new(n: usize, rows: Vec<BitString>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = rows.iter().find(|r| r.width() != n) {
            return Err(Error::WidthMismatch {
                expected: n,
                actual: bad.width(),
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

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Empirical `⟨Z_α⟩`: the mean of `(-1)^{α·x}` over the rows.
    pub fn z_expectation(&self, alpha: BitString) -> Result<f64> {
        if alpha.width() != self.n {
            return Err(Error::WidthMismatch {
                expected: self.n,
                actual: alpha.width(),
            });
        }
        let a = alpha.bits();
        let odd = self
            .rows
            .iter()
            .filter(|r| (r.bits() & a).count_ones() & 1 == 1)
            .count();
        let len = self.rows.len() as f64;
        Ok((len - 2.0 * odd as f64) / len)
    }

    /// Empirical distribution `count(x) / |rows|`.
    pub fn empirical(&self) -> Result<ProbVector> {
        check_dense(self.n, "empirical distribution")?;
        let mut mass = vec![0.0; 1usize << self.n];
        for r in &self.rows {
            mass[r.index()] += 1.0;
        }
        let total = self.rows.len() as f64;
        mass.iter_mut().for_each(|m| *m /= total);
        ProbVector::new(self.n, mass)
    }

    /// Writes the line format: `#n=<width>` header then one row per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#n={}", self.n)?;
        for r in &self.rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim_end_matches('\r');
            if i == 0 {
                if let Some(h) = t.strip_prefix("#n=") {
                    let w = h
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse(lineno, format!("bad width header: {e}")))?;
                    n = Some(w);
                    continue;
                }
            }
            if t.is_empty() {
                continue;
            }
            let b: BitString = t.parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
            let w = *n.get_or_insert(b.width());
            if b.width() != w {
                return Err(Error::parse(
                    lineno,
                    format!("row has {} bits, expected {w}", b.width()),
                ));
            }
            rows.push(b);
        }
        let n = n.ok_or(Error::EmptyDataset)?;
        Dataset::new(n, rows)
    }
}

/// `data_z_expectation` from the operation list.
pub fn data_z_expectation(d: &Dataset, alpha: BitString) -> Result<f64> {
    d.z_expectation(alpha)
}

/// `empirical_dist` from the operation list.
pub fn empirical_dist(d: &Dataset) -> Result<ProbVector> {
    d.empirical()
}

/// Writes a distribution file: `#n=<width>` then `<bitstring> <mass>` for
/// every non-zero entry, masses with 17 significant digits.
pub fn write_distribution<W: Write>(p: &ProbVector, mut w: W) -> Result<()> {
    writeln!(w, "#n={}", p.n)?;
    for (i, &m) in p.mass.iter().enumerate() {
        if m != 0.0 {
            let b = BitString::new(i as u64, p.n)?;
            writeln!(w, "{b} {m:.16e}")?;
        }
    }
    Ok(())
}

pub fn read_distribution<R: BufRead>(r: R) -> Result<ProbVector> {
    let mut n: Option<usize> = None;
    let mut mass: Vec<f64> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix("#n=") {
            let w: usize = h
                .trim()
                .parse()
                .map_err(|e| Error::parse(lineno, format!("bad width header: {e}")))?;
            if w > MAX_DENSE_BITS {
                return Err(Error::SizeCap {
                    what: "distribution file",
                    requested: w,
                    limit: MAX_DENSE_BITS,
                });
            }
            n = Some(w);
            mass = vec![0.0; 1usize << w];
            continue;
        }
        if t.starts_with('#') {
            continue;
        }
        let w = n.ok_or_else(|| Error::parse(lineno, "missing #n=<width> header"))?;
        let mut parts = t.split_whitespace();
        let (bs, ms) = match (parts.next(), parts.next(), parts.next()) {
            (Some(b), Some(m), None) => (b, m),
            _ => return Err(Error::parse(lineno, "expected `<bitstring> <mass>`")),
        };
        let b: BitString = bs.parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        if b.width() != w {
            return Err(Error::parse(lineno, format!("bitstring width {} != {w}", b.width())));
        }
        let m: f64 = ms
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad mass {ms:?}: {e}")))?;
        mass[b.index()] += m;
    }
    let n = n.ok_or_else(|| Error::parse(1, "missing #n=<width> header"))?;
    ProbVector::new(n, mass)
}
