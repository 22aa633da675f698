//! Writing a probability vector as a uniform mixture of sparse vectors.

use crate::error::{Error, Result};

/// Entries at or below this are treated as zero.
const DUST: f64 = 1e-15;

/// A probability vector with at most three non-zero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseComponent {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseComponent {
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() > 3 || support.len() != weights.len() {
            return Err(Error::invalid(format!(
                "a sparse component needs 1 to 3 outcomes with one weight each, got {} / {}",
                support.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("component weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("component weights sum to {total}")));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(Error::invalid("component support has repeated outcomes"));
        }
        Ok(Self { support, weights })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Dense vector of length `dim`.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (&s, &w) in self.support.iter().zip(&self.weights) {
            v[s] += w;
        }
        v
    }
}

/// `Q ∈ R^{N×N}` with row sums `1/N`, column sums `p_j` and at most three
/// non-zeros per row; row `i` scaled by `N` is the `i`-th sparse component.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl AllocationMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for i in 0..self.dim {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn max_row_nonzeros(&self) -> usize {
        (0..self.dim)
            .map(|i| self.row(i).iter().filter(|&&v| v > 1e-12).count())
            .max()
            .unwrap_or(0)
    }

    /// Rows as normalised sparse components.
    pub fn components(&self) -> Vec<SparseComponent> {
        (0..self.dim)
            .map(|i| {
                let (support, raw): (Vec<usize>, Vec<f64>) = self
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, &v)| (j, v))
                    .unzip();
                let total: f64 = raw.iter().sum();
                let weights = raw.iter().map(|v| v / total).collect();
                SparseComponent::new(support, weights).expect("allocation rows are 3-sparse")
            })
            .collect()
    }
}

fn normalised(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::invalid("probability vector is empty"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("probability entries must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probability entries sum to {total}")));
    }
    Ok(p.iter().map(|v| v / total).collect())
}

/// Greedy allocation: sort ascending, place the entries below `1/N` on the
/// diagonal, then pour every remaining entry down the rows in order, each
/// row taking what is left of its `1/N` capacity.
pub fn decompose_3sparse(p: &[f64]) -> Result<AllocationMatrix> {
    let p = normalised(p)?;
    let dim = p.len();
    let cap = 1.0 / dim as f64;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&j| p[j]).collect();
    let k = sorted.iter().filter(|&&v| v < cap).count().max(1);

    // q[i][l] in sorted column order.
    let mut q = vec![0.0; dim * dim];
    let mut used = vec![0.0; dim];
    for i in 0..k {
        q[i * dim + i] = sorted[i];
        used[i] = sorted[i];
    }
    let mut first_open = 0;
    for l in k..dim {
        let mut residual = sorted[l];
        let mut i = first_open;
        while residual > DUST && i < dim {
            let room = cap - used[i];
            if room > DUST {
                let amount = room.min(residual);
                q[i * dim + l] += amount;
                used[i] += amount;
                residual -= amount;
            }
            if cap - used[i] <= DUST && i == first_open {
                first_open += 1;
            }
            i += 1;
        }
    }

    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        for (l, &j) in order.iter().enumerate() {
            entries[i * dim + j] = q[i * dim + l];
        }
    }
    Ok(AllocationMatrix { dim, entries })
}

/// Splits a 3-sparse `q` with sorted weights `p_a ≤ p_b ≤ p_c` into
/// `{a: 2p_a, c: 1 − 2p_a}` and `{b: 2p_b, c: 1 − 2p_b}`; sparser inputs are
/// returned twice.
pub fn split_3sparse(q: &SparseComponent) -> Result<(SparseComponent, SparseComponent)> {
    let live: Vec<(usize, f64)> = q
        .support()
        .iter()
        .copied()
        .zip(q.weights().iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if live.len() > 3 {
        return Err(Error::invalid("component has more than three outcomes"));
    }
    if live.len() < 3 {
        return Ok((q.clone(), q.clone()));
    }
    let mut s = live;
    s.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let [(a, pa), (b, pb), (c, _)] = [s[0], s[1], s[2]];
    let q1 = SparseComponent::new(vec![a, c], vec![2.0 * pa, 1.0 - 2.0 * pa])?;
    let q2 = SparseComponent::new(vec![b, c], vec![2.0 * pb, 1.0 - 2.0 * pb])?;
    Ok((q1, q2))
}

/// `2N` two-sparse components whose uniform mixture is `p`.
pub fn decompose_2sparse(p: &[f64]) -> Result<Vec<SparseComponent>> {
    let q = decompose_3sparse(p)?;
    let mut out = Vec::with_capacity(2 * q.dim());
    for c in q.components() {
        let (a, b) = split_3sparse(&c)?;
        out.push(a);
        out.push(b);
    }
    Ok(out)
}
