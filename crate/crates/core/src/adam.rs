//! Bias-corrected Adam.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            lr,
            beta1,
            beta2,
            eps: ADAM_EPS,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One descent step `params ← params − lr·m̂/(√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::invalid(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step_count = {}", self.step_count)?;
        writeln!(w, "lr = {:e}", self.lr)?;
        writeln!(w, "beta1 = {:e}", self.beta1)?;
        writeln!(w, "beta2 = {:e}", self.beta2)?;
        writeln!(w, "eps = {:e}", self.eps)?;
        writeln!(w, "len = {}", self.len())?;
        for (m, v) in self.first_moment.iter().zip(&self.second_moment) {
            writeln!(w, "{m:e} {v:e}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut s = AdamState::new(0, 0.0, 0.0, 0.0);
        let mut len = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad number {v:?}: {e}")))
            };
            if let Some((k, v)) = t.split_once('=') {
                match k.trim() {
                    "step_count" => {
                        s.step_count = v.trim().parse().map_err(|_| Error::parse(lineno, "bad step count"))?
                    }
                    "lr" => s.lr = num(v)?,
                    "beta1" => s.beta1 = num(v)?,
                    "beta2" => s.beta2 = num(v)?,
                    "eps" => s.eps = num(v)?,
                    "len" => len = Some(v.trim().parse::<usize>().map_err(|_| Error::parse(lineno, "bad len"))?),
                    other => return Err(Error::parse(lineno, format!("unknown key {other:?}"))),
                }
            } else {
                let (m, v) = t
                    .split_once(' ')
                    .ok_or_else(|| Error::parse(lineno, "expected `<m> <v>`"))?;
                s.first_moment.push(num(m)?);
                s.second_moment.push(num(v)?);
            }
        }
        if len != Some(s.len()) {
            return Err(Error::parse(0, "moment count does not match `len`"));
        }
        Ok(s)
    }
}
