//! IQP circuit descriptions and their checkpoint format.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::dist::{parity_sign, BitString};
use crate::error::{Error, Result};

/// Largest total width accepted for a dense per-basis-state diagonal.
pub const MAX_DENSE_DIAGONAL_BITS: usize = 21;

/// `exp(i θ Z_g)` with `g` a mask over all `m + n` qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorGate {
    pub mask: BitString,
    pub angle: f64,
}

/// The diagonal layer of the circuit.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagonal {
    Generators(Vec<GeneratorGate>),
    /// One phase per basis state of the full `m + n` register.
    Dense(Vec<f64>),
}

/// `H^{⊗(m+n)} D H^{⊗(m+n)}` with the leading `m_hidden` qubits traced out.
#[derive(Clone, Debug, PartialEq)]
pub struct IqpCircuit {
    n_visible: usize,
    m_hidden: usize,
    diagonal: Diagonal,
}

impl IqpCircuit {
    pub fn with_generators(
        n_visible: usize,
        m_hidden: usize,
        gates: Vec<GeneratorGate>,
    ) -> Result<Self> {
        let width = check_widths(n_visible, m_hidden)?;
        let mut seen = HashSet::with_capacity(gates.len());
        for g in &gates {
            if g.mask.width() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    actual: g.mask.width(),
                });
            }
            if g.mask.bits() == 0 {
                return Err(Error::invalid("generator mask must be non-zero"));
            }
            if !seen.insert(g.mask.bits()) {
                return Err(Error::invalid(format!("duplicate generator mask {}", g.mask)));
            }
        }
        Ok(Self {
            n_visible,
            m_hidden,
            diagonal: Diagonal::Generators(gates),
        })
    }

    pub fn with_dense(n_visible: usize, m_hidden: usize, phases: Vec<f64>) -> Result<Self> {
        let width = check_widths(n_visible, m_hidden)?;
        if width > MAX_DENSE_DIAGONAL_BITS {
            return Err(Error::SizeCap {
                what: "dense diagonal",
                requested: width,
                limit: MAX_DENSE_DIAGONAL_BITS,
            });
        }
        if phases.len() != 1usize << width {
            return Err(Error::invalid(format!(
                "dense diagonal needs {} phases, got {}",
                1usize << width,
                phases.len()
            )));
        }
        Ok(Self {
            n_visible,
            m_hidden,
            diagonal: Diagonal::Dense(phases),
        })
    }

    /// Every generator of weight `1..=max_weight` over `m + n` qubits, all
    /// angles zero. Gates are ordered by weight, then by leftmost support.
    pub fn all_gates(n_visible: usize, m_hidden: usize, max_weight: usize) -> Result<Self> {
        let width = check_widths(n_visible, m_hidden)?;
        if max_weight == 0 {
            return Err(Error::invalid("max generator weight must be positive"));
        }
        let mut gates = Vec::new();
        for w in 1..=max_weight.min(width) {
            let mut positions: Vec<usize> = (0..w).collect();
            loop {
                let bits = positions
                    .iter()
                    .fold(0u64, |acc, &p| acc | (1u64 << (width - 1 - p)));
                gates.push(GeneratorGate {
                    mask: BitString::new(bits, width)?,
                    angle: 0.0,
                });
                if !next_combination(&mut positions, width) {
                    break;
                }
            }
        }
        Self::with_generators(n_visible, m_hidden, gates)
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn m_hidden(&self) -> usize {
        self.m_hidden
    }

    pub fn total_width(&self) -> usize {
        self.n_visible + self.m_hidden
    }

    pub fn diagonal(&self) -> &Diagonal {
        &self.diagonal
    }

    pub fn gates(&self) -> Result<&[GeneratorGate]> {
        match &self.diagonal {
            Diagonal::Generators(g) => Ok(g),
            Diagonal::Dense(_) => Err(Error::DenseModeUnsupported),
        }
    }

    pub fn num_gates(&self) -> usize {
        match &self.diagonal {
            Diagonal::Generators(g) => g.len(),
            Diagonal::Dense(_) => 0,
        }
    }

    pub fn angles(&self) -> Result<Vec<f64>> {
        Ok(self.gates()?.iter().map(|g| g.angle).collect())
    }

    pub fn set_angles(&mut self, angles: &[f64]) -> Result<()> {
        match &mut self.diagonal {
            Diagonal::Generators(g) => {
                if g.len() != angles.len() {
                    return Err(Error::invalid(format!(
                        "{} angles for {} gates",
                        angles.len(),
                        g.len()
                    )));
                }
                for (gate, &a) in g.iter_mut().zip(angles) {
                    gate.angle = a;
                }
                Ok(())
            }
            Diagonal::Dense(_) => Err(Error::DenseModeUnsupported),
        }
    }

    /// Phase `Φ(x)` of basis state `x` of the full register.
    pub fn phase(&self, x: u64) -> f64 {
        match &self.diagonal {
            Diagonal::Generators(gates) => gates
                .iter()
                .map(|g| g.angle * parity_sign(g.mask.bits(), x))
                .sum(),
            Diagonal::Dense(p) => p[x as usize],
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n_visible = {}", self.n_visible)?;
        writeln!(w, "m_hidden = {}", self.m_hidden)?;
        match &self.diagonal {
            Diagonal::Generators(gates) => {
                writeln!(w, "mode = generators")?;
                for g in gates {
                    writeln!(w, "{} {:.16e}", g.mask, g.angle)?;
                }
            }
            Diagonal::Dense(phases) => {
                writeln!(w, "mode = dense")?;
                for p in phases {
                    writeln!(w, "{p:.16e}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self> {
        let mut header: [Option<String>; 3] = [None, None, None];
        let keys = ["n_visible", "m_hidden", "mode"];
        let mut gates = Vec::new();
        let mut phases = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = t.split_once('=') {
                let k = k.trim();
                let slot = keys
                    .iter()
                    .position(|&key| key == k)
                    .ok_or_else(|| Error::parse(lineno, format!("unknown key {k:?}")))?;
                header[slot] = Some(v.trim().to_string());
                continue;
            }
            let mode = header[2]
                .as_deref()
                .ok_or_else(|| Error::parse(lineno, "body before `mode` line"))?;
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("bad number {s:?}: {e}")))
            };
            match mode {
                "generators" => {
                    let (m, a) = t
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| Error::parse(lineno, "expected `<mask> <angle>`"))?;
                    let mask: BitString =
                        m.parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
                    gates.push(GeneratorGate {
                        mask,
                        angle: parse_f(a.trim())?,
                    });
                }
                "dense" => phases.push(parse_f(t)?),
                other => return Err(Error::parse(lineno, format!("unknown mode {other:?}"))),
            }
        }
        let get = |slot: usize| {
            header[slot]
                .clone()
                .ok_or_else(|| Error::parse(0, format!("missing `{}`", keys[slot])))
        };
        let n: usize = get(0)?
            .parse()
            .map_err(|_| Error::parse(0, "bad n_visible"))?;
        let m: usize = get(1)?
            .parse()
            .map_err(|_| Error::parse(0, "bad m_hidden"))?;
        match get(2)?.as_str() {
            "generators" => Self::with_generators(n, m, gates),
            "dense" => Self::with_dense(n, m, phases),
            other => Err(Error::parse(0, format!("unknown mode {other:?}"))),
        }
    }
}

fn check_widths(n_visible: usize, m_hidden: usize) -> Result<usize> {
    if n_visible == 0 {
        return Err(Error::invalid("circuit needs at least one visible qubit"));
    }
    let width = n_visible + m_hidden;
    if width > 64 {
        return Err(Error::SizeCap {
            what: "circuit register",
            requested: width,
            limit: 64,
        });
    }
    Ok(width)
}

fn next_combination(pos: &mut [usize], n: usize) -> bool {
    let k = pos.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if pos[i] < n - k + i {
            pos[i] += 1;
            for j in i + 1..k {
                pos[j] = pos[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_gates_counts_and_order() {
        let c = IqpCircuit::all_gates(12, 0, 2).unwrap();
        assert_eq!(c.num_gates(), 12 + 66);
        let g = c.gates().unwrap();
        assert_eq!(g[0].mask.to_string(), "100000000000");
        assert_eq!(g[11].mask.to_string(), "000000000001");
        assert_eq!(g[12].mask.to_string(), "110000000000");
        let c6 = IqpCircuit::all_gates(12, 0, 6).unwrap();
        assert_eq!(c6.num_gates(), 12 + 66 + 220 + 495 + 792 + 924);
    }

    #[test]
    fn rejects_bad_gates() {
        let z = GeneratorGate {
            mask: BitString::zeros(2),
            angle: 0.1,
        };
        assert!(IqpCircuit::with_generators(2, 0, vec![z]).is_err());
        let g = GeneratorGate {
            mask: "01".parse().unwrap(),
            angle: 0.1,
        };
        assert!(IqpCircuit::with_generators(2, 0, vec![g, g]).is_err());
        assert!(IqpCircuit::with_generators(3, 0, vec![g]).is_err());
        assert!(matches!(
            IqpCircuit::with_dense(12, 10, vec![]),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_angles_exactly() {
        let mut c = IqpCircuit::all_gates(3, 1, 2).unwrap();
        let angles: Vec<f64> = (0..c.num_gates()).map(|i| (i as f64 * 0.7311).sin() * 9.1).collect();
        c.set_angles(&angles).unwrap();
        let mut buf = Vec::new();
        c.write_checkpoint(&mut buf).unwrap();
        assert_eq!(IqpCircuit::read_checkpoint(&buf[..]).unwrap(), c);

        let d = IqpCircuit::with_dense(1, 1, vec![0.0, 1.0 / 3.0, -2.5, 1e-300]).unwrap();
        let mut buf = Vec::new();
        d.write_checkpoint(&mut buf).unwrap();
        assert_eq!(IqpCircuit::read_checkpoint(&buf[..]).unwrap(), d);
    }

    #[test]
    fn checkpoint_parse_errors_carry_lines() {
        let text = "n_visible = 2\nm_hidden = 0\nmode = generators\n10 0.5\n1x 0.2\n";
        match IqpCircuit::read_checkpoint(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
