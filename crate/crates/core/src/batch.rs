//! Syndrome batches and the `b01` text format.
//!
//! ```text
//! b01 <shots> <T> <n_s> <k> [readout] [train]
//! ```
//!
//! followed by one line of `0`/`1` characters per shot: `T * n_s` syndrome
//! bits (cycle-major), `k` label bits, then with `train` the `T * k`
//! per-cycle pseudo labels, then with `readout` the `n_s` readout-detector
//! bits, then with both flags the `T * n_s` pseudo readout bits.

use std::io::{BufRead, Write};

use crate::error::CircuitError;
use crate::tanner::Basis;

/// Pseudo readout branches forked after every cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoData {
    /// `shots x T x readout_checks`
    pub readout: Vec<u8>,
    /// `shots x T x k`
    pub labels: Vec<u8>,
}

/// Bits stored one per byte (`0` or `1`), row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyndromeBatch {
    pub shots: usize,
    pub cycles: usize,
    pub checks: usize,
    pub num_logicals: usize,
    /// Either `checks` or `0`.
    pub readout_checks: usize,
    /// `shots x cycles x checks`
    pub syndrome: Vec<u8>,
    /// `shots x readout_checks`
    pub readout: Vec<u8>,
    /// `shots x num_logicals`
    pub labels: Vec<u8>,
    pub pseudo: Option<PseudoData>,
    pub basis: Option<Basis>,
    pub seed: u64,
}

impl SyndromeBatch {
    pub fn empty(cycles: usize, checks: usize, readout_checks: usize, num_logicals: usize) -> Self {
        Self {
            shots: 0,
            cycles,
            checks,
            num_logicals,
            readout_checks,
            syndrome: Vec::new(),
            readout: Vec::new(),
            labels: Vec::new(),
            pseudo: None,
            basis: None,
            seed: 0,
        }
    }

    pub fn check_shape(&self) -> Result<(), CircuitError> {
        let s = self.shots;
        let bad = |what: &str, got: usize, want: usize| {
            Err(CircuitError::Shape(format!("{what}: {got} bits, expected {want}")))
        };
        if self.syndrome.len() != s * self.cycles * self.checks {
            return bad("syndrome", self.syndrome.len(), s * self.cycles * self.checks);
        }
        if self.readout_checks != 0 && self.readout_checks != self.checks {
            return Err(CircuitError::Shape("readout width must be 0 or n_s".into()));
        }
        if self.readout.len() != s * self.readout_checks {
            return bad("readout", self.readout.len(), s * self.readout_checks);
        }
        if self.labels.len() != s * self.num_logicals {
            return bad("labels", self.labels.len(), s * self.num_logicals);
        }
        if let Some(p) = &self.pseudo {
            if p.labels.len() != s * self.cycles * self.num_logicals {
                return bad("pseudo labels", p.labels.len(), s * self.cycles * self.num_logicals);
            }
            if p.readout.len() != s * self.cycles * self.readout_checks {
                return bad(
                    "pseudo readout",
                    p.readout.len(),
                    s * self.cycles * self.readout_checks,
                );
            }
        }
        Ok(())
    }

    /// Syndrome of one cycle.
    pub fn cycle(&self, shot: usize, t: usize) -> &[u8] {
        let start = (shot * self.cycles + t) * self.checks;
        &self.syndrome[start..start + self.checks]
    }

    pub fn readout_of(&self, shot: usize) -> &[u8] {
        let w = self.readout_checks;
        &self.readout[shot * w..(shot + 1) * w]
    }

    pub fn label(&self, shot: usize) -> &[u8] {
        let k = self.num_logicals;
        &self.labels[shot * k..(shot + 1) * k]
    }

    pub fn pseudo_label(&self, shot: usize, t: usize) -> Option<&[u8]> {
        let k = self.num_logicals;
        self.pseudo.as_ref().map(|p| {
            let start = (shot * self.cycles + t) * k;
            &p.labels[start..start + k]
        })
    }

    pub fn pseudo_readout(&self, shot: usize, t: usize) -> Option<&[u8]> {
        let w = self.readout_checks;
        self.pseudo.as_ref().map(|p| {
            let start = (shot * self.cycles + t) * w;
            &p.readout[start..start + w]
        })
    }

    /// All detector bits of one shot in circuit order (cycles then readout).
    pub fn detectors(&self, shot: usize) -> Vec<u8> {
        let per = self.cycles * self.checks;
        let mut out = Vec::with_capacity(per + self.readout_checks);
        out.extend_from_slice(&self.syndrome[shot * per..(shot + 1) * per]);
        out.extend_from_slice(self.readout_of(shot));
        out
    }

    pub fn num_detectors(&self) -> usize {
        self.cycles * self.checks + self.readout_checks
    }

    /// Sub-batch of the given shots, in the given order.
    pub fn select(&self, shots: &[usize]) -> SyndromeBatch {
        let gather = |src: &[u8], width: usize| -> Vec<u8> {
            let mut out = Vec::with_capacity(shots.len() * width);
            for &s in shots {
                out.extend_from_slice(&src[s * width..(s + 1) * width]);
            }
            out
        };
        SyndromeBatch {
            shots: shots.len(),
            cycles: self.cycles,
            checks: self.checks,
            num_logicals: self.num_logicals,
            readout_checks: self.readout_checks,
            syndrome: gather(&self.syndrome, self.cycles * self.checks),
            readout: gather(&self.readout, self.readout_checks),
            labels: gather(&self.labels, self.num_logicals),
            pseudo: self.pseudo.as_ref().map(|p| PseudoData {
                readout: gather(&p.readout, self.cycles * self.readout_checks),
                labels: gather(&p.labels, self.cycles * self.num_logicals),
            }),
            basis: self.basis,
            seed: self.seed,
        }
    }

    /// Appends the shots of `other`, which must have the same shape.
    pub fn append(&mut self, other: &SyndromeBatch) -> Result<(), CircuitError> {
        if (self.cycles, self.checks, self.num_logicals, self.readout_checks)
            != (other.cycles, other.checks, other.num_logicals, other.readout_checks)
            || self.pseudo.is_some() != other.pseudo.is_some()
        {
            return Err(CircuitError::Shape("cannot append batches of different shapes".into()));
        }
        self.shots += other.shots;
        self.syndrome.extend_from_slice(&other.syndrome);
        self.readout.extend_from_slice(&other.readout);
        self.labels.extend_from_slice(&other.labels);
        if let (Some(a), Some(b)) = (self.pseudo.as_mut(), other.pseudo.as_ref()) {
            a.readout.extend_from_slice(&b.readout);
            a.labels.extend_from_slice(&b.labels);
        }
        Ok(())
    }

    pub fn write_b01<W: Write>(&self, mut out: W) -> Result<(), CircuitError> {
        self.check_shape()?;
        let mut header = format!(
            "b01 {} {} {} {}",
            self.shots, self.cycles, self.checks, self.num_logicals
        );
        if self.readout_checks > 0 {
            header.push_str(" readout");
        }
        if self.pseudo.is_some() {
            header.push_str(" train");
        }
        writeln!(out, "{header}")?;
        let mut line = Vec::new();
        let push = |line: &mut Vec<u8>, bits: &[u8]| line.extend(bits.iter().map(|&b| b'0' + b));
        let per = self.cycles * self.checks;
        let tk = self.cycles * self.num_logicals;
        let tr = self.cycles * self.readout_checks;
        for s in 0..self.shots {
            line.clear();
            push(&mut line, &self.syndrome[s * per..(s + 1) * per]);
            push(&mut line, self.label(s));
            if let Some(p) = &self.pseudo {
                push(&mut line, &p.labels[s * tk..(s + 1) * tk]);
            }
            if self.readout_checks > 0 {
                push(&mut line, self.readout_of(s));
                if let Some(p) = &self.pseudo {
                    push(&mut line, &p.readout[s * tr..(s + 1) * tr]);
                }
            }
            line.push(b'\n');
            out.write_all(&line)?;
        }
        Ok(())
    }

    pub fn read_b01<R: BufRead>(input: R) -> Result<Self, CircuitError> {
        let mut lines = input.lines();
        let syntax = |line: usize, message: String| CircuitError::Syntax {
            line,
            column: 1,
            message,
        };
        let header = lines
            .next()
            .ok_or_else(|| syntax(1, "empty batch file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 5 || fields[0] != "b01" {
            return Err(syntax(1, format!("expected `b01 shots T n_s k`, got `{header}`")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| syntax(1, format!("bad header field `{s}`")))
        };
        let (shots, cycles, checks, k) = (
            num(fields[1])?,
            num(fields[2])?,
            num(fields[3])?,
            num(fields[4])?,
        );
        let mut has_readout = false;
        let mut train = false;
        for flag in &fields[5..] {
            match *flag {
                "readout" => has_readout = true,
                "train" => train = true,
                other => return Err(syntax(1, format!("unknown header flag `{other}`"))),
            }
        }
        let readout_checks = if has_readout { checks } else { 0 };
        let per = cycles * checks;
        let tk = cycles * k;
        let tr = cycles * readout_checks;
        let width = per + k + if train { tk } else { 0 } + readout_checks + if train { tr } else { 0 };

        let mut batch = SyndromeBatch::empty(cycles, checks, readout_checks, k);
        batch.shots = shots;
        let mut pseudo = train.then(|| PseudoData {
            readout: Vec::with_capacity(shots * tr),
            labels: Vec::with_capacity(shots * tk),
        });
        for s in 0..shots {
            let line_no = s + 2;
            let line = lines
                .next()
                .ok_or_else(|| syntax(line_no, format!("expected {shots} shot lines, found {s}")))??;
            let line = line.trim_end();
            if line.len() != width {
                return Err(syntax(
                    line_no,
                    format!("shot line has {} bits, expected {width}", line.len()),
                ));
            }
            let mut bits = Vec::with_capacity(width);
            for (i, ch) in line.bytes().enumerate() {
                match ch {
                    b'0' | b'1' => bits.push(ch - b'0'),
                    _ => {
                        return Err(CircuitError::Syntax {
                            line: line_no,
                            column: i + 1,
                            message: format!("unexpected character `{}`", ch as char),
                        })
                    }
                }
            }
            let mut rest = &bits[..];
            let mut take = |n: usize| {
                let (a, b) = rest.split_at(n);
                rest = b;
                a
            };
            batch.syndrome.extend_from_slice(take(per));
            batch.labels.extend_from_slice(take(k));
            if let Some(p) = pseudo.as_mut() {
                p.labels.extend_from_slice(take(tk));
            }
            if has_readout {
                batch.readout.extend_from_slice(take(readout_checks));
                if let Some(p) = pseudo.as_mut() {
                    p.readout.extend_from_slice(take(tr));
                }
            }
        }
        batch.pseudo = pseudo;
        batch.check_shape()?;
        Ok(batch)
    }
}
