//! Detector error models: independent error mechanisms with detector and
//! observable signatures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::circuit::{Instruction, NoiseChannel, NoisyCircuit};
use crate::error::CircuitError;
use crate::gf2::BitVec;

#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism {
    pub probability: f64,
    /// Sorted, duplicate-free.
    pub detectors: Vec<usize>,
    /// Sorted, duplicate-free.
    pub observables: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorErrorModel {
    pub mechanisms: Vec<Mechanism>,
    pub num_detectors: usize,
    pub num_observables: usize,
}

/// `p1 (1 - p2) + p2 (1 - p1)`: probability that exactly one of two
/// independent events fires.
pub fn xor_probability(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

/// Per-component probability of the independent X/Y/Z decomposition of a
/// single-qubit depolarizing channel with total error probability `p`.
pub fn depolarize1_component(p: f64) -> f64 {
    (1.0 - (1.0 - 4.0 * p / 3.0).sqrt()) / 2.0
}

/// Per-component probability of the independent 15-Pauli decomposition of a
/// two-qubit depolarizing channel.
pub fn depolarize2_component(p: f64) -> f64 {
    (1.0 - (1.0 - 16.0 * p / 15.0).powf(0.125)) / 2.0
}

type Signature = (Vec<usize>, Vec<usize>);

struct Accumulator {
    merged: BTreeMap<Signature, f64>,
}

impl Accumulator {
    fn add(&mut self, p: f64, sig: &BitVec, num_detectors: usize) {
        if p <= 0.0 || sig.is_zero() {
            return;
        }
        let mut dets = Vec::new();
        let mut obs = Vec::new();
        for i in sig.ones() {
            if i < num_detectors {
                dets.push(i);
            } else {
                obs.push(i - num_detectors);
            }
        }
        let entry = self.merged.entry((dets, obs)).or_insert(0.0);
        *entry = xor_probability(*entry, p);
    }
}

impl DetectorErrorModel {
    /// Mechanisms sorted by signature with duplicates merged, empty ones dropped
    /// and probabilities above one half folded to `1 - q`.
    pub fn canonical(
        mechanisms: impl IntoIterator<Item = Mechanism>,
        num_detectors: usize,
        num_observables: usize,
    ) -> Self {
        let mut merged: BTreeMap<Signature, f64> = BTreeMap::new();
        for m in mechanisms {
            if m.detectors.is_empty() && m.observables.is_empty() {
                continue;
            }
            let entry = merged.entry((m.detectors, m.observables)).or_insert(0.0);
            *entry = xor_probability(*entry, m.probability);
        }
        Self::from_merged(merged, num_detectors, num_observables)
    }

    fn from_merged(
        merged: BTreeMap<Signature, f64>,
        num_detectors: usize,
        num_observables: usize,
    ) -> Self {
        let mechanisms = merged
            .into_iter()
            .filter(|(_, q)| *q > 0.0)
            .map(|((detectors, observables), mut q)| {
                if q > 0.5 {
                    log::warn!(
                        "mechanism {detectors:?}/{observables:?} has merged probability {q}; storing {}",
                        1.0 - q
                    );
                    q = 1.0 - q;
                }
                Mechanism {
                    probability: q,
                    detectors,
                    observables,
                }
            })
            .collect();
        Self {
            mechanisms,
            num_detectors,
            num_observables,
        }
    }

    /// Re-merges identical signatures; a no-op on extracted models.
    pub fn merged(&self) -> Self {
        Self::canonical(
            self.mechanisms.iter().cloned(),
            self.num_detectors,
            self.num_observables,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.mechanisms {
            write!(out, "error({})", m.probability).unwrap();
            for d in &m.detectors {
                write!(out, " D{d}").unwrap();
            }
            for l in &m.observables {
                write!(out, " L{l}").unwrap();
            }
            out.push('\n');
        }
        // Declarations keep the counts when trailing detectors are never flipped.
        if self.num_detectors > 0 {
            writeln!(out, "detector D{}", self.num_detectors - 1).unwrap();
        }
        if self.num_observables > 0 {
            writeln!(out, "logical_observable L{}", self.num_observables - 1).unwrap();
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, CircuitError> {
        let mut mechanisms = Vec::new();
        let mut num_detectors = 0;
        let mut num_observables = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| CircuitError::Syntax {
                line: line_no,
                column: 1,
                message,
            };
            let mut parts = body.split_whitespace();
            let head = parts.next().unwrap_or("");
            let mut dets = Vec::new();
            let mut obs = Vec::new();
            for tok in parts {
                if let Some(d) = tok.strip_prefix('D') {
                    dets.push(d.parse::<usize>().map_err(|_| err(format!("bad target `{tok}`")))?);
                } else if let Some(l) = tok.strip_prefix('L') {
                    obs.push(l.parse::<usize>().map_err(|_| err(format!("bad target `{tok}`")))?);
                } else {
                    return Err(err(format!("bad target `{tok}`")));
                }
            }
            num_detectors = dets.iter().map(|d| d + 1).fold(num_detectors, usize::max);
            num_observables = obs.iter().map(|l| l + 1).fold(num_observables, usize::max);
            if head == "detector" || head == "logical_observable" {
                continue;
            }
            let p_text = head
                .strip_prefix("error(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| err(format!("unknown DEM line `{head}`")))?;
            let probability: f64 = p_text
                .parse()
                .map_err(|_| err(format!("bad probability `{p_text}`")))?;
            if !(0.0..=1.0).contains(&probability) {
                return Err(CircuitError::Probability(probability));
            }
            // Repeated targets cancel in pairs.
            let dedup = |mut v: Vec<usize>| {
                v.sort_unstable();
                let mut out: Vec<usize> = Vec::new();
                for x in v {
                    if out.last() == Some(&x) {
                        out.pop();
                    } else {
                        out.push(x);
                    }
                }
                out
            };
            mechanisms.push(Mechanism {
                probability,
                detectors: dedup(dets),
                observables: dedup(obs),
            });
        }
        Ok(Self::canonical(mechanisms, num_detectors, num_observables))
    }

    /// Detector-by-mechanism incidence as adjacency lists.
    pub fn detector_columns(&self) -> Vec<Vec<usize>> {
        self.mechanisms.iter().map(|m| m.detectors.clone()).collect()
    }
}

/// Flattens every noise channel into independent single-Pauli mechanisms by
/// propagating detector/observable sensitivities backwards through the
/// circuit.
///
/// `x_sens[q]` holds the detectors and observables an X error on `q` would
/// flip at the current point of the backward sweep, `z_sens[q]` likewise for
/// Z errors.
pub fn extract_dem(circuit: &NoisyCircuit) -> Result<DetectorErrorModel, CircuitError> {
    circuit.validate()?;
    let num_detectors = circuit.num_detectors();
    let num_observables = circuit.num_observables();
    let width = num_detectors + num_observables;
    let num_meas = circuit.num_measurements();

    let mut meas_sens = vec![BitVec::zeros(width); num_meas];
    let mut det = 0;
    for inst in &circuit.instructions {
        match inst {
            Instruction::Detector(recs) => {
                for &m in recs {
                    meas_sens[m].flip(det);
                }
                det += 1;
            }
            Instruction::Observable { index, records } => {
                for &m in records {
                    meas_sens[m].flip(num_detectors + index);
                }
            }
            _ => {}
        }
    }

    let n = circuit.num_qubits;
    let mut xs = vec![BitVec::zeros(width); n];
    let mut zs = vec![BitVec::zeros(width); n];
    let mut acc = Accumulator {
        merged: BTreeMap::new(),
    };
    let mut next_meas = num_meas;

    for inst in circuit.instructions.iter().rev() {
        match inst {
            Instruction::Tick | Instruction::Detector(_) | Instruction::Observable { .. } => {}
            Instruction::Reset { targets, .. } => {
                for &q in targets {
                    xs[q] = BitVec::zeros(width);
                    zs[q] = BitVec::zeros(width);
                }
            }
            Instruction::H(targets) => {
                for &q in targets {
                    std::mem::swap(&mut xs[q], &mut zs[q]);
                }
            }
            Instruction::Cx(pairs) => {
                for &(c, t) in pairs.iter().rev() {
                    let xt = xs[t].clone();
                    xs[c].xor_assign(&xt);
                    let zc = zs[c].clone();
                    zs[t].xor_assign(&zc);
                }
            }
            Instruction::Measure { targets, reset } => {
                for &q in targets.iter().rev() {
                    next_meas -= 1;
                    if *reset {
                        xs[q] = BitVec::zeros(width);
                        zs[q] = BitVec::zeros(width);
                    }
                    xs[q].xor_assign(&meas_sens[next_meas]);
                }
            }
            Instruction::Noise {
                channel,
                p,
                targets,
            } => match channel {
                NoiseChannel::XError => {
                    for &q in targets {
                        acc.add(*p, &xs[q], num_detectors);
                    }
                }
                NoiseChannel::ZError => {
                    for &q in targets {
                        acc.add(*p, &zs[q], num_detectors);
                    }
                }
                NoiseChannel::Depolarize1 => {
                    if *p > 0.75 {
                        return Err(CircuitError::Probability(*p));
                    }
                    let q1 = depolarize1_component(*p);
                    for &q in targets {
                        acc.add(q1, &xs[q], num_detectors);
                        acc.add(q1, &xs[q].xor(&zs[q]), num_detectors);
                        acc.add(q1, &zs[q], num_detectors);
                    }
                }
                NoiseChannel::Depolarize2 => {
                    if *p > 15.0 / 16.0 {
                        return Err(CircuitError::Probability(*p));
                    }
                    let q2 = depolarize2_component(*p);
                    for pair in targets.chunks(2) {
                        let (a, b) = (pair[0], pair[1]);
                        let single = |q: usize, k: usize| -> BitVec {
                            match k {
                                0 => BitVec::zeros(width),
                                1 => xs[q].clone(),
                                2 => xs[q].xor(&zs[q]),
                                _ => zs[q].clone(),
                            }
                        };
                        for pa in 0..4 {
                            for pb in 0..4 {
                                if pa == 0 && pb == 0 {
                                    continue;
                                }
                                let sig = single(a, pa).xor(&single(b, pb));
                                acc.add(q2, &sig, num_detectors);
                            }
                        }
                    }
                }
            },
        }
    }
    Ok(DetectorErrorModel::from_merged(
        acc.merged,
        num_detectors,
        num_observables,
    ))
}
