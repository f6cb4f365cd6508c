//! Clifford circuits with Pauli noise channels, detectors and observables.

mod memory;
mod text;

pub use memory::{build_memory_circuit, NoiseProfile};
pub use text::{emit_circuit_text, parse_circuit_text};

use crate::error::CircuitError;
use crate::tanner::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseChannel {
    XError,
    ZError,
    Depolarize1,
    Depolarize2,
}

impl NoiseChannel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseChannel::XError => "X_ERROR",
            NoiseChannel::ZError => "Z_ERROR",
            NoiseChannel::Depolarize1 => "DEPOLARIZE1",
            NoiseChannel::Depolarize2 => "DEPOLARIZE2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            NoiseChannel::Depolarize2 => 2,
            _ => 1,
        }
    }
}

/// One circuit instruction. Measurement references are absolute record
/// indices; the text form uses `rec[-k]` offsets instead.
#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    Reset { basis: Basis, targets: Vec<usize> },
    H(Vec<usize>),
    Cx(Vec<(usize, usize)>),
    /// Z-basis measurement, optionally followed by a reset (`MR`).
    Measure { targets: Vec<usize>, reset: bool },
    Noise {
        channel: NoiseChannel,
        p: f64,
        targets: Vec<usize>,
    },
    Detector(Vec<usize>),
    Observable { index: usize, records: Vec<usize> },
    Tick,
}

impl Instruction {
    pub fn is_noise(&self) -> bool {
        matches!(self, Instruction::Noise { .. })
    }

    pub fn num_measurements(&self) -> usize {
        match self {
            Instruction::Measure { targets, .. } => targets.len(),
            _ => 0,
        }
    }
}

/// A noisy circuit plus the segment structure of a memory experiment.
///
/// `cycle_starts[t]` is the instruction index where syndrome cycle `t` begins;
/// `readout_start` is where the final data readout begins. Circuits without
/// segment markers are treated as a single cycle with no readout.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyCircuit {
    pub num_qubits: usize,
    pub instructions: Vec<Instruction>,
    pub cycle_starts: Vec<usize>,
    pub readout_start: Option<usize>,
    pub basis: Option<Basis>,
}

/// Detector and measurement counts for each segment of a circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLayout {
    pub cycles: usize,
    pub detectors_per_cycle: usize,
    pub measurements_per_cycle: usize,
    pub readout_detectors: usize,
    /// Instruction ranges `[start, end)` for each cycle.
    pub cycle_ranges: Vec<(usize, usize)>,
    pub readout_range: Option<(usize, usize)>,
    /// Measurement count before the first cycle.
    pub prefix_measurements: usize,
}

impl NoisyCircuit {
    /// Checks qubit indices, probabilities, record references and segment
    /// markers.
    pub fn validate(&self) -> Result<(), CircuitError> {
        let mut measured = 0usize;
        let check_q = |q: usize| -> Result<(), CircuitError> {
            if q >= self.num_qubits {
                Err(CircuitError::InvalidParameter(format!(
                    "qubit {q} out of range for {} qubits",
                    self.num_qubits
                )))
            } else {
                Ok(())
            }
        };
        for (i, inst) in self.instructions.iter().enumerate() {
            match inst {
                Instruction::Reset { targets, .. }
                | Instruction::H(targets)
                | Instruction::Measure { targets, .. } => {
                    for &q in targets {
                        check_q(q)?;
                    }
                }
                Instruction::Cx(pairs) => {
                    for &(c, t) in pairs {
                        check_q(c)?;
                        check_q(t)?;
                        if c == t {
                            return Err(CircuitError::InvalidParameter(format!(
                                "instruction {i}: CX control equals target ({c})"
                            )));
                        }
                    }
                }
                Instruction::Noise { channel, p, targets } => {
                    if !(0.0..=1.0).contains(p) {
                        return Err(CircuitError::Probability(*p));
                    }
                    if targets.len() % channel.arity() != 0 {
                        return Err(CircuitError::InvalidParameter(format!(
                            "instruction {i}: {} needs target pairs",
                            channel.name()
                        )));
                    }
                    for &q in targets {
                        check_q(q)?;
                    }
                }
                Instruction::Detector(recs) | Instruction::Observable { records: recs, .. } => {
                    if let Some(&bad) = recs.iter().find(|&&r| r >= measured) {
                        return Err(CircuitError::InvalidParameter(format!(
                            "instruction {i}: record {bad} not yet measured ({measured} so far)"
                        )));
                    }
                }
                Instruction::Tick => {}
            }
            measured += inst.num_measurements();
        }
        let mut prev = 0;
        for &s in self.cycle_starts.iter().chain(self.readout_start.iter()) {
            if s < prev || s > self.instructions.len() {
                return Err(CircuitError::InvalidParameter(
                    "segment markers out of order".into(),
                ));
            }
            prev = s;
        }
        if self.readout_start.is_some() && self.cycle_starts.is_empty() {
            return Err(CircuitError::InvalidParameter(
                "readout marker without cycle markers".into(),
            ));
        }
        Ok(())
    }

    pub fn num_measurements(&self) -> usize {
        self.instructions.iter().map(Instruction::num_measurements).sum()
    }

    pub fn num_detectors(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Detector(_)))
            .count()
    }

    pub fn num_observables(&self) -> usize {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Observable { index, .. } => Some(index + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Detector/observable record lists in declaration order.
    pub fn detector_records(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut dets = Vec::new();
        let mut obs = vec![Vec::new(); self.num_observables()];
        for inst in &self.instructions {
            match inst {
                Instruction::Detector(r) => dets.push(r.clone()),
                Instruction::Observable { index, records } => {
                    // Repeated OBSERVABLE_INCLUDE lines accumulate by parity.
                    for &m in records {
                        let list: &mut Vec<usize> = &mut obs[*index];
                        if let Some(pos) = list.iter().position(|&x| x == m) {
                            list.remove(pos);
                        } else {
                            list.push(m);
                        }
                    }
                }
                _ => {}
            }
        }
        (dets, obs)
    }

    /// Same circuit with every noise channel removed.
    pub fn without_noise(&self) -> NoisyCircuit {
        let mut out = self.clone();
        let mut kept = Vec::with_capacity(self.instructions.len());
        let mut remap = vec![0usize; self.instructions.len() + 1];
        for (i, inst) in self.instructions.iter().enumerate() {
            remap[i] = kept.len();
            if !inst.is_noise() {
                kept.push(inst.clone());
            }
        }
        remap[self.instructions.len()] = kept.len();
        out.instructions = kept;
        out.cycle_starts = self.cycle_starts.iter().map(|&s| remap[s]).collect();
        out.readout_start = self.readout_start.map(|s| remap[s]);
        out
    }

    /// Segment structure used to shape syndrome batches.
    pub fn layout(&self) -> Result<SegmentLayout, CircuitError> {
        let len = self.instructions.len();
        let count = |range: (usize, usize)| {
            let slice = &self.instructions[range.0..range.1];
            (
                slice
                    .iter()
                    .filter(|i| matches!(i, Instruction::Detector(_)))
                    .count(),
                slice.iter().map(Instruction::num_measurements).sum::<usize>(),
            )
        };
        if self.cycle_starts.is_empty() {
            return Ok(SegmentLayout {
                cycles: 1,
                detectors_per_cycle: self.num_detectors(),
                measurements_per_cycle: self.num_measurements(),
                readout_detectors: 0,
                cycle_ranges: vec![(0, len)],
                readout_range: None,
                prefix_measurements: 0,
            });
        }
        let first = self.cycle_starts[0];
        let (prefix_dets, prefix_meas) = count((0, first));
        if prefix_dets != 0 {
            return Err(CircuitError::Shape(
                "detectors declared before the first cycle".into(),
            ));
        }
        let end_of_cycles = self.readout_start.unwrap_or(len);
        let mut cycle_ranges = Vec::new();
        for (t, &s) in self.cycle_starts.iter().enumerate() {
            let e = self.cycle_starts.get(t + 1).copied().unwrap_or(end_of_cycles);
            cycle_ranges.push((s, e));
        }
        let (dpc, mpc) = count(cycle_ranges[0]);
        for (t, &r) in cycle_ranges.iter().enumerate() {
            let (d, m) = count(r);
            if d != dpc || m != mpc {
                return Err(CircuitError::Shape(format!(
                    "cycle {t} has {d} detectors / {m} measurements, cycle 0 has {dpc} / {mpc}"
                )));
            }
        }
        let readout_range = self.readout_start.map(|s| (s, len));
        let readout_detectors = readout_range.map_or(0, |r| count(r).0);
        if readout_detectors != 0 && readout_detectors != dpc {
            return Err(CircuitError::Shape(format!(
                "readout has {readout_detectors} detectors, cycles have {dpc}"
            )));
        }
        Ok(SegmentLayout {
            cycles: cycle_ranges.len(),
            detectors_per_cycle: dpc,
            measurements_per_cycle: mpc,
            readout_detectors,
            cycle_ranges,
            readout_range,
            prefix_measurements: prefix_meas,
        })
    }
}
