//! Memory-experiment circuits: repeated syndrome extraction plus a final
//! data readout.

use serde::{Deserialize, Serialize};

use super::{Instruction, NoiseChannel, NoisyCircuit};
use crate::code::StabilizerCode;
use crate::error::CircuitError;
use crate::tanner::{build_extended_tanner, Basis, CheckKind};

/// Circuit-level noise strengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub p_idle: f64,
    pub p_gate: f64,
    pub p_reset: f64,
    pub p_meas: f64,
}

impl NoiseProfile {
    /// Every rate set to `p`.
    pub fn uniform(p: f64) -> Self {
        Self {
            p_idle: p,
            p_gate: p,
            p_reset: p,
            p_meas: p,
        }
    }

    pub fn noiseless() -> Self {
        Self::uniform(0.0)
    }

    pub fn with_reset(mut self, p_reset: f64) -> Self {
        self.p_reset = p_reset;
        self
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for p in [self.p_idle, self.p_gate, self.p_reset, self.p_meas] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CircuitError::Probability(p));
            }
        }
        Ok(())
    }
}

struct Builder {
    num_qubits: usize,
    instructions: Vec<Instruction>,
    measured: usize,
}

impl Builder {
    fn noise(&mut self, channel: NoiseChannel, p: f64, targets: Vec<usize>) {
        if p > 0.0 && !targets.is_empty() {
            self.instructions.push(Instruction::Noise {
                channel,
                p,
                targets,
            });
        }
    }

    /// Idle depolarizing noise on every qubit not in `busy`.
    fn idle(&mut self, busy: &[bool], p: f64) {
        let idle: Vec<usize> = (0..self.num_qubits).filter(|&q| !busy[q]).collect();
        self.noise(NoiseChannel::Depolarize1, p, idle);
    }

    fn busy(&self, qubits: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut b = vec![false; self.num_qubits];
        for q in qubits {
            b[q] = true;
        }
        b
    }

    fn push(&mut self, inst: Instruction) {
        self.measured += inst.num_measurements();
        self.instructions.push(inst);
    }
}

/// Layers of `(control, target)` CX gates for one round of checks.
///
/// With a code-supplied schedule, layer `i` applies every check's `i`-th
/// gate. Otherwise Z checks are packed first and X checks after them, each
/// greedily into the earliest layer where both qubits are free, visiting
/// checks in node order and data qubits ascending.
fn cx_layers(
    code: &StabilizerCode,
    checks: &[(usize, CheckKind, usize)],
    num_qubits: usize,
) -> Result<Vec<Vec<(usize, usize)>>, CircuitError> {
    let gate = |kind: CheckKind, anc: usize, q: usize| match kind {
        CheckKind::X => (anc, q),
        _ => (q, anc),
    };
    if let Some(schedule) = &code.cx_schedule {
        let depth = schedule.iter().map(Vec::len).max().unwrap_or(0);
        let mut layers = vec![Vec::new(); depth];
        for (i, layer) in layers.iter_mut().enumerate() {
            let mut used = vec![false; num_qubits];
            for &(stab, kind, anc) in checks {
                if let Some(Some(q)) = schedule[stab].get(i) {
                    if used[*q] || used[anc] {
                        return Err(CircuitError::InvalidParameter(format!(
                            "CX schedule reuses qubit in layer {i}"
                        )));
                    }
                    used[*q] = true;
                    used[anc] = true;
                    layer.push(gate(kind, anc, *q));
                }
            }
        }
        for &(stab, _, _) in checks {
            let mut scheduled: Vec<usize> = schedule[stab].iter().flatten().copied().collect();
            scheduled.sort_unstable();
            if scheduled != code.stabilizers[stab].support() {
                return Err(CircuitError::InvalidParameter(format!(
                    "CX schedule for stabilizer {stab} does not match its support"
                )));
            }
        }
        return Ok(layers);
    }

    let mut layers = Vec::new();
    for block in [CheckKind::Z, CheckKind::X] {
        let mut block_layers: Vec<(Vec<(usize, usize)>, Vec<bool>)> = Vec::new();
        for &(stab, kind, anc) in checks.iter().filter(|c| c.1 == block) {
            for q in code.stabilizers[stab].support() {
                let slot = block_layers
                    .iter()
                    .position(|(_, used)| !used[q] && !used[anc]);
                let slot = match slot {
                    Some(s) => s,
                    None => {
                        block_layers.push((Vec::new(), vec![false; num_qubits]));
                        block_layers.len() - 1
                    }
                };
                let (gates, used) = &mut block_layers[slot];
                used[q] = true;
                used[anc] = true;
                gates.push(gate(kind, anc, q));
            }
        }
        layers.extend(block_layers.into_iter().map(|(g, _)| g));
    }
    Ok(layers)
}

/// Memory experiment on a CSS code.
///
/// Qubits `0..n` are data, ancilla `n + c` measures check node `c` of the
/// extended Tanner graph. Each cycle resets the ancillas (and, in the first
/// cycle, the data in the memory basis), rotates X-check ancillas with `H`,
/// applies the CX layers, rotates back and measures. Detectors compare
/// consecutive rounds of each check; first-round checks of the other basis
/// get empty (always zero) detectors. The final readout measures the data
/// without noise and emits one detector per check plus one observable per
/// logical.
pub fn build_memory_circuit(
    code: &StabilizerCode,
    cycles: usize,
    basis: Basis,
    noise: NoiseProfile,
) -> Result<NoisyCircuit, CircuitError> {
    if cycles < 1 {
        return Err(CircuitError::InvalidParameter(
            "a memory experiment needs at least one cycle".into(),
        ));
    }
    noise.validate()?;
    let graph = build_extended_tanner(code, basis)?;
    if graph.checks.iter().any(|c| c.kind == CheckKind::Mixed) {
        return Err(CircuitError::Unsupported(
            "memory circuits need CSS checks".into(),
        ));
    }
    let n = code.n;
    let ns = graph.num_checks();
    let num_qubits = n + ns;
    let checks: Vec<(usize, CheckKind, usize)> = graph
        .checks
        .iter()
        .enumerate()
        .map(|(c, node)| (node.stabilizer, node.kind, n + c))
        .collect();
    let layers = cx_layers(code, &checks, num_qubits)?;
    let ancillas: Vec<usize> = (n..num_qubits).collect();
    let x_ancillas: Vec<usize> = checks
        .iter()
        .filter(|c| c.1 == CheckKind::X)
        .map(|c| c.2)
        .collect();
    let data: Vec<usize> = (0..n).collect();

    let mut b = Builder {
        num_qubits,
        instructions: Vec::new(),
        measured: 0,
    };
    let mut cycle_starts = Vec::with_capacity(cycles);
    for t in 0..cycles {
        cycle_starts.push(b.instructions.len());
        if t == 0 {
            b.push(Instruction::Reset {
                basis,
                targets: data.clone(),
            });
            b.push(Instruction::Reset {
                basis: Basis::Z,
                targets: ancillas.clone(),
            });
            let data_flip = match basis {
                Basis::Z => NoiseChannel::XError,
                Basis::X => NoiseChannel::ZError,
            };
            b.noise(data_flip, noise.p_reset, data.clone());
            b.noise(NoiseChannel::XError, noise.p_reset, ancillas.clone());
        } else {
            b.push(Instruction::Reset {
                basis: Basis::Z,
                targets: ancillas.clone(),
            });
            b.noise(NoiseChannel::XError, noise.p_reset, ancillas.clone());
            b.noise(NoiseChannel::Depolarize1, noise.p_idle, data.clone());
        }
        b.push(Instruction::Tick);

        if !x_ancillas.is_empty() {
            b.push(Instruction::H(x_ancillas.clone()));
            b.noise(NoiseChannel::Depolarize1, noise.p_gate, x_ancillas.clone());
            let busy = b.busy(x_ancillas.iter().copied());
            b.idle(&busy, noise.p_idle);
            b.push(Instruction::Tick);
        }

        for layer in &layers {
            b.push(Instruction::Cx(layer.clone()));
            let flat: Vec<usize> = layer.iter().flat_map(|&(c, t)| [c, t]).collect();
            let busy = b.busy(flat.iter().copied());
            b.noise(NoiseChannel::Depolarize2, noise.p_gate, flat);
            b.idle(&busy, noise.p_idle);
            b.push(Instruction::Tick);
        }

        if !x_ancillas.is_empty() {
            b.push(Instruction::H(x_ancillas.clone()));
            b.noise(NoiseChannel::Depolarize1, noise.p_gate, x_ancillas.clone());
            let busy = b.busy(x_ancillas.iter().copied());
            b.idle(&busy, noise.p_idle);
            b.push(Instruction::Tick);
        }

        b.noise(NoiseChannel::XError, noise.p_meas, ancillas.clone());
        b.noise(NoiseChannel::Depolarize1, noise.p_idle, data.clone());
        let first = b.measured;
        b.push(Instruction::Measure {
            targets: ancillas.clone(),
            reset: false,
        });
        for (c, &(_, kind, _)) in checks.iter().enumerate() {
            let recs = if t == 0 {
                if kind.matches(basis) {
                    vec![first + c]
                } else {
                    Vec::new()
                }
            } else {
                vec![first - ns + c, first + c]
            };
            b.push(Instruction::Detector(recs));
        }
        b.push(Instruction::Tick);
    }

    let readout_start = b.instructions.len();
    let last_round = b.measured - ns;
    if basis == Basis::X {
        b.push(Instruction::H(data.clone()));
    }
    let data_base = b.measured;
    b.push(Instruction::Measure {
        targets: data.clone(),
        reset: false,
    });
    for (c, &(stab, kind, _)) in checks.iter().enumerate() {
        let recs = if kind.matches(basis) {
            let mut r: Vec<usize> = code.stabilizers[stab]
                .support()
                .into_iter()
                .map(|q| data_base + q)
                .collect();
            r.push(last_round + c);
            r
        } else {
            Vec::new()
        };
        b.push(Instruction::Detector(recs));
    }
    for (j, rep) in graph.logical_reps.iter().enumerate() {
        b.push(Instruction::Observable {
            index: j,
            records: rep.support().into_iter().map(|q| data_base + q).collect(),
        });
    }

    let circuit = NoisyCircuit {
        num_qubits,
        instructions: b.instructions,
        cycle_starts,
        readout_start: Some(readout_start),
        basis: Some(basis),
    };
    circuit.validate()?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{emit_circuit_text, parse_circuit_text};
    use crate::code::{build_color_code, build_surface_code};

    #[test]
    fn surface_counts_and_round_trip() {
        let code = build_surface_code(3).unwrap();
        let c = build_memory_circuit(&code, 3, Basis::Z, NoiseProfile::uniform(0.005)).unwrap();
        let layout = c.layout().unwrap();
        assert_eq!(layout.cycles, 3);
        assert_eq!(layout.detectors_per_cycle, 8);
        assert_eq!(layout.readout_detectors, 8);
        assert_eq!(c.num_detectors(), 32);
        assert_eq!(c.num_observables(), 1);
        assert_eq!(c.num_qubits, 17);
        let text = emit_circuit_text(&c);
        assert_eq!(parse_circuit_text(&text).unwrap(), c);
    }

    #[test]
    fn surface_uses_four_cx_layers() {
        let code = build_surface_code(5).unwrap();
        let c = build_memory_circuit(&code, 1, Basis::X, NoiseProfile::noiseless()).unwrap();
        let cx = c
            .instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Cx(_)))
            .count();
        assert_eq!(cx, 4);
    }

    #[test]
    fn generic_layers_cover_every_edge_once() {
        let code = build_color_code(5).unwrap();
        let graph = build_extended_tanner(&code, Basis::Z).unwrap();
        let checks: Vec<_> = graph
            .checks
            .iter()
            .enumerate()
            .map(|(c, node)| (node.stabilizer, node.kind, code.n + c))
            .collect();
        let layers = cx_layers(&code, &checks, code.n + checks.len()).unwrap();
        let total: usize = layers.iter().map(Vec::len).sum();
        assert_eq!(total, graph.num_stabilizer_edges());
        for layer in &layers {
            let mut seen = std::collections::HashSet::new();
            for &(a, b) in layer {
                assert!(seen.insert(a) && seen.insert(b));
            }
        }
    }

    #[test]
    fn rejects_zero_cycles_and_bad_noise() {
        let code = build_color_code(3).unwrap();
        assert!(build_memory_circuit(&code, 0, Basis::Z, NoiseProfile::noiseless()).is_err());
        assert!(build_memory_circuit(&code, 1, Basis::Z, NoiseProfile::uniform(1.2)).is_err());
    }
}
