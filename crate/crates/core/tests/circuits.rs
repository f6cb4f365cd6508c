use std::collections::BTreeMap;

use tanner_core::circuit::{
    build_memory_circuit, emit_circuit_text, parse_circuit_text, Instruction, NoiseChannel,
    NoiseProfile, NoisyCircuit,
};
use tanner_core::code::{build_color_code, build_surface_code, CodeFamily};
use tanner_core::dem::extract_dem;
use tanner_core::sample::{sample_pauli_frame, sample_pauli_frame_with, SampleOptions};
use tanner_core::{sample_incremental, Basis, StabilizerCode};

fn single_z_code() -> StabilizerCode {
    StabilizerCode {
        n: 1,
        k: 0,
        d: None,
        stabilizers: vec!["Z".parse().unwrap()],
        logical_x: vec![],
        logical_z: vec![],
        family: CodeFamily::Custom,
        cx_schedule: None,
    }
}

#[test]
fn noiseless_circuits_are_silent() {
    for basis in [Basis::Z, Basis::X] {
        for code in [build_color_code(3).unwrap(), build_surface_code(3).unwrap()] {
            let c = build_memory_circuit(&code, 3, basis, NoiseProfile::noiseless()).unwrap();
            let b = sample_pauli_frame(&c, 500, 1).unwrap();
            assert!(b.syndrome.iter().chain(&b.readout).chain(&b.labels).all(|&x| x == 0));
        }
    }
}

#[test]
fn measurement_flip_rate() {
    let noise = NoiseProfile {
        p_idle: 0.0,
        p_gate: 0.0,
        p_reset: 0.0,
        p_meas: 0.3,
    };
    let c = build_memory_circuit(&single_z_code(), 1, Basis::Z, noise).unwrap();
    let shots = 1_000_000;
    let b = sample_pauli_frame(&c, shots, 3).unwrap();
    let mean = b.syndrome.iter().map(|&x| x as f64).sum::<f64>() / shots as f64;
    let sigma = (0.3 * 0.7 / shots as f64).sqrt();
    assert!((mean - 0.3).abs() < 4.0 * sigma, "rate {mean}");
}

#[test]
fn surface_circuit_round_trips() {
    let code = build_surface_code(3).unwrap();
    let c = build_memory_circuit(&code, 3, Basis::Z, NoiseProfile::uniform(0.005)).unwrap();
    assert_eq!(c.num_detectors(), 24 + 8);
    let text = emit_circuit_text(&c);
    let back = parse_circuit_text(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(emit_circuit_text(&back), text);
}

/// Forward propagation of one deterministic Pauli through the rest of the
/// circuit; returns (flipped detectors, flipped observables).
fn propagate_fault(c: &NoisyCircuit, at: usize, fault: &[(usize, u8)]) -> (Vec<usize>, Vec<usize>) {
    let n = c.num_qubits;
    let (mut x, mut z) = (vec![false; n], vec![false; n]);
    for &(q, p) in fault {
        x[q] ^= p == 1 || p == 2;
        z[q] ^= p == 2 || p == 3;
    }
    let mut meas = Vec::new();
    let mut m_before = 0;
    for inst in &c.instructions[..at] {
        m_before += inst.num_measurements();
    }
    meas.resize(m_before, false);
    let mut dets = Vec::new();
    let mut obs: BTreeMap<usize, bool> = BTreeMap::new();
    let mut det_index = 0;
    for (i, inst) in c.instructions.iter().enumerate() {
        if i > at {
            match inst {
                Instruction::Reset { targets, .. } => {
                    for &q in targets {
                        x[q] = false;
                        z[q] = false;
                    }
                }
                Instruction::H(ts) => {
                    for &q in ts {
                        std::mem::swap(&mut x[q], &mut z[q]);
                    }
                }
                Instruction::Cx(pairs) => {
                    for &(a, b) in pairs {
                        x[b] ^= x[a];
                        z[a] ^= z[b];
                    }
                }
                Instruction::Measure { targets, reset } => {
                    for &q in targets {
                        meas.push(x[q]);
                        if *reset {
                            x[q] = false;
                            z[q] = false;
                        }
                    }
                }
                _ => {}
            }
        }
        match inst {
            Instruction::Detector(recs) => {
                if recs.iter().filter(|&&m| m < meas.len() && meas[m]).count() % 2 == 1 {
                    dets.push(det_index);
                }
                det_index += 1;
            }
            Instruction::Observable { index, records } => {
                let v = records.iter().filter(|&&m| m < meas.len() && meas[m]).count() % 2 == 1;
                *obs.entry(*index).or_insert(false) ^= v;
            }
            _ => {}
        }
    }
    (dets, obs.into_iter().filter(|(_, v)| *v).map(|(k, _)| k).collect())
}

#[test]
fn dem_matches_single_fault_enumeration() {
    for (code, cycles) in [(build_surface_code(3).unwrap(), 1), (build_color_code(3).unwrap(), 2)] {
        let c = build_memory_circuit(&code, cycles, Basis::Z, NoiseProfile::uniform(0.01)).unwrap();
        let mut oracle: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        let mut add = |p: f64, sig: (Vec<usize>, Vec<usize>)| {
            if sig.0.is_empty() && sig.1.is_empty() {
                return;
            }
            let e = oracle.entry(sig).or_insert(0.0);
            *e = *e * (1.0 - p) + p * (1.0 - *e);
        };
        for (i, inst) in c.instructions.iter().enumerate() {
            let Instruction::Noise { channel, p, targets } = inst else { continue };
            match channel {
                NoiseChannel::XError | NoiseChannel::ZError => {
                    let pauli = if *channel == NoiseChannel::XError { 1 } else { 3 };
                    for &q in targets {
                        add(*p, propagate_fault(&c, i, &[(q, pauli)]));
                    }
                }
                NoiseChannel::Depolarize1 => {
                    let q1 = (1.0 - (1.0 - 4.0 * p / 3.0).sqrt()) / 2.0;
                    for &q in targets {
                        for pauli in 1..4 {
                            add(q1, propagate_fault(&c, i, &[(q, pauli)]));
                        }
                    }
                }
                NoiseChannel::Depolarize2 => {
                    let q2 = (1.0 - (1.0 - 16.0 * p / 15.0).powf(1.0 / 8.0)) / 2.0;
                    for pair in targets.chunks(2) {
                        for k in 1..16u8 {
                            add(q2, propagate_fault(&c, i, &[(pair[0], k >> 2), (pair[1], k & 3)]));
                        }
                    }
                }
            }
        }
        let dem = extract_dem(&c).unwrap();
        assert_eq!(dem.mechanisms.len(), oracle.len());
        for m in &dem.mechanisms {
            let p = oracle[&(m.detectors.clone(), m.observables.clone())];
            assert!((p - m.probability).abs() < 1e-12);
        }
        assert_eq!(dem.merged(), dem);
    }
}

#[test]
fn incremental_forks_do_not_disturb_main_branch() {
    let code = build_surface_code(3).unwrap();
    let noise = NoiseProfile::uniform(0.01);
    let c = build_memory_circuit(&code, 4, Basis::Z, noise).unwrap();
    let plain = sample_pauli_frame(&c, 3000, 99).unwrap();
    let inc = sample_incremental(&code, 4, Basis::Z, noise, 3000, 99).unwrap();
    assert_eq!(inc.syndrome, plain.syndrome);
    assert_eq!(inc.readout, plain.readout);
    assert_eq!(inc.labels, plain.labels);
    for s in 0..inc.shots {
        assert_eq!(inc.pseudo_label(s, 3).unwrap(), inc.label(s));
        assert_eq!(inc.pseudo_readout(s, 3).unwrap(), inc.readout_of(s));
    }
}

#[test]
fn incremental_noiseless_is_zero() {
    let code = build_color_code(3).unwrap();
    let b = sample_incremental(&code, 3, Basis::Z, NoiseProfile::noiseless(), 100, 0).unwrap();
    let p = b.pseudo.unwrap();
    assert!(p.labels.iter().chain(&p.readout).all(|&x| x == 0));
}

#[test]
fn injected_data_fault_flips_later_pseudo_labels() {
    let code = build_surface_code(3).unwrap();
    let clean = build_memory_circuit(&code, 4, Basis::Z, NoiseProfile::noiseless()).unwrap();
    let graph = tanner_core::build_extended_tanner(&code, Basis::Z).unwrap();
    let logical = &graph.logical_edges[0];
    for qubit in 0..code.n {
        for t in 1..4 {
            let mut c = clean.clone();
            let at = c.cycle_starts[t];
            c.instructions.insert(
                at,
                Instruction::Noise {
                    channel: NoiseChannel::XError,
                    p: 1.0,
                    targets: vec![qubit],
                },
            );
            for s in c.cycle_starts.iter_mut().skip(t + 1) {
                *s += 1;
            }
            *c.readout_start.as_mut().unwrap() += 1;
            let opts = SampleOptions {
                raw_syndromes: false,
                incremental: true,
            };
            let b = sample_pauli_frame_with(&c, 4, 0, opts).unwrap();
            let expect = logical.contains(&qubit) as u8;
            for cycle in 0..4 {
                let want = if cycle >= t { expect } else { 0 };
                assert_eq!(b.pseudo_label(0, cycle).unwrap()[0], want, "q{qubit} t{t} c{cycle}");
            }
        }
    }
}

#[test]
fn raw_mode_reports_flipped_measurements() {
    let noise = NoiseProfile {
        p_idle: 0.0,
        p_gate: 0.0,
        p_reset: 0.0,
        p_meas: 0.2,
    };
    let code = build_surface_code(3).unwrap();
    let c = build_memory_circuit(&code, 3, Basis::Z, noise).unwrap();
    let opts = SampleOptions {
        raw_syndromes: true,
        incremental: false,
    };
    let raw = sample_pauli_frame_with(&c, 2000, 4, opts).unwrap();
    let det = sample_pauli_frame(&c, 2000, 4).unwrap();
    // Detection events are XORs of consecutive raw rounds (for the Z checks).
    for s in 0..2000 {
        for t in 1..3 {
            for ch in 0..4 {
                assert_eq!(det.cycle(s, t)[ch], raw.cycle(s, t)[ch] ^ raw.cycle(s, t - 1)[ch]);
            }
        }
    }
}
