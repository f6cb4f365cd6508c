//! Bit-packed Pauli-frame sampling and detector-error-model sampling.
//!
//! Shots are processed in chunks of [`CHUNK_SHOTS`]; chunk `i` draws from the
//! ChaCha8 stream `i` of the given seed, so results do not depend on how
//! chunks are scheduled across threads.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::batch::{PseudoData, SyndromeBatch};
use crate::circuit::{build_memory_circuit, Instruction, NoiseChannel, NoiseProfile, NoisyCircuit};
use crate::code::StabilizerCode;
use crate::dem::DetectorErrorModel;
use crate::error::CircuitError;
use crate::tanner::Basis;

pub const CHUNK_SHOTS: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleOptions {
    /// Emit per-cycle ancilla measurement flips instead of detection events.
    pub raw_syndromes: bool,
    /// Fork a noiseless readout after every cycle (pseudo labels).
    pub incremental: bool,
}

pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Calls `hit(s)` for each shot `s < shots` in which an event of probability
/// `p` fires, drawing geometric gaps between hits.
fn for_each_hit(rng: &mut ChaCha8Rng, p: f64, shots: usize, mut hit: impl FnMut(&mut ChaCha8Rng, usize)) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for s in 0..shots {
            hit(rng, s);
        }
        return;
    }
    let log_q = (-p).ln_1p();
    let mut pos = 0usize;
    loop {
        let u: f64 = rng.random();
        let gap = ((-u).ln_1p() / log_q).floor();
        if gap >= (shots - pos) as f64 {
            return;
        }
        pos += gap as usize;
        hit(rng, pos);
        pos += 1;
        if pos >= shots {
            return;
        }
    }
}

#[inline]
fn flip(words: &mut [u64], s: usize) {
    words[s / 64] ^= 1u64 << (s % 64);
}

#[inline]
fn bit(words: &[u64], s: usize) -> u8 {
    ((words[s / 64] >> (s % 64)) & 1) as u8
}

#[derive(Clone)]
struct Frames {
    words: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

impl Frames {
    fn new(num_qubits: usize, words: usize) -> Self {
        Self {
            words,
            x: vec![0; num_qubits * words],
            z: vec![0; num_qubits * words],
        }
    }

    #[inline]
    fn range(&self, q: usize) -> std::ops::Range<usize> {
        q * self.words..(q + 1) * self.words
    }

    fn apply_pauli(&mut self, q: usize, s: usize, pauli: u8) {
        // 1 = X, 2 = Y, 3 = Z
        let r = self.range(q);
        if pauli == 1 || pauli == 2 {
            flip(&mut self.x[r.clone()], s);
        }
        if pauli == 2 || pauli == 3 {
            flip(&mut self.z[r], s);
        }
    }

    /// Runs `insts`, appending measurement flips to `records`. Noise is skipped
    /// when `rng` is `None`.
    fn run(
        &mut self,
        insts: &[Instruction],
        mut rng: Option<&mut ChaCha8Rng>,
        shots: usize,
        records: &mut Vec<u64>,
    ) {
        let w = self.words;
        for inst in insts {
            match inst {
                Instruction::Tick | Instruction::Detector(_) | Instruction::Observable { .. } => {}
                Instruction::Reset { targets, .. } => {
                    for &q in targets {
                        let r = self.range(q);
                        self.x[r.clone()].fill(0);
                        self.z[r].fill(0);
                    }
                }
                Instruction::H(targets) => {
                    for &q in targets {
                        let r = self.range(q);
                        self.x[r.clone()].swap_with_slice(&mut self.z[r]);
                    }
                }
                Instruction::Cx(pairs) => {
                    for &(c, t) in pairs {
                        for i in 0..w {
                            self.x[t * w + i] ^= self.x[c * w + i];
                            self.z[c * w + i] ^= self.z[t * w + i];
                        }
                    }
                }
                Instruction::Measure { targets, reset } => {
                    for &q in targets {
                        let r = self.range(q);
                        records.extend_from_slice(&self.x[r.clone()]);
                        if *reset {
                            self.x[r.clone()].fill(0);
                            self.z[r].fill(0);
                        }
                    }
                }
                Instruction::Noise {
                    channel,
                    p,
                    targets,
                } => {
                    let Some(rng) = rng.as_deref_mut() else { continue };
                    match channel {
                        NoiseChannel::XError | NoiseChannel::ZError => {
                            let pauli = if *channel == NoiseChannel::XError { 1 } else { 3 };
                            for &q in targets {
                                for_each_hit(rng, *p, shots, |_, s| self.apply_pauli(q, s, pauli));
                            }
                        }
                        NoiseChannel::Depolarize1 => {
                            for &q in targets {
                                for_each_hit(rng, *p, shots, |rng, s| {
                                    let k: u8 = rng.random_range(1..4);
                                    self.apply_pauli(q, s, k);
                                });
                            }
                        }
                        NoiseChannel::Depolarize2 => {
                            for pair in targets.chunks(2) {
                                for_each_hit(rng, *p, shots, |rng, s| {
                                    let k: u8 = rng.random_range(1..16);
                                    self.apply_pauli(pair[0], s, k >> 2);
                                    self.apply_pauli(pair[1], s, k & 3);
                                });
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Batch shape derived from a circuit layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchShape {
    pub cycles: usize,
    pub checks: usize,
    pub readout_checks: usize,
    pub num_logicals: usize,
}

impl BatchShape {
    pub fn of_circuit(circuit: &NoisyCircuit) -> Result<Self, CircuitError> {
        let layout = circuit.layout()?;
        Ok(Self {
            cycles: layout.cycles,
            checks: layout.detectors_per_cycle,
            readout_checks: layout.readout_detectors,
            num_logicals: circuit.num_observables(),
        })
    }

    /// One "cycle" holding every detector.
    pub fn flat(num_detectors: usize, num_logicals: usize) -> Self {
        Self {
            cycles: 1,
            checks: num_detectors,
            readout_checks: 0,
            num_logicals,
        }
    }

    fn num_detectors(&self) -> usize {
        self.cycles * self.checks + self.readout_checks
    }
}

/// Bit-packed detector/observable words for one chunk.
struct PackedChunk {
    shots: usize,
    words: usize,
    dets: Vec<u64>,
    obs: Vec<u64>,
}

impl PackedChunk {
    fn unpack_into(&self, shape: &BatchShape, batch: &mut SyndromeBatch) {
        let per = shape.cycles * shape.checks;
        for s in 0..self.shots {
            for d in 0..per {
                batch.syndrome.push(bit(&self.dets[d * self.words..], s));
            }
            for d in per..per + shape.readout_checks {
                batch.readout.push(bit(&self.dets[d * self.words..], s));
            }
            for l in 0..shape.num_logicals {
                batch.labels.push(bit(&self.obs[l * self.words..], s));
            }
        }
        batch.shots += self.shots;
    }
}

fn xor_records(out: &mut [u64], records: &[u64], recs: impl Iterator<Item = usize>, words: usize) {
    for m in recs {
        for (o, r) in out.iter_mut().zip(&records[m * words..(m + 1) * words]) {
            *o ^= r;
        }
    }
}

struct FrameChunk {
    packed: PackedChunk,
    raw: Option<Vec<u8>>,
    pseudo: Option<PseudoData>,
}

fn simulate_chunk(
    circuit: &NoisyCircuit,
    shape: &BatchShape,
    seed: u64,
    chunk: usize,
    shots: usize,
    opts: SampleOptions,
) -> Result<FrameChunk, CircuitError> {
    let words = shots.div_ceil(64);
    let layout = circuit.layout()?;
    let (det_recs, obs_recs) = circuit.detector_records();
    let mut rng = chunk_rng(seed, chunk);
    let mut frames = Frames::new(circuit.num_qubits, words);
    let mut records = Vec::with_capacity(circuit.num_measurements() * words);

    let first_cycle = layout.cycle_ranges[0].0;
    frames.run(&circuit.instructions[..first_cycle], Some(&mut rng), shots, &mut records);

    let readout_dets: Vec<&Vec<usize>> = det_recs[shape.cycles * shape.checks..].iter().collect();
    let (readout_insts, readout_meas_start) = match layout.readout_range {
        Some((s, e)) => (
            &circuit.instructions[s..e],
            layout.prefix_measurements + layout.cycles * layout.measurements_per_cycle,
        ),
        None => (&circuit.instructions[0..0], circuit.num_measurements()),
    };
    let k = shape.num_logicals;
    let mut pseudo = opts.incremental.then(|| PseudoData {
        readout: vec![0; shots * shape.cycles * shape.readout_checks],
        labels: vec![0; shots * shape.cycles * k],
    });

    for (t, &(s, e)) in layout.cycle_ranges.iter().enumerate() {
        frames.run(&circuit.instructions[s..e], Some(&mut rng), shots, &mut records);
        if let Some(p) = pseudo.as_mut() {
            let fork_meas = records.len() / words;
            let shift = readout_meas_start as isize - fork_meas as isize;
            let mut fork = frames.clone();
            let mut extra = Vec::new();
            fork.run(readout_insts, None, shots, &mut extra);
            let lookup = |m: usize| -> Result<&[u64], CircuitError> {
                let idx = m as isize - shift;
                if idx < 0 {
                    return Err(CircuitError::Shape(
                        "readout refers to measurements older than one cycle".into(),
                    ));
                }
                let idx = idx as usize;
                Ok(if idx < fork_meas {
                    &records[idx * words..(idx + 1) * words]
                } else {
                    let j = idx - fork_meas;
                    &extra[j * words..(j + 1) * words]
                })
            };
            let mut acc = vec![0u64; words];
            for (c, recs) in readout_dets.iter().enumerate() {
                acc.fill(0);
                for &m in recs.iter() {
                    for (a, r) in acc.iter_mut().zip(lookup(m)?) {
                        *a ^= r;
                    }
                }
                for shot in 0..shots {
                    p.readout[(shot * shape.cycles + t) * shape.readout_checks + c] = bit(&acc, shot);
                }
            }
            for (l, recs) in obs_recs.iter().enumerate() {
                acc.fill(0);
                for &m in recs {
                    for (a, r) in acc.iter_mut().zip(lookup(m)?) {
                        *a ^= r;
                    }
                }
                for shot in 0..shots {
                    p.labels[(shot * shape.cycles + t) * k + l] = bit(&acc, shot);
                }
            }
        }
    }
    frames.run(readout_insts, Some(&mut rng), shots, &mut records);

    let num_dets = shape.num_detectors();
    let mut dets = vec![0u64; num_dets * words];
    for (d, recs) in det_recs.iter().enumerate() {
        xor_records(&mut dets[d * words..(d + 1) * words], &records, recs.iter().copied(), words);
    }
    let mut obs = vec![0u64; k * words];
    for (l, recs) in obs_recs.iter().enumerate() {
        xor_records(&mut obs[l * words..(l + 1) * words], &records, recs.iter().copied(), words);
    }

    let raw = if opts.raw_syndromes {
        if layout.measurements_per_cycle != shape.checks {
            return Err(CircuitError::Shape(format!(
                "raw syndromes need one measurement per check ({} vs {})",
                layout.measurements_per_cycle, shape.checks
            )));
        }
        let mut raw = Vec::with_capacity(shots * shape.cycles * shape.checks);
        for shot in 0..shots {
            for t in 0..shape.cycles {
                for c in 0..shape.checks {
                    let m = layout.prefix_measurements + t * layout.measurements_per_cycle + c;
                    raw.push(bit(&records[m * words..], shot));
                }
            }
        }
        Some(raw)
    } else {
        None
    };

    Ok(FrameChunk {
        packed: PackedChunk {
            shots,
            words,
            dets,
            obs,
        },
        raw,
        pseudo,
    })
}

fn chunk_sizes(shots: usize) -> Vec<usize> {
    (0..shots.div_ceil(CHUNK_SHOTS))
        .map(|i| CHUNK_SHOTS.min(shots - i * CHUNK_SHOTS))
        .collect()
}

/// Samples detection events and observable flips from a noisy circuit.
pub fn sample_pauli_frame(
    circuit: &NoisyCircuit,
    shots: usize,
    seed: u64,
) -> Result<SyndromeBatch, CircuitError> {
    sample_pauli_frame_with(circuit, shots, seed, SampleOptions::default())
}

pub fn sample_pauli_frame_with(
    circuit: &NoisyCircuit,
    shots: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<SyndromeBatch, CircuitError> {
    circuit.validate()?;
    let shape = BatchShape::of_circuit(circuit)?;
    let chunks: Vec<FrameChunk> = chunk_sizes(shots)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| simulate_chunk(circuit, &shape, seed, i, n, opts))
        .collect::<Result<_, _>>()?;

    let mut batch = SyndromeBatch::empty(shape.cycles, shape.checks, shape.readout_checks, shape.num_logicals);
    batch.seed = seed;
    batch.basis = circuit.basis;
    let mut pseudo = opts.incremental.then(|| PseudoData {
        readout: Vec::new(),
        labels: Vec::new(),
    });
    for chunk in chunks {
        chunk.packed.unpack_into(&shape, &mut batch);
        if let Some(raw) = chunk.raw {
            let start = batch.syndrome.len() - raw.len();
            batch.syndrome[start..].copy_from_slice(&raw);
        }
        if let (Some(all), Some(p)) = (pseudo.as_mut(), chunk.pseudo) {
            all.readout.extend(p.readout);
            all.labels.extend(p.labels);
        }
    }
    batch.pseudo = pseudo;
    batch.check_shape()?;
    Ok(batch)
}

/// Memory-experiment sampling with pseudo readouts forked after every cycle.
pub fn sample_incremental(
    code: &StabilizerCode,
    cycles: usize,
    basis: Basis,
    noise: NoiseProfile,
    shots: usize,
    seed: u64,
) -> Result<SyndromeBatch, CircuitError> {
    let circuit = build_memory_circuit(code, cycles, basis, noise)?;
    sample_pauli_frame_with(
        &circuit,
        shots,
        seed,
        SampleOptions {
            raw_syndromes: false,
            incremental: true,
        },
    )
}

/// Samples every mechanism as an independent Bernoulli event.
pub fn sample_dem(dem: &DetectorErrorModel, shots: usize, seed: u64) -> SyndromeBatch {
    sample_dem_shaped(dem, BatchShape::flat(dem.num_detectors, dem.num_observables), shots, seed)
        .expect("flat shape always matches")
}

/// Like [`sample_dem`] but grouping detectors into cycles as `shape` says.
pub fn sample_dem_shaped(
    dem: &DetectorErrorModel,
    shape: BatchShape,
    shots: usize,
    seed: u64,
) -> Result<SyndromeBatch, CircuitError> {
    if shape.num_detectors() != dem.num_detectors || shape.num_logicals != dem.num_observables {
        return Err(CircuitError::Shape(format!(
            "shape has {} detectors / {} observables, model has {} / {}",
            shape.num_detectors(),
            shape.num_logicals,
            dem.num_detectors,
            dem.num_observables
        )));
    }
    let chunks: Vec<PackedChunk> = chunk_sizes(shots)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| {
            let words = n.div_ceil(64);
            let mut rng = chunk_rng(seed, i);
            let mut dets = vec![0u64; dem.num_detectors * words];
            let mut obs = vec![0u64; dem.num_observables * words];
            for m in &dem.mechanisms {
                for_each_hit(&mut rng, m.probability, n, |_, s| {
                    for &d in &m.detectors {
                        flip(&mut dets[d * words..], s);
                    }
                    for &l in &m.observables {
                        flip(&mut obs[l * words..], s);
                    }
                });
            }
            PackedChunk {
                shots: n,
                words,
                dets,
                obs,
            }
        })
        .collect();
    let mut batch = SyndromeBatch::empty(shape.cycles, shape.checks, shape.readout_checks, shape.num_logicals);
    batch.seed = seed;
    for c in &chunks {
        c.unpack_into(&shape, &mut batch);
    }
    Ok(batch)
}
