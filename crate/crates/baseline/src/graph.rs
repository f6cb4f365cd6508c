use tanner_core::{BitVec, DetectorErrorModel};

/// Largest prior log-likelihood ratio magnitude; keeps `p = 0` finite.
pub(crate) const MAX_LLR: f64 = 50.0;

/// Mechanism-detector incidence of a detector error model with the
/// per-mechanism quantities every decoder needs.
#[derive(Debug, Clone)]
pub struct DecodingGraph {
    pub num_detectors: usize,
    pub num_observables: usize,
    /// Detectors flipped by each mechanism.
    pub columns: Vec<Vec<usize>>,
    /// Mechanisms touching each detector.
    pub rows: Vec<Vec<usize>>,
    /// Columns as bit vectors over detectors.
    pub column_bits: Vec<BitVec>,
    /// `ln((1 - p) / p)` per mechanism, clamped to `±MAX_LLR`.
    pub priors: Vec<f64>,
    /// Observables flipped by each mechanism.
    pub observables: Vec<Vec<usize>>,
    /// GF(2) rank of the detector matrix.
    pub rank: usize,
}

pub(crate) fn prior_llr(p: f64) -> f64 {
    ((1.0 - p) / p).ln().clamp(-MAX_LLR, MAX_LLR)
}

impl DecodingGraph {
    pub fn new(dem: &DetectorErrorModel) -> Self {
        let nd = dem.num_detectors;
        let columns: Vec<Vec<usize>> = dem.mechanisms.iter().map(|m| m.detectors.clone()).collect();
        let mut rows = vec![Vec::new(); nd];
        for (v, col) in columns.iter().enumerate() {
            for &d in col {
                rows[d].push(v);
            }
        }
        let column_bits: Vec<BitVec> = columns.iter().map(|c| BitVec::from_indices(nd, c.iter().copied())).collect();
        let rank = crate::osd::Echelon::rank_of(nd, &column_bits);
        Self {
            num_detectors: nd,
            num_observables: dem.num_observables,
            priors: dem.mechanisms.iter().map(|m| prior_llr(m.probability)).collect(),
            observables: dem.mechanisms.iter().map(|m| m.observables.clone()).collect(),
            columns,
            rows,
            column_bits,
            rank,
        }
    }

    pub fn num_mechanisms(&self) -> usize {
        self.columns.len()
    }

    /// Detector bits produced by an error estimate.
    pub fn syndrome_of(&self, estimate: &[u8]) -> Vec<u8> {
        let mut s = vec![0u8; self.num_detectors];
        for (v, &e) in estimate.iter().enumerate() {
            if e != 0 {
                for &d in &self.columns[v] {
                    s[d] ^= 1;
                }
            }
        }
        s
    }

    /// Observable flips implied by an error estimate.
    pub fn predict_observables(&self, estimate: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.num_observables];
        for (v, &e) in estimate.iter().enumerate() {
            if e != 0 {
                for &o in &self.observables[v] {
                    out[o] ^= 1;
                }
            }
        }
        out
    }

    /// `-ln P(e) + const`: the sum of prior LLRs over selected mechanisms.
    pub fn cost(&self, estimate: &[u8]) -> f64 {
        estimate.iter().zip(&self.priors).filter(|(&e, _)| e != 0).map(|(_, w)| w).sum()
    }
}

/// XOR of the observable signatures of the selected mechanisms.
pub fn predict_observables(dem: &DetectorErrorModel, estimate: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; dem.num_observables];
    for (m, &e) in dem.mechanisms.iter().zip(estimate) {
        if e != 0 {
            for &o in &m.observables {
                out[o] ^= 1;
            }
        }
    }
    out
}
