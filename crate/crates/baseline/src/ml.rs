//! Exact degenerate maximum-likelihood decoding for small models.
//!
//! The oracle tabulates the joint distribution of (detector pattern,
//! observable pattern) once, then answers each syndrome with the observable
//! class of largest total probability.

use std::collections::HashMap;

use tanner_core::DetectorErrorModel;

use crate::error::DecodeError;

pub const MAX_ENUMERATED_MECHANISMS: usize = 24;
pub const MAX_TABULATED_DETECTORS: usize = 16;
const MAX_OBSERVABLES: usize = 16;

fn mask(indices: &[usize]) -> u64 {
    indices.iter().fold(0u64, |m, &i| m | (1 << i))
}

#[derive(Debug, Clone)]
enum Table {
    /// `probs[syndrome * classes + observables]`
    Dense { probs: Vec<f64> },
    Sparse { probs: HashMap<u64, Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct MlOracle {
    num_detectors: usize,
    num_observables: usize,
    table: Table,
}

impl MlOracle {
    /// Picks subset enumeration for at most 24 mechanisms (and at most 64
    /// detectors), else a dense table over syndromes for at most 16
    /// detectors.
    pub fn new(dem: &DetectorErrorModel) -> Result<Self, DecodeError> {
        let m = dem.mechanisms.len();
        if m <= MAX_ENUMERATED_MECHANISMS && dem.num_detectors <= 64 {
            Self::by_enumeration(dem)
        } else {
            Self::by_convolution(dem)
        }
    }

    fn too_large(dem: &DetectorErrorModel) -> DecodeError {
        DecodeError::TooLarge { mechanisms: dem.mechanisms.len(), detectors: dem.num_detectors }
    }

    /// Gray-code walk over all `2^m` error subsets.
    pub fn by_enumeration(dem: &DetectorErrorModel) -> Result<Self, DecodeError> {
        let m = dem.mechanisms.len();
        if m > MAX_ENUMERATED_MECHANISMS || dem.num_detectors > 64 || dem.num_observables > MAX_OBSERVABLES {
            return Err(Self::too_large(dem));
        }
        let classes = 1usize << dem.num_observables;
        let det: Vec<u64> = dem.mechanisms.iter().map(|x| mask(&x.detectors)).collect();
        let obs: Vec<u64> = dem.mechanisms.iter().map(|x| mask(&x.observables)).collect();
        let p: Vec<f64> = dem.mechanisms.iter().map(|x| x.probability).collect();
        let mut selected = vec![false; m];
        let (mut s, mut o) = (0u64, 0u64);
        let mut probs: HashMap<u64, Vec<f64>> = HashMap::new();
        let weight = |selected: &[bool]| -> f64 {
            selected.iter().zip(&p).map(|(&on, &q)| if on { q } else { 1.0 - q }).product()
        };
        let mut add = |s: u64, o: u64, w: f64| probs.entry(s).or_insert_with(|| vec![0.0; classes])[o as usize] += w;
        add(0, 0, weight(&selected));
        for step in 1u64..(1u64 << m) {
            let flip = step.trailing_zeros() as usize;
            selected[flip] = !selected[flip];
            s ^= det[flip];
            o ^= obs[flip];
            add(s, o, weight(&selected));
        }
        Ok(Self { num_detectors: dem.num_detectors, num_observables: dem.num_observables, table: Table::Sparse { probs } })
    }

    /// Folds mechanisms one at a time into a dense distribution over
    /// (syndrome, observables).
    pub fn by_convolution(dem: &DetectorErrorModel) -> Result<Self, DecodeError> {
        if dem.num_detectors > MAX_TABULATED_DETECTORS || dem.num_observables > MAX_OBSERVABLES {
            return Err(Self::too_large(dem));
        }
        let classes = 1usize << dem.num_observables;
        let size = (1usize << dem.num_detectors) * classes;
        let mut probs = vec![0.0; size];
        probs[0] = 1.0;
        let mut next = vec![0.0; size];
        for mech in &dem.mechanisms {
            let shift = ((mask(&mech.detectors) as usize) * classes) ^ mask(&mech.observables) as usize;
            let q = mech.probability;
            for (i, &x) in probs.iter().enumerate() {
                if x != 0.0 {
                    next[i] += (1.0 - q) * x;
                    next[i ^ shift] += q * x;
                }
            }
            std::mem::swap(&mut probs, &mut next);
            next.fill(0.0);
        }
        Ok(Self { num_detectors: dem.num_detectors, num_observables: dem.num_observables, table: Table::Dense { probs } })
    }

    /// Total probability of each observable class given the syndrome
    /// (unnormalised joint probabilities).
    pub fn class_probabilities(&self, syndrome: &[u8]) -> Result<Vec<f64>, DecodeError> {
        if syndrome.len() != self.num_detectors {
            return Err(DecodeError::SyndromeLength { expected: self.num_detectors, found: syndrome.len() });
        }
        let key = syndrome.iter().enumerate().fold(0u64, |m, (i, &b)| m | (u64::from(b & 1) << i));
        let classes = 1usize << self.num_observables;
        Ok(match &self.table {
            Table::Dense { probs } => probs[key as usize * classes..][..classes].to_vec(),
            Table::Sparse { probs } => probs.get(&key).cloned().unwrap_or_else(|| vec![0.0; classes]),
        })
    }

    /// Most likely observable flips; ties and impossible syndromes give the
    /// lowest class.
    pub fn decode(&self, syndrome: &[u8]) -> Result<Vec<u8>, DecodeError> {
        let probs = self.class_probabilities(syndrome)?;
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        Ok((0..self.num_observables).map(|i| ((best >> i) & 1) as u8).collect())
    }
}
