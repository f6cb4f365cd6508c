use crate::error::DecodeError;
use crate::graph::{DecodingGraph, MAX_LLR};

/// Check-node update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BpVariant {
    ProductSum,
    /// Normalised min-sum with the given scale in `(0, 1]`.
    MinSum { scale: f64 },
}

/// Message-passing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// All checks, then all mechanisms.
    Parallel,
    /// Checks one at a time, each seeing the updates of the previous ones.
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsdMode {
    Off,
    Order0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub max_iterations: usize,
    pub variant: BpVariant,
    pub schedule: Schedule,
    pub osd: OsdMode,
}

impl BpConfig {
    /// Product-sum, serial, OSD-0, and one iteration per mechanism up to 1000.
    pub fn for_mechanisms(mechanisms: usize) -> Self {
        Self {
            max_iterations: mechanisms.clamp(1, 1000),
            variant: BpVariant::ProductSum,
            schedule: Schedule::Serial,
            osd: OsdMode::Order0,
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.max_iterations == 0 {
            return Err(DecodeError::Config("max_iterations must be at least 1".into()));
        }
        if let BpVariant::MinSum { scale } = self.variant {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(DecodeError::Config(format!("min-sum scale {scale} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpOutput {
    /// Hard decision per mechanism.
    pub estimate: Vec<u8>,
    /// Posterior log-likelihood ratios `ln P(0) / P(1)` per mechanism.
    pub llr: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Edge-indexed message storage for one decoding graph.
#[derive(Debug, Clone)]
pub struct BpDecoder {
    /// Per detector, `(mechanism, edge)` pairs.
    check_edges: Vec<Vec<(usize, usize)>>,
    num_edges: usize,
    priors: Vec<f64>,
    variant: BpVariant,
    schedule: Schedule,
    max_iterations: usize,
}

const TANH_CLAMP: f64 = 1.0 - 1e-15;

fn atanh2(x: f64) -> f64 {
    2.0 * x.clamp(-TANH_CLAMP, TANH_CLAMP).atanh()
}

impl BpDecoder {
    pub fn new(graph: &DecodingGraph, config: &BpConfig) -> Result<Self, DecodeError> {
        config.validate()?;
        let mut num_edges = 0;
        let check_edges = graph
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| {
                        num_edges += 1;
                        (v, num_edges - 1)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            check_edges,
            num_edges,
            priors: graph.priors.clone(),
            variant: config.variant,
            schedule: config.schedule,
            max_iterations: config.max_iterations,
        })
    }

    /// Writes the check-to-mechanism messages of one check into `r` given the
    /// incoming mechanism-to-check messages `q` (both edge-indexed).
    fn check_update(&self, edges: &[(usize, usize)], flipped: bool, q: &[f64], r: &mut [f64]) {
        let sign = if flipped { -1.0 } else { 1.0 };
        match self.variant {
            BpVariant::ProductSum => {
                // leave-one-out products by prefix and suffix scans
                let t: Vec<f64> = edges.iter().map(|&(_, e)| (q[e] / 2.0).tanh()).collect();
                let mut prefix = 1.0;
                let mut pre = Vec::with_capacity(t.len());
                for &x in &t {
                    pre.push(prefix);
                    prefix *= x;
                }
                let mut suffix = 1.0;
                for i in (0..t.len()).rev() {
                    r[edges[i].1] = sign * atanh2(pre[i] * suffix);
                    suffix *= t[i];
                }
            }
            BpVariant::MinSum { scale } => {
                let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
                let mut parity = sign;
                for (i, &(_, e)) in edges.iter().enumerate() {
                    let a = q[e].abs();
                    if q[e] < 0.0 {
                        parity = -parity;
                    }
                    if a < min1 {
                        (min2, min1, arg) = (min1, a, i);
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for (i, &(_, e)) in edges.iter().enumerate() {
                    let s = if q[e] < 0.0 { -parity } else { parity };
                    let m = if i == arg { min2 } else { min1 };
                    r[e] = s * scale * m.min(2.0 * MAX_LLR);
                }
            }
        }
    }

    fn satisfied(&self, syndrome: &[u8], estimate: &[u8]) -> bool {
        self.check_edges.iter().zip(syndrome).all(|(edges, &s)| {
            let parity = edges.iter().fold(0u8, |acc, &(v, _)| acc ^ estimate[v]);
            parity == (s & 1)
        })
    }

    fn check_len(&self, syndrome: &[u8]) -> Result<(), DecodeError> {
        if syndrome.len() != self.check_edges.len() {
            return Err(DecodeError::SyndromeLength { expected: self.check_edges.len(), found: syndrome.len() });
        }
        Ok(())
    }

    /// Runs until the hard decision reproduces the syndrome or the iteration
    /// limit is hit.
    pub fn decode(&self, syndrome: &[u8]) -> Result<BpOutput, DecodeError> {
        self.check_len(syndrome)?;
        Ok(self.run(syndrome, self.max_iterations, true))
    }

    /// Exactly `iterations` rounds without early stopping; returns posterior
    /// LLRs.
    pub fn marginals(&self, syndrome: &[u8], iterations: usize) -> Result<Vec<f64>, DecodeError> {
        self.check_len(syndrome)?;
        Ok(self.run(syndrome, iterations, false).llr)
    }

    fn run(&self, syndrome: &[u8], iterations: usize, stop: bool) -> BpOutput {
        let nv = self.priors.len();
        let mut q = vec![0.0; self.num_edges];
        let mut r = vec![0.0; self.num_edges];
        let mut post = self.priors.clone();
        let mut estimate = vec![0u8; nv];
        for (edges, _) in self.check_edges.iter().zip(syndrome) {
            for &(v, e) in edges {
                q[e] = self.priors[v];
            }
        }
        let mut done = 0;
        let mut converged = false;
        for it in 1..=iterations.max(1) {
            match self.schedule {
                Schedule::Parallel => {
                    for (edges, &s) in self.check_edges.iter().zip(syndrome) {
                        self.check_update(edges, s & 1 == 1, &q, &mut r);
                    }
                    post.copy_from_slice(&self.priors);
                    for edges in &self.check_edges {
                        for &(v, e) in edges {
                            post[v] += r[e];
                        }
                    }
                    for edges in &self.check_edges {
                        for &(v, e) in edges {
                            q[e] = post[v] - r[e];
                        }
                    }
                }
                Schedule::Serial => {
                    for (edges, &s) in self.check_edges.iter().zip(syndrome) {
                        for &(v, e) in edges {
                            q[e] = post[v] - r[e];
                        }
                        self.check_update(edges, s & 1 == 1, &q, &mut r);
                        for &(v, e) in edges {
                            post[v] = q[e] + r[e];
                        }
                    }
                }
            }
            for (x, &l) in estimate.iter_mut().zip(&post) {
                *x = u8::from(l < 0.0);
            }
            done = it;
            converged = self.satisfied(syndrome, &estimate);
            if stop && converged {
                break;
            }
        }
        BpOutput { estimate, llr: post, converged, iterations: done }
    }
}
