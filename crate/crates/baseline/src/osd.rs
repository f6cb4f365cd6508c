use tanner_core::BitVec;

use crate::bp::BpOutput;
use crate::error::DecodeError;
use crate::graph::DecodingGraph;

/// Column echelon basis built one column at a time. Every stored vector has
/// a zero in the pivot rows of all earlier vectors, and remembers which
/// chosen columns it is the sum of.
pub(crate) struct Echelon {
    /// `(reduced column, pivot row, combination over chosen columns)`
    basis: Vec<(BitVec, usize, BitVec)>,
    /// Original column index of each chosen column.
    pub chosen: Vec<usize>,
    capacity: usize,
}

impl Echelon {
    /// `capacity` bounds the number of columns that can be chosen.
    pub fn new(capacity: usize) -> Self {
        Self { basis: Vec::new(), chosen: Vec::new(), capacity }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Reduces `v` in place; returns the combination of chosen columns that
    /// was subtracted.
    fn reduce(&self, v: &mut BitVec) -> BitVec {
        let mut combo = BitVec::zeros(self.capacity);
        for (b, pivot, c) in &self.basis {
            if v.get(*pivot) {
                v.xor_assign(b);
                combo.xor_assign(c);
            }
        }
        combo
    }

    /// Adds column `index` if it is independent of the basis.
    pub fn offer(&mut self, index: usize, column: &BitVec) -> bool {
        let mut v = column.clone();
        let mut combo = self.reduce(&mut v);
        match v.first_one() {
            Some(pivot) => {
                combo.set(self.chosen.len(), true);
                self.chosen.push(index);
                self.basis.push((v, pivot, combo));
                true
            }
            None => false,
        }
    }

    /// Chosen columns summing to `target`, or `None` outside the span.
    pub fn solve(&self, target: &BitVec) -> Option<Vec<usize>> {
        let mut v = target.clone();
        let combo = self.reduce(&mut v);
        v.is_zero().then(|| combo.ones().map(|i| self.chosen[i]).collect())
    }

    pub fn rank_of(rows: usize, columns: &[BitVec]) -> usize {
        let mut e = Echelon::new(rows);
        for (i, c) in columns.iter().enumerate() {
            if e.rank() == rows {
                break;
            }
            e.offer(i, c);
        }
        e.rank()
    }
}

/// Order-0 ordered-statistics decoding.
///
/// Mechanisms are ranked by posterior LLR, most likely flipped first (ties by
/// index). The first independent columns in that order form the information
/// set, and the unique estimate supported on it that reproduces the syndrome
/// is returned. If the BP hard decision also reproduces the syndrome and is
/// at least as likely under the priors, it is returned instead.
pub fn osd0(graph: &DecodingGraph, syndrome: &[u8], bp: &BpOutput) -> Result<Vec<u8>, DecodeError> {
    let nd = graph.num_detectors;
    if syndrome.len() != nd {
        return Err(DecodeError::SyndromeLength { expected: nd, found: syndrome.len() });
    }
    let mut order: Vec<usize> = (0..graph.num_mechanisms()).collect();
    order.sort_by(|&a, &b| bp.llr[a].total_cmp(&bp.llr[b]));
    let mut echelon = Echelon::new(graph.rank.max(1));
    for &v in &order {
        if echelon.rank() == graph.rank {
            break;
        }
        echelon.offer(v, &graph.column_bits[v]);
    }
    let target = BitVec::from_indices(nd, syndrome.iter().enumerate().filter(|(_, &s)| s != 0).map(|(i, _)| i));
    let support = echelon.solve(&target).ok_or(DecodeError::InfeasibleSyndrome)?;
    let mut estimate = vec![0u8; graph.num_mechanisms()];
    for v in support {
        estimate[v] = 1;
    }
    if graph.syndrome_of(&bp.estimate) == syndrome && graph.cost(&bp.estimate) <= graph.cost(&estimate) {
        return Ok(bp.estimate.clone());
    }
    Ok(estimate)
}
