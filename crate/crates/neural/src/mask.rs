//! Attention pattern of parallel training with pseudo readouts.
//!
//! Sequence positions are `T` cycle slices followed by `T` readout slices,
//! each slice holding `nodes` positions. A cycle slice sees every cycle
//! slice up to its own time; the readout slice forked after cycle `t` sees
//! cycle slices up to `t` and itself, but no other readout slice.
//!
//! The model realises the three parts structurally: the causal temporal
//! layers cover cycle-to-cycle, the readout at `t` reads the decoder output at
//! `t` (readout-to-cycle), and the per-slice mixer is the diagonal
//! readout-to-readout part. The functions here state the same pattern as
//! softmax attention, once with the sparse mask and once as three dense
//! blocks merged by log-sum-exp.

use tanner_tensor::{Tape, Tensor, Var};

use crate::error::NeuralError;

fn slice_of(pos: usize, cycles: usize, nodes: usize) -> (bool, usize) {
    let s = pos / nodes;
    (s >= cycles, s % cycles)
}

/// Row-major `L x L` visibility with `L = 2 * cycles * nodes`.
pub fn effective_mask(cycles: usize, nodes: usize) -> Vec<bool> {
    let l = 2 * cycles * nodes;
    let mut mask = vec![false; l * l];
    for i in 0..l {
        let (qr, qt) = slice_of(i, cycles, nodes);
        for j in 0..l {
            let (kr, kt) = slice_of(j, cycles, nodes);
            mask[i * l + j] = match (qr, kr) {
                (_, false) => kt <= qt,
                (true, true) => kt == qt,
                (false, true) => false,
            };
        }
    }
    mask
}

fn check(q: &Tensor, k: &Tensor, v: &Tensor, cycles: usize, nodes: usize) -> Result<(usize, usize), NeuralError> {
    let l = 2 * cycles * nodes;
    let s = q.shape();
    if s.len() != 2 || s[0] != l || k.shape() != s || v.shape() != s {
        return Err(NeuralError::Mismatch(format!(
            "expected q, k, v of shape [{l}, d], got {s:?}, {:?}, {:?}",
            k.shape(),
            v.shape()
        )));
    }
    Ok((l, s[1]))
}

/// Single-head softmax attention under [`effective_mask`].
pub fn dense_masked_attention(q: &Tensor, k: &Tensor, v: &Tensor, cycles: usize, nodes: usize) -> Result<Tensor, NeuralError> {
    let (l, d) = check(q, k, v, cycles, nodes)?;
    let tape = Tape::no_grad();
    let lift = |t: &Tensor| tape.constant(t.clone().reshape(&[1, l, d]).expect("same size"));
    let mask = effective_mask(cycles, nodes);
    let out = Var::attention(&lift(q), &lift(k), &lift(v), 1, Some(&mask))?;
    Ok(out.value().clone().reshape(&[l, d])?)
}

/// Unnormalised partial attention of one query over a key range.
struct Partial {
    lse: f64,
    out: Vec<f64>,
}

fn partial(q: &[f64], keys: impl Iterator<Item = usize>, k: &Tensor, v: &Tensor, d: usize, scale: f64) -> Partial {
    let idx: Vec<usize> = keys.collect();
    let scores: Vec<f64> = idx
        .iter()
        .map(|&j| scale * q.iter().zip(&k.data()[j * d..][..d]).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut out = vec![0.0; d];
    for (&j, &s) in idx.iter().zip(&scores) {
        let w = (s - max).exp();
        z += w;
        for (o, x) in out.iter_mut().zip(&v.data()[j * d..][..d]) {
            *o += w * x;
        }
    }
    out.iter_mut().for_each(|o| *o /= z);
    Partial { lse: max + z.ln(), out }
}

/// The same attention as three dense pieces: block-causal cycle-to-cycle,
/// block-causal readout-to-cycle and block-diagonal readout-to-readout. The
/// two readout pieces are merged by their log-sum-exp weights.
pub fn decomposed_attention(q: &Tensor, k: &Tensor, v: &Tensor, cycles: usize, nodes: usize) -> Result<Tensor, NeuralError> {
    let (l, d) = check(q, k, v, cycles, nodes)?;
    let scale = 1.0 / (d as f64).sqrt();
    let half = cycles * nodes;
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        let qi = &q.data()[i * d..][..d];
        let t = (i / nodes) % cycles;
        let causal = 0..(t + 1) * nodes;
        let row = &mut out[i * d..][..d];
        if i < half {
            row.copy_from_slice(&partial(qi, causal, k, v, d, scale).out);
        } else {
            let a = partial(qi, causal, k, v, d, scale);
            let b = partial(qi, half + t * nodes..half + (t + 1) * nodes, k, v, d, scale);
            let lse = a.lse.max(b.lse) + ((a.lse - a.lse.max(b.lse)).exp() + (b.lse - a.lse.max(b.lse)).exp()).ln();
            let (wa, wb) = ((a.lse - lse).exp(), (b.lse - lse).exp());
            for c in 0..d {
                row[c] = wa * a.out[c] + wb * b.out[c];
            }
        }
    }
    Ok(Tensor::new(&[l, d], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_shape_for_two_cycles() {
        // one node per slice: positions c0 c1 r0 r1
        let m = effective_mask(2, 1);
        let rows: Vec<Vec<bool>> = m.chunks(4).map(|r| r.to_vec()).collect();
        assert_eq!(rows[0], [true, false, false, false]);
        assert_eq!(rows[1], [true, true, false, false]);
        assert_eq!(rows[2], [true, false, true, false]);
        assert_eq!(rows[3], [true, true, false, true]);
    }
}
