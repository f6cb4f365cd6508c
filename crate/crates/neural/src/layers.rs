use rand::Rng;
use tanner_tensor::{delta_rule_parallel, delta_rule_step, Tensor, Var};

use crate::error::NeuralError;
use crate::params::{Bound, Init, ParamId, ParamStore};

pub(crate) const INIT_STD: f64 = 0.02;

type R<T> = Result<T, NeuralError>;

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

impl Linear {
    pub fn new<G: Rng>(store: &mut ParamStore, rng: &mut G, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let w = store.add(format!("{name}.w"), &[fan_in, fan_out], Init::TruncNormal(INIT_STD), rng);
        let b = bias.then(|| store.add(format!("{name}.b"), &[fan_out], Init::Zeros, rng));
        Self { w, b }
    }

    pub fn apply(&self, p: &Bound, x: &Var) -> R<Var> {
        Ok(x.linear(p.var(self.w), self.b.map(|b| p.var(b)))?)
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.b
    }
}

/// Post-norm transformer block: multi-head self-attention, then a SwiGLU
/// feed-forward, each added back and RMS-normalised.
#[derive(Debug, Clone)]
pub(crate) struct TransformerLayer {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    norm1: ParamId,
    w1: Linear,
    w3: Linear,
    w2: Linear,
    norm2: ParamId,
    heads: usize,
    eps: f64,
}

impl TransformerLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<G: Rng>(store: &mut ParamStore, rng: &mut G, name: &str, dim: usize, ffn: usize, heads: usize, eps: f64) -> Self {
        let mut lin = |s: &str, i, o| Linear::new(store, rng, &format!("{name}.{s}"), i, o, false);
        let (wq, wk, wv, wo) = (lin("wq", dim, dim), lin("wk", dim, dim), lin("wv", dim, dim), lin("wo", dim, dim));
        let (w1, w3, w2) = (lin("w1", dim, ffn), lin("w3", dim, ffn), lin("w2", ffn, dim));
        let norm1 = store.add(format!("{name}.norm1"), &[dim], Init::Ones, rng);
        let norm2 = store.add(format!("{name}.norm2"), &[dim], Init::Ones, rng);
        Self { wq, wk, wv, wo, norm1, w1, w3, w2, norm2, heads, eps }
    }

    /// `x` is `[batch, nodes, dim]`; attention runs across nodes.
    pub fn forward(&self, p: &Bound, x: &Var) -> R<Var> {
        let q = self.wq.apply(p, x)?;
        let k = self.wk.apply(p, x)?;
        let v = self.wv.apply(p, x)?;
        let a = self.wo.apply(p, &Var::attention(&q, &k, &v, self.heads, None)?)?;
        let x = x.add(&a)?.rmsnorm(p.var(self.norm1), self.eps)?;
        let gate = self.w1.apply(p, &x)?.silu()?;
        let f = self.w2.apply(p, &gate.mul(&self.w3.apply(p, &x)?)?)?;
        Ok(x.add(&f)?.rmsnorm(p.var(self.norm2), self.eps)?)
    }
}

pub(crate) fn stack_forward(layers: &[TransformerLayer], p: &Bound, x: Var) -> R<Var> {
    layers.iter().try_fold(x, |x, l| l.forward(p, &x))
}

fn chunk(v: &Var, start: usize, len: usize) -> &[f64] {
    &v.value().data()[start..start + len]
}

/// Which implementation of the delta rule to run over a whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SequenceKernel {
    /// Differentiable recurrent scan.
    Scan,
    /// State-free closed form; inference only.
    Closed,
}

/// Gated delta-rule linear attention over time, with post-norm residual.
#[derive(Debug, Clone)]
pub(crate) struct GdnLayer {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wg: Linear,
    wo: Linear,
    alpha: Linear,
    beta: Linear,
    head_norm: ParamId,
    out_norm: ParamId,
    heads: usize,
    dh: usize,
    eps: f64,
}

struct Projected {
    q: Var,
    k: Var,
    v: Var,
    alpha: Var,
    beta: Var,
    gate: Var,
}

impl GdnLayer {
    pub fn new<G: Rng>(store: &mut ParamStore, rng: &mut G, name: &str, dim: usize, heads: usize, eps: f64) -> Self {
        let mut lin = |s: &str, o, bias| Linear::new(store, rng, &format!("{name}.{s}"), dim, o, bias);
        let (wq, wk, wv, wg, wo) = (
            lin("wq", dim, false),
            lin("wk", dim, false),
            lin("wv", dim, false),
            lin("wg", dim, false),
            lin("wo", dim, false),
        );
        let alpha = lin("alpha", heads, true);
        let beta = lin("beta", heads, true);
        let dh = dim / heads;
        let head_norm = store.add(format!("{name}.head_norm"), &[dh], Init::Ones, rng);
        let out_norm = store.add(format!("{name}.norm"), &[dim], Init::Ones, rng);
        Self { wq, wk, wv, wg, wo, alpha, beta, head_norm, out_norm, heads, dh, eps }
    }

    pub fn state_len(&self) -> usize {
        self.heads * self.dh * self.dh
    }

    fn project(&self, p: &Bound, x: &Var) -> R<Projected> {
        Ok(Projected {
            q: self.wq.apply(p, x)?,
            k: self.wk.apply(p, x)?.l2norm_groups(self.dh, self.eps)?,
            v: self.wv.apply(p, x)?,
            alpha: self.alpha.apply(p, x)?.sigmoid()?,
            beta: self.beta.apply(p, x)?.sigmoid()?,
            gate: self.wg.apply(p, x)?,
        })
    }

    fn finish(&self, p: &Bound, x: &Var, o: &Var, gate: &Var) -> R<Var> {
        let shape = o.shape().to_vec();
        let mut heads_shape = shape[..shape.len() - 1].to_vec();
        heads_shape.extend([self.heads, self.dh]);
        let o = o
            .reshape(&heads_shape)?
            .rmsnorm(p.var(self.head_norm), self.eps)?
            .reshape(&shape)?
            .mul(&gate.silu()?)?;
        let o = self.wo.apply(p, &o)?;
        Ok(x.add(&o)?.rmsnorm(p.var(self.out_norm), self.eps)?)
    }

    /// `x` is `[sequences, T, dim]`, every sequence starting from a zero state.
    pub fn forward_sequence(&self, p: &Bound, x: &Var, kernel: SequenceKernel) -> R<Var> {
        let pr = self.project(p, x)?;
        let o = match kernel {
            SequenceKernel::Scan => Var::gated_delta_rule(&pr.q, &pr.k, &pr.v, &pr.alpha, &pr.beta, self.heads)?,
            SequenceKernel::Closed => {
                let shape = x.shape().to_vec();
                let (n, t, w) = (shape[0], shape[1], shape[2]);
                let mut out = Vec::with_capacity(n * t * w);
                let gates = t * self.heads;
                for s in 0..n {
                    let seq = |v| chunk(v, s * t * w, t * w);
                    let gate = |v| chunk(v, s * gates, gates);
                    out.extend(delta_rule_parallel(
                        seq(&pr.q),
                        seq(&pr.k),
                        seq(&pr.v),
                        gate(&pr.alpha),
                        gate(&pr.beta),
                        self.heads,
                    ));
                }
                x.tape().constant(Tensor::new(&shape, out)?)
            }
        };
        self.finish(p, x, &o, &pr.gate)
    }

    /// One token per sequence: `x` is `[sequences, dim]` and `state` holds
    /// `sequences * state_len()` values, updated in place.
    pub fn step(&self, p: &Bound, x: &Var, state: &mut [f64]) -> R<Var> {
        let pr = self.project(p, x)?;
        let shape = x.shape().to_vec();
        let (n, w) = (shape[0], shape[1]);
        let sl = self.state_len();
        let mut out = vec![0.0; n * w];
        let h = self.heads;
        for s in 0..n {
            let row = |v| chunk(v, s * w, w);
            let gate = |v| chunk(v, s * h, h);
            delta_rule_step(
                &mut state[s * sl..][..sl],
                row(&pr.q),
                row(&pr.k),
                row(&pr.v),
                gate(&pr.alpha),
                gate(&pr.beta),
                &mut out[s * w..][..w],
            );
        }
        let o = x.tape().constant(Tensor::new(&shape, out)?);
        self.finish(p, x, &o, &pr.gate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use tanner_tensor::Tape;

    #[test]
    fn gdn_single_step_matches_sequence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = GdnLayer::new(&mut store, &mut rng, "g", 8, 2, 1e-5);
        let tape = Tape::no_grad();
        let p = store.bind(&tape);
        let x = Tensor::from_fn(&[3, 8], |i| (i as f64 * 0.37).sin());
        let mut state = vec![0.0; 3 * layer.state_len()];
        let a = layer.step(&p, &tape.constant(x.clone()), &mut state).unwrap();
        let seq = tape.constant(x.reshape(&[3, 1, 8]).unwrap());
        let b = layer.forward_sequence(&p, &seq, SequenceKernel::Closed).unwrap();
        assert_eq!(a.value().data(), b.value().data());
    }
}
