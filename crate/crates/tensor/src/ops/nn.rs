use std::rc::Rc;

use crate::error::{shape_err, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Elementwise nonlinearity applied to each neighbour before the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Neighbour lists: entry `j` holds the source rows feeding target `j`.
pub type Adjacency = Rc<Vec<Vec<usize>>>;

impl Var {
    /// Multi-head softmax attention over `[B, L, H*dh]` inputs.
    ///
    /// `mask` is an optional row-major `L x L` table; `mask[i*L + j]` allows
    /// query `i` to see key `j`. A query with no visible key outputs zeros.
    pub fn attention(
        q: &Var,
        k: &Var,
        v: &Var,
        heads: usize,
        mask: Option<&[bool]>,
    ) -> Result<Var, TensorError> {
        let s = q.shape();
        if s.len() != 3 || k.shape() != s || v.shape() != s || heads == 0 || s[2] % heads != 0 {
            return Err(shape_err(
                "attention",
                format!("q {s:?}, k {:?}, v {:?}, heads {heads}", k.shape(), v.shape()),
            ));
        }
        let (b, l, width) = (s[0], s[1], s[2]);
        if let Some(m) = mask {
            if m.len() != l * l {
                return Err(shape_err("attention", format!("mask of {} for L={l}", m.len())));
            }
        }
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (q.value_rc(), k.value_rc(), v.value_rc());
        let (qd, kd, vd) = (qv.data(), kv.data(), vv.data());
        // probs[(b, h, i, j)]
        let mut probs = vec![0.0; b * heads * l * l];
        let mut out = vec![0.0; b * l * width];
        for bi in 0..b {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..l {
                    let qi = &qd[(bi * l + i) * width + off..][..dh];
                    let row = &mut probs[((bi * heads + h) * l + i) * l..][..l];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..l {
                        if mask.is_some_and(|m| !m[i * l + j]) {
                            row[j] = f64::NEG_INFINITY;
                            continue;
                        }
                        let kj = &kd[(bi * l + j) * width + off..][..dh];
                        let sc = scale * dot(qi, kj);
                        row[j] = sc;
                        max = max.max(sc);
                    }
                    if max == f64::NEG_INFINITY {
                        row.fill(0.0);
                        continue;
                    }
                    let mut z = 0.0;
                    for x in row.iter_mut() {
                        *x = (*x - max).exp();
                        z += *x;
                    }
                    let o = &mut out[(bi * l + i) * width + off..][..dh];
                    for (j, p) in row.iter_mut().enumerate() {
                        *p /= z;
                        if *p != 0.0 {
                            let vj = &vd[(bi * l + j) * width + off..][..dh];
                            for (a, c) in o.iter_mut().zip(vj) {
                                *a += *p * c;
                            }
                        }
                    }
                }
            }
        }
        let shape = s.to_vec();
        let out = Tensor::new(&shape, out)?;
        q.tape().record("attention", out, &[q, k, v], move |_| {
            Box::new(move |g| {
                let (qd, kd, vd, gd) = (qv.data(), kv.data(), vv.data(), g.data());
                let mut dq = vec![0.0; qd.len()];
                let mut dk = vec![0.0; kd.len()];
                let mut dv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; l];
                for bi in 0..b {
                    for h in 0..heads {
                        let off = h * dh;
                        for i in 0..l {
                            let row = &probs[((bi * heads + h) * l + i) * l..][..l];
                            let gi = &gd[(bi * l + i) * width + off..][..dh];
                            let mut acc = 0.0;
                            for j in 0..l {
                                if row[j] == 0.0 {
                                    dp[j] = 0.0;
                                    continue;
                                }
                                let base = (bi * l + j) * width + off;
                                dp[j] = dot(gi, &vd[base..][..dh]);
                                acc += row[j] * dp[j];
                                for (a, c) in dv[base..][..dh].iter_mut().zip(gi) {
                                    *a += row[j] * c;
                                }
                            }
                            let qbase = (bi * l + i) * width + off;
                            for j in 0..l {
                                if row[j] == 0.0 {
                                    continue;
                                }
                                let ds = row[j] * (dp[j] - acc) * scale;
                                let kbase = (bi * l + j) * width + off;
                                for c in 0..dh {
                                    dq[qbase + c] += ds * kd[kbase + c];
                                    dk[kbase + c] += ds * qd[qbase + c];
                                }
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::new(&shape, dq).unwrap()),
                    Some(Tensor::new(&shape, dk).unwrap()),
                    Some(Tensor::new(&shape, dv).unwrap()),
                ]
            })
        })
    }

    /// `x * g / sqrt(mean(x^2) + eps)` over the last axis; `g` has shape `[D]`.
    pub fn rmsnorm(&self, g: &Var, eps: f64) -> Result<Var, TensorError> {
        let d = self.value().last_dim();
        if g.shape() != [d] {
            return Err(shape_err("rmsnorm", format!("gain {:?} for width {d}", g.shape())));
        }
        let (xv, gv) = (self.value_rc(), g.value_rc());
        let rows = xv.numel() / d.max(1);
        let inv: Vec<f64> = xv
            .data()
            .chunks(d)
            .map(|r| 1.0 / (r.iter().map(|x| x * x).sum::<f64>() / d as f64 + eps).sqrt())
            .collect();
        let out = Tensor::from_fn(xv.shape(), |i| xv.data()[i] * gv.data()[i % d] * inv[i / d]);
        self.tape().record("rmsnorm", out, &[self, g], move |needs| {
            Box::new(move |gr| {
                let (x, gain, gd) = (xv.data(), gv.data(), gr.data());
                let mut dx = needs[0].then(|| vec![0.0; x.len()]);
                let mut dg = needs[1].then(|| vec![0.0; d]);
                for r in 0..rows {
                    let xr = &x[r * d..][..d];
                    let gyr = &gd[r * d..][..d];
                    let ir = inv[r];
                    if let Some(dx) = dx.as_mut() {
                        let s: f64 = (0..d).map(|c| gain[c] * gyr[c] * xr[c]).sum();
                        let coef = s * ir * ir * ir / d as f64;
                        for c in 0..d {
                            dx[r * d + c] = gain[c] * gyr[c] * ir - xr[c] * coef;
                        }
                    }
                    if let Some(dg) = dg.as_mut() {
                        for c in 0..d {
                            dg[c] += gyr[c] * xr[c] * ir;
                        }
                    }
                }
                vec![
                    dx.map(|v| Tensor::new(xv.shape(), v).unwrap()),
                    dg.map(|v| Tensor::new(&[d], v).unwrap()),
                ]
            })
        })
    }

    /// Scales each contiguous group of `group` trailing entries to unit length.
    pub fn l2norm_groups(&self, group: usize, eps: f64) -> Result<Var, TensorError> {
        if group == 0 || self.value().last_dim() % group != 0 {
            return Err(shape_err("l2norm", format!("group {group} for {:?}", self.shape())));
        }
        let xv = self.value_rc();
        let inv: Vec<f64> = xv
            .data()
            .chunks(group)
            .map(|r| 1.0 / (r.iter().map(|x| x * x).sum::<f64>() + eps).sqrt())
            .collect();
        let out = Tensor::from_fn(xv.shape(), |i| xv.data()[i] * inv[i / group]);
        let yv = Rc::new(out.clone());
        self.tape().record("l2norm", out, &[self], move |_| {
            Box::new(move |g| {
                let mut dx = vec![0.0; g.numel()];
                for (r, ir) in inv.iter().enumerate() {
                    let y = &yv.data()[r * group..][..group];
                    let gy = &g.data()[r * group..][..group];
                    let yg = dot(y, gy);
                    for c in 0..group {
                        dx[r * group + c] = (gy[c] - y[c] * yg) * ir;
                    }
                }
                vec![Some(Tensor::new(yv.shape(), dx).unwrap())]
            })
        })
    }

    /// `out[b, j, :] = prod_{i in adj[j]} act(src[b, i, :])` for `src` of
    /// shape `[B, N, h]`. Targets with no neighbours get ones.
    pub fn scatter_product(
        &self,
        adj: &Adjacency,
        act: Activation,
    ) -> Result<Var, TensorError> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(shape_err("scatter_product", format!("source {s:?} is not [B, N, h]")));
        }
        let (b, n, h) = (s[0], s[1], s[2]);
        for nbrs in adj.iter() {
            if let Some(&bad) = nbrs.iter().find(|&&i| i >= n) {
                return Err(TensorError::Index {
                    op: "scatter_product",
                    index: bad,
                    size: n,
                });
            }
        }
        let m = adj.len();
        let activated = Rc::new(self.value().map(|x| act.apply(x)));
        let a = activated.data();
        let mut out = vec![1.0; b * m * h];
        for bi in 0..b {
            for (j, nbrs) in adj.iter().enumerate() {
                let o = &mut out[(bi * m + j) * h..][..h];
                for &i in nbrs {
                    for (x, y) in o.iter_mut().zip(&a[(bi * n + i) * h..][..h]) {
                        *x *= y;
                    }
                }
            }
        }
        let out = Tensor::new(&[b, m, h], out)?;
        let adj = adj.clone();
        let src_shape = s.to_vec();
        self.tape().record("scatter_product", out, &[self], move |_| {
            Box::new(move |g| {
                let a = activated.data();
                let mut dx = vec![0.0; a.len()];
                let mut prefix = Vec::new();
                for bi in 0..b {
                    for (j, nbrs) in adj.iter().enumerate() {
                        let gj = &g.data()[(bi * m + j) * h..][..h];
                        for c in 0..h {
                            // leave-one-out products: prefix[r] * suffix after r
                            prefix.clear();
                            let mut run = 1.0;
                            for &i in nbrs {
                                prefix.push(run);
                                run *= a[(bi * n + i) * h + c];
                            }
                            let mut suffix = 1.0;
                            for (r, &i) in nbrs.iter().enumerate().rev() {
                                let idx = (bi * n + i) * h + c;
                                dx[idx] += gj[c] * prefix[r] * suffix * act.derivative_from_output(a[idx]);
                                suffix *= a[idx];
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(&src_shape, dx).unwrap())]
            })
        })
    }

    /// Mean binary cross-entropy of probabilities against 0/1 `labels`,
    /// with probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&self, labels: &Tensor) -> Result<Var, TensorError> {
        self.weighted_bce(labels, None)
    }

    /// Weighted BCE: `sum_i w_i * bce_i / sum_i w_i` (`None` = uniform).
    pub fn weighted_bce(&self, labels: &Tensor, weights: Option<&Tensor>) -> Result<Var, TensorError> {
        if labels.shape() != self.shape() || weights.is_some_and(|w| w.shape() != self.shape()) {
            return Err(shape_err("bce", format!("{:?} vs labels {:?}", self.shape(), labels.shape())));
        }
        const CLAMP: f64 = 1e-7;
        let pv = self.value_rc();
        let n = pv.numel();
        let w: Vec<f64> = match weights {
            Some(w) => w.data().to_vec(),
            None => vec![1.0; n],
        };
        let wsum: f64 = w.iter().sum();
        let y = labels.data().to_vec();
        let mut loss = 0.0;
        for i in 0..n {
            let p = pv.data()[i].clamp(CLAMP, 1.0 - CLAMP);
            loss -= w[i] * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
        }
        let out = Tensor::scalar(loss / wsum);
        self.tape().record("bce", out, &[self], move |_| {
            Box::new(move |g| {
                let d = Tensor::from_fn(pv.shape(), |i| {
                    let raw = pv.data()[i];
                    if !(CLAMP..=1.0 - CLAMP).contains(&raw) {
                        return 0.0;
                    }
                    let gi = -(y[i] / raw - (1.0 - y[i]) / (1.0 - raw));
                    g.item() * w[i] * gi / wsum
                });
                vec![Some(d)]
            })
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    #[test]
    fn single_neighbour_scatter_is_tanh() {
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::new(&[1, 2, 2], vec![0.3, -1.2, 2.0, 0.5]).unwrap());
        let adj: Adjacency = Rc::new(vec![vec![1], vec![0, 1], vec![]]);
        let y = x.scatter_product(&adj, Activation::Tanh).unwrap();
        let d = y.value().data();
        assert_eq!(d[0], 2.0f64.tanh());
        assert_eq!(d[1], 0.5f64.tanh());
        assert_eq!(d[2], 0.3f64.tanh() * 2.0f64.tanh());
        assert_eq!(&d[4..], &[1.0, 1.0]);
    }

    #[test]
    fn rmsnorm_of_constant_is_sign() {
        let tape = Tape::no_grad();
        for c in [-3.5, 0.2, 7.0] {
            let x = tape.constant(Tensor::full(&[1, 6], c));
            let g = tape.constant(Tensor::ones(&[6]));
            let y = x.rmsnorm(&g, 0.0).unwrap();
            for &v in y.value().data() {
                assert!((v - f64::signum(c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let tape = Tape::no_grad();
        let (b, l, w) = (2, 5, 4);
        let q = tape.constant(Tensor::from_fn(&[b, l, w], |i| (i as f64).sin()));
        let k = tape.constant(Tensor::from_fn(&[b, l, w], |i| (i % w) as f64 * 0.7));
        let v = tape.constant(Tensor::from_fn(&[b, l, w], |i| (i as f64 * 1.3).cos()));
        let o = Var::attention(&q, &k, &v, 2, None).unwrap();
        for bi in 0..b {
            for c in 0..w {
                let mean: f64 = (0..l).map(|j| v.value().data()[(bi * l + j) * w + c]).sum::<f64>() / l as f64;
                for i in 0..l {
                    assert!((o.value().data()[(bi * l + i) * w + c] - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fully_masked_query_gives_zero() {
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::from_fn(&[1, 2, 2], |i| i as f64 + 1.0));
        let mask = [false, false, true, true];
        let o = Var::attention(&x, &x, &x, 1, Some(&mask)).unwrap();
        assert_eq!(&o.value().data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let tape = Tape::no_grad();
        let p = tape.constant(Tensor::full(&[3, 2], 0.5));
        let l = p.bce(&Tensor::new(&[3, 2], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert!((l.value().item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
