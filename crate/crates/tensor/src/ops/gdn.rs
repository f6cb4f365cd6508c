//! Gated delta rule.
//!
//! Per head the state is a `dh x dh` matrix `S` (key rows, value columns):
//!
//! ```text
//! S_t = alpha_t (I - beta_t k_t k_t^T) S_{t-1} + beta_t k_t v_t^T
//! o_t = S_t^T q_t
//! ```
//!
//! Three implementations share this recurrence: a single step on an explicit
//! state (streaming inference), a whole-sequence form that never builds `S`
//! (parallel inference), and a differentiable scan used for training.

use crate::error::{shape_err, TensorError};
use crate::ops::nn::dot;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Advances one state by one token and returns `S_t^T q`.
///
/// `state` is `[heads, dh, dh]`; `q`, `k`, `v` are `[heads * dh]`;
/// `alpha`, `beta` are `[heads]`.
pub fn delta_rule_step(
    state: &mut [f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    alpha: &[f64],
    beta: &[f64],
    out: &mut [f64],
) {
    let heads = alpha.len();
    let dh = q.len() / heads;
    let mut u = vec![0.0; dh];
    let mut r = vec![0.0; dh];
    for h in 0..heads {
        let s = &mut state[h * dh * dh..][..dh * dh];
        let (qh, kh, vh) = (&q[h * dh..][..dh], &k[h * dh..][..dh], &v[h * dh..][..dh]);
        let (a, b) = (alpha[h], beta[h]);
        // u = S^T k and r = S^T q on the old state; then with
        // w = b (v - a u): S' = a S + k w^T and S'^T q = a r + (q . k) w.
        u.fill(0.0);
        r.fill(0.0);
        for i in 0..dh {
            for j in 0..dh {
                u[j] += kh[i] * s[i * dh + j];
                r[j] += qh[i] * s[i * dh + j];
            }
        }
        for (uj, vj) in u.iter_mut().zip(vh) {
            *uj = b * (vj - a * *uj);
        }
        let w = &u;
        for i in 0..dh {
            for j in 0..dh {
                s[i * dh + j] = a * s[i * dh + j] + kh[i] * w[j];
            }
        }
        let qk = dot(qh, kh);
        for (j, o) in out[h * dh..][..dh].iter_mut().enumerate() {
            *o = a * r[j] + qk * w[j];
        }
    }
}

/// Whole-sequence evaluation from a zero state without materialising `S`.
///
/// With decay `g(t, j) = alpha_{j+1} ... alpha_t`, the state is
/// `S_t = sum_{j<=t} g(t, j) k_j w_j^T` where
/// `w_t = beta_t (v_t - sum_{j<t} g(t, j) (k_t . k_j) w_j)`, so
/// `o_t = sum_{j<=t} g(t, j) (q_t . k_j) w_j`.
///
/// Inputs are `[T, heads * dh]` and `[T, heads]`; output is `[T, heads * dh]`.
pub fn delta_rule_parallel(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    alpha: &[f64],
    beta: &[f64],
    heads: usize,
) -> Vec<f64> {
    let width = q.len() / (alpha.len() / heads).max(1);
    let t_len = alpha.len() / heads;
    let dh = width / heads;
    let mut out = vec![0.0; q.len()];
    let mut w = vec![0.0; t_len * dh];
    let mut log_cum = vec![0.0; t_len + 1];
    for h in 0..heads {
        for t in 0..t_len {
            log_cum[t + 1] = log_cum[t] + alpha[t * heads + h].ln();
        }
        let decay = |t: usize, j: usize| (log_cum[t + 1] - log_cum[j + 1]).exp();
        let vec_at = |x: &'_ [f64], t: usize| -> Vec<f64> { x[t * width + h * dh..][..dh].to_vec() };
        for t in 0..t_len {
            let kt = vec_at(k, t);
            let mut wt = vec_at(v, t);
            for j in 0..t {
                let c = decay(t, j) * dot(&kt, &k[j * width + h * dh..][..dh]);
                for (a, b) in wt.iter_mut().zip(&w[j * dh..][..dh]) {
                    *a -= c * b;
                }
            }
            let b = beta[t * heads + h];
            for (dst, x) in w[t * dh..][..dh].iter_mut().zip(&wt) {
                *dst = b * x;
            }
            let qt = vec_at(q, t);
            let o = &mut out[t * width + h * dh..][..dh];
            for j in 0..=t {
                let c = decay(t, j) * dot(&qt, &k[j * width + h * dh..][..dh]);
                for (a, b) in o.iter_mut().zip(&w[j * dh..][..dh]) {
                    *a += c * b;
                }
            }
        }
    }
    out
}

impl Var {
    /// Differentiable gated delta rule over `[N, T, heads * dh]` sequences
    /// with `[N, T, heads]` gates, starting from a zero state.
    pub fn gated_delta_rule(
        q: &Var,
        k: &Var,
        v: &Var,
        alpha: &Var,
        beta: &Var,
        heads: usize,
    ) -> Result<Var, TensorError> {
        let s = q.shape();
        let ok = s.len() == 3
            && heads > 0
            && s[2] % heads == 0
            && k.shape() == s
            && v.shape() == s
            && alpha.shape() == [s[0], s[1], heads]
            && beta.shape() == [s[0], s[1], heads];
        if !ok {
            return Err(shape_err(
                "gated_delta_rule",
                format!(
                    "q {s:?}, k {:?}, v {:?}, alpha {:?}, beta {:?}, heads {heads}",
                    k.shape(),
                    v.shape(),
                    alpha.shape(),
                    beta.shape()
                ),
            ));
        }
        let (n, t_len, width) = (s[0], s[1], s[2]);
        let dh = width / heads;
        let mat = dh * dh;
        let (qv, kv, vv, av, bv) = (q.value_rc(), k.value_rc(), v.value_rc(), alpha.value_rc(), beta.value_rc());
        // states[((seq * heads + h) * (T + 1) + t) * mat], t = 0 is the zero state
        let mut states = vec![0.0; n * heads * (t_len + 1) * mat];
        let mut out = vec![0.0; n * t_len * width];
        let mut u = vec![0.0; dh];
        for seq in 0..n {
            for h in 0..heads {
                let base = (seq * heads + h) * (t_len + 1) * mat;
                for t in 0..t_len {
                    let tok = (seq * t_len + t) * width + h * dh;
                    let g = (seq * t_len + t) * heads + h;
                    let (kh, vh, qh) = (&kv.data()[tok..][..dh], &vv.data()[tok..][..dh], &qv.data()[tok..][..dh]);
                    let (a, b) = (av.data()[g], bv.data()[g]);
                    let (prev, next) = states[base + t * mat..][..2 * mat].split_at_mut(mat);
                    u.fill(0.0);
                    for i in 0..dh {
                        for j in 0..dh {
                            u[j] += kh[i] * prev[i * dh + j];
                        }
                    }
                    for i in 0..dh {
                        let bk = b * kh[i];
                        for j in 0..dh {
                            next[i * dh + j] = a * prev[i * dh + j] + bk * (vh[j] - a * u[j]);
                        }
                    }
                    let o = &mut out[tok..][..dh];
                    for i in 0..dh {
                        for j in 0..dh {
                            o[j] += next[i * dh + j] * qh[i];
                        }
                    }
                }
            }
        }
        let shape = s.to_vec();
        let gate_shape = alpha.shape().to_vec();
        let out = Tensor::new(&shape, out)?;
        q.tape().record("gated_delta_rule", out, &[q, k, v, alpha, beta], move |_| {
            Box::new(move |g| {
                let (qd, kd, vd, ad, bd, gd) = (qv.data(), kv.data(), vv.data(), av.data(), bv.data(), g.data());
                let mut dq = vec![0.0; qd.len()];
                let mut dk = vec![0.0; kd.len()];
                let mut dv = vec![0.0; vd.len()];
                let mut da = vec![0.0; ad.len()];
                let mut db = vec![0.0; bd.len()];
                let mut ds = vec![0.0; mat];
                let (mut u, mut e, mut w) = (vec![0.0; dh], vec![0.0; dh], vec![0.0; dh]);
                for seq in 0..n {
                    for h in 0..heads {
                        let base = (seq * heads + h) * (t_len + 1) * mat;
                        ds.fill(0.0);
                        for t in (0..t_len).rev() {
                            let tok = (seq * t_len + t) * width + h * dh;
                            let gi = (seq * t_len + t) * heads + h;
                            let (kh, vh, qh, goh) = (&kd[tok..][..dh], &vd[tok..][..dh], &qd[tok..][..dh], &gd[tok..][..dh]);
                            let (a, b) = (ad[gi], bd[gi]);
                            let sp = &states[base + t * mat..][..mat];
                            let st = &states[base + (t + 1) * mat..][..mat];
                            for i in 0..dh {
                                let mut acc = 0.0;
                                for j in 0..dh {
                                    ds[i * dh + j] += qh[i] * goh[j];
                                    acc += st[i * dh + j] * goh[j];
                                }
                                dq[tok + i] = acc;
                            }
                            u.fill(0.0);
                            e.fill(0.0);
                            for i in 0..dh {
                                for j in 0..dh {
                                    u[j] += kh[i] * sp[i * dh + j];
                                    e[j] += kh[i] * ds[i * dh + j];
                                }
                            }
                            for j in 0..dh {
                                w[j] = vh[j] - a * u[j];
                                dv[tok + j] = b * e[j];
                            }
                            db[gi] = dot(&e, &w);
                            let frob: f64 = ds.iter().zip(sp).map(|(x, y)| x * y).sum();
                            da[gi] = frob - b * dot(&e, &u);
                            for i in 0..dh {
                                let row_ds = &ds[i * dh..][..dh];
                                let row_sp = &sp[i * dh..][..dh];
                                dk[tok + i] = b * dot(row_ds, &w) - a * b * dot(row_sp, &e);
                            }
                            for i in 0..dh {
                                let bk = b * kh[i];
                                for j in 0..dh {
                                    let x = &mut ds[i * dh + j];
                                    *x = a * (*x - bk * e[j]);
                                }
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::new(&shape, dq).unwrap()),
                    Some(Tensor::new(&shape, dk).unwrap()),
                    Some(Tensor::new(&shape, dv).unwrap()),
                    Some(Tensor::new(&gate_shape, da).unwrap()),
                    Some(Tensor::new(&gate_shape, db).unwrap()),
                ]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    fn inputs(t_len: usize, heads: usize, dh: usize) -> [Vec<f64>; 5] {
        let w = heads * dh;
        let f = |s: f64| (0..t_len * w).map(move |i| ((i as f64 + s) * 0.37).sin()).collect::<Vec<_>>();
        let mut k = f(1.0);
        for chunk in k.chunks_mut(dh) {
            let n = dot(chunk, chunk).sqrt();
            chunk.iter_mut().for_each(|x| *x /= n);
        }
        let gate = |s: f64| (0..t_len * heads).map(move |i| 0.2 + 0.7 * ((i as f64 + s) * 0.91).sin().abs()).collect::<Vec<_>>();
        [f(0.0), k, f(2.0), gate(0.0), gate(3.0)]
    }

    #[test]
    fn three_forms_agree() {
        let (t_len, heads, dh) = (7, 2, 3);
        let [q, k, v, a, b] = inputs(t_len, heads, dh);
        let w = heads * dh;
        let par = delta_rule_parallel(&q, &k, &v, &a, &b, heads);
        let mut state = vec![0.0; heads * dh * dh];
        let mut rec = vec![0.0; t_len * w];
        for t in 0..t_len {
            delta_rule_step(
                &mut state,
                &q[t * w..][..w],
                &k[t * w..][..w],
                &v[t * w..][..w],
                &a[t * heads..][..heads],
                &b[t * heads..][..heads],
                &mut rec[t * w..][..w],
            );
        }
        let tape = Tape::no_grad();
        let c = |x: &Vec<f64>, last| tape.constant(Tensor::new(&[1, t_len, last], x.clone()).unwrap());
        let scan = Var::gated_delta_rule(&c(&q, w), &c(&k, w), &c(&v, w), &c(&a, heads), &c(&b, heads), heads).unwrap();
        for i in 0..rec.len() {
            assert!((rec[i] - par[i]).abs() < 1e-12, "{i}: {} vs {}", rec[i], par[i]);
            assert!((rec[i] - scan.value().data()[i]).abs() < 1e-12);
        }
        // a single token from a zero state takes the same arithmetic path
        let mut state = vec![0.0; heads * dh * dh];
        let mut one = vec![0.0; w];
        delta_rule_step(&mut state, &q[..w], &k[..w], &v[..w], &a[..heads], &b[..heads], &mut one);
        assert_eq!(one, delta_rule_parallel(&q[..w], &k[..w], &v[..w], &a[..heads], &b[..heads], heads));
    }
}
