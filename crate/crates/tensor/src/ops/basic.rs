use std::rc::Rc;

use crate::error::{shape_err, TensorError};
use crate::tape::Var;
use crate::tensor::{gemm, Tensor};

/// `(outer, n, inner)` split of `shape` around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), TensorError> {
    if axis >= shape.len() {
        return Err(shape_err(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok(())
}

/// `b` may match `a` exactly or only in its trailing axes; the result has
/// `a`'s shape and `b` is repeated over the leading ones.
fn check_suffix(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return Err(shape_err(op, format!("{b:?} is not a suffix of {a:?}")));
    }
    Ok(())
}

/// Sums `g` (shape of `a`) down to the trailing block of size `m`.
fn reduce_leading(g: &Tensor, shape: &[usize]) -> Tensor {
    let m: usize = shape.iter().product();
    let mut out = vec![0.0; m];
    for chunk in g.data().chunks(m.max(1)) {
        for (o, x) in out.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    Tensor::new(shape, out).expect("reduced shape")
}

fn unary(
    x: &Var,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    // derivative in terms of (input, output)
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Var, TensorError> {
    let out = x.value().map(f);
    let xin = x.value_rc();
    let yout = Rc::new(out.clone());
    x.tape().record(op, out, &[x], move |_| {
        Box::new(move |g| {
            let d = Tensor::from_fn(g.shape(), |i| {
                g.data()[i] * df(xin.data()[i], yout.data()[i])
            });
            vec![Some(d)]
        })
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Var {
    /// `x[.., K] · w[K, N] -> [.., N]`.
    pub fn matmul(&self, w: &Var) -> Result<Var, TensorError> {
        let (xs, ws) = (self.shape(), w.shape());
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[0] {
            return Err(shape_err("matmul", format!("{xs:?} x {ws:?}")));
        }
        let (k, n) = (ws[0], ws[1]);
        let m = self.value().numel() / k.max(1);
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value().data(), false, w.value().data(), false, &mut out, false);
        let out = Tensor::new(&out_shape, out)?;
        let (xv, wv) = (self.value_rc(), w.value_rc());
        let xshape = xs.to_vec();
        self.tape().record("matmul", out, &[self, w], move |needs| {
            Box::new(move |g| {
                let dx = needs[0].then(|| {
                    let mut dx = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, wv.data(), true, &mut dx, false);
                    Tensor::new(&xshape, dx).unwrap()
                });
                let dw = needs[1].then(|| {
                    let mut dw = vec![0.0; k * n];
                    gemm(k, m, n, xv.data(), true, g.data(), false, &mut dw, false);
                    Tensor::new(&[k, n], dw).unwrap()
                });
                vec![dx, dw]
            })
        })
    }

    /// `x · w (+ b)`.
    pub fn linear(&self, w: &Var, b: Option<&Var>) -> Result<Var, TensorError> {
        let y = self.matmul(w)?;
        match b {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }

    /// Elementwise sum; either operand may be a trailing-axes suffix of the other.
    pub fn add(&self, other: &Var) -> Result<Var, TensorError> {
        if other.shape().len() > self.shape().len() {
            return other.add(self);
        }
        check_suffix("add", self.shape(), other.shape())?;
        let m = other.value().numel().max(1);
        let b = other.value().data();
        let out = Tensor::from_fn(self.shape(), |i| self.value().data()[i] + b[i % m]);
        let bshape = other.shape().to_vec();
        self.tape().record("add", out, &[self, other], move |needs| {
            Box::new(move |g| {
                vec![
                    needs[0].then(|| g.clone()),
                    needs[1].then(|| reduce_leading(g, &bshape)),
                ]
            })
        })
    }

    /// `self - other`; `other` may be a trailing-axes suffix of `self`.
    pub fn sub(&self, other: &Var) -> Result<Var, TensorError> {
        check_suffix("sub", self.shape(), other.shape())?;
        let m = other.value().numel().max(1);
        let b = other.value().data();
        let out = Tensor::from_fn(self.shape(), |i| self.value().data()[i] - b[i % m]);
        let bshape = other.shape().to_vec();
        self.tape().record("sub", out, &[self, other], move |needs| {
            Box::new(move |g| {
                vec![
                    needs[0].then(|| g.clone()),
                    needs[1].then(|| {
                        let mut r = reduce_leading(g, &bshape);
                        r.scale_assign(-1.0);
                        r
                    }),
                ]
            })
        })
    }

    /// Elementwise product; either operand may be a trailing-axes suffix of the other.
    pub fn mul(&self, other: &Var) -> Result<Var, TensorError> {
        if other.shape().len() > self.shape().len() {
            return other.mul(self);
        }
        check_suffix("mul", self.shape(), other.shape())?;
        let m = other.value().numel().max(1);
        let (av, bv) = (self.value_rc(), other.value_rc());
        let out = Tensor::from_fn(self.shape(), |i| av.data()[i] * bv.data()[i % m]);
        let bshape = other.shape().to_vec();
        self.tape().record("mul", out, &[self, other], move |needs| {
            Box::new(move |g| {
                let da = needs[0]
                    .then(|| Tensor::from_fn(g.shape(), |i| g.data()[i] * bv.data()[i % m]));
                let db = needs[1].then(|| {
                    let prod = Tensor::from_fn(g.shape(), |i| g.data()[i] * av.data()[i]);
                    reduce_leading(&prod, &bshape)
                });
                vec![da, db]
            })
        })
    }

    pub fn scale(&self, c: f64) -> Result<Var, TensorError> {
        unary(self, "scale", |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var, TensorError> {
        unary(self, "add_scalar", |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Result<Var, TensorError> {
        self.scale(-1.0)
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Result<Var, TensorError> {
        unary(self, "one_minus", |x| 1.0 - x, |_, _| -1.0)
    }

    pub fn tanh(&self) -> Result<Var, TensorError> {
        unary(self, "tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Result<Var, TensorError> {
        unary(self, "sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&self) -> Result<Var, TensorError> {
        unary(self, "exp", f64::exp, |_, y| y)
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&self) -> Result<Var, TensorError> {
        unary(
            self,
            "silu",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn sum_all(&self) -> Result<Var, TensorError> {
        let out = Tensor::scalar(self.value().sum());
        let shape = self.shape().to_vec();
        self.tape().record("sum_all", out, &[self], move |_| {
            Box::new(move |g| vec![Some(Tensor::full(&shape, g.item()))])
        })
    }

    pub fn mean_all(&self) -> Result<Var, TensorError> {
        let n = self.value().numel().max(1) as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    /// Sum over `axis`, which is removed from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Var, TensorError> {
        check_axis("sum_axis", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let x = self.value().data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..n {
                let src = &x[(o * n + a) * inner..][..inner];
                for (d, s) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        self.tape().record("sum_axis", out, &[self], move |_| {
            Box::new(move |g| {
                let d = Tensor::from_fn(&shape, |i| {
                    let o = i / (n * inner);
                    let r = i % inner;
                    g.data()[o * inner + r]
                });
                vec![Some(d)]
            })
        })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var, TensorError> {
        check_axis("mean_axis", self.shape(), axis)?;
        let n = self.shape()[axis].max(1) as f64;
        self.sum_axis(axis)?.scale(1.0 / n)
    }

    /// Joins `parts` along `axis`; all other axes must agree.
    pub fn concat(parts: &[&Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        check_axis("concat", first.shape(), axis)?;
        let base = first.shape();
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            if s.len() != base.len()
                || s[..axis] != base[..axis]
                || s[axis + 1..] != base[axis + 1..]
            {
                return Err(shape_err("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            sizes.push(s[axis]);
        }
        let total: usize = sizes.iter().sum();
        let mut out_shape = base.to_vec();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &sz) in parts.iter().zip(&sizes) {
                out.extend_from_slice(&p.value().data()[o * sz * inner..][..sz * inner]);
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        first.tape().record("concat", out, parts, move |needs| {
            Box::new(move |g| {
                let mut grads: Vec<Vec<f64>> = sizes
                    .iter()
                    .map(|&sz| Vec::with_capacity(outer * sz * inner))
                    .collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (gr, &sz) in grads.iter_mut().zip(&sizes) {
                        gr.extend_from_slice(&g.data()[pos..pos + sz * inner]);
                        pos += sz * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(&shapes)
                    .zip(needs)
                    .map(|((gr, s), need)| need.then(|| Tensor::new(s, gr).unwrap()))
                    .collect()
            })
        })
    }

    /// `self[.., start..end, ..]` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        check_axis("slice", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        if start > end || end > shape[axis] {
            return Err(TensorError::Index {
                op: "slice",
                index: end,
                size: shape[axis],
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let w = end - start;
        let mut out = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            out.extend_from_slice(&self.value().data()[(o * n + start) * inner..][..w * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = w;
        let out = Tensor::new(&out_shape, out)?;
        self.tape().record("slice", out, &[self], move |_| {
            Box::new(move |g| {
                let mut d = Tensor::zeros(&shape);
                for o in 0..outer {
                    d.data_mut()[(o * n + start) * inner..][..w * inner]
                        .copy_from_slice(&g.data()[o * w * inner..][..w * inner]);
                }
                vec![Some(d)]
            })
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value().clone().reshape(shape)?;
        let old = self.shape().to_vec();
        self.tape().record("reshape", out, &[self], move |_| {
            Box::new(move |g| vec![Some(g.clone().reshape(&old).unwrap())])
        })
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape().to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(shape_err("permute", format!("{axes:?} for {shape:?}")));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let perm = permutation_index(&shape, axes);
        let x = self.value().data();
        let out = Tensor::from_fn(&out_shape, |i| x[perm[i]]);
        self.tape().record("permute", out, &[self], move |_| {
            Box::new(move |g| {
                let mut d = Tensor::zeros(&shape);
                for (i, &src) in perm.iter().enumerate() {
                    d.data_mut()[src] = g.data()[i];
                }
                vec![Some(d)]
            })
        })
    }

    /// Rows of a `[V, E]` table. Output shape is `prefix + [E]`.
    pub fn embedding(&self, indices: &[usize], prefix: &[usize]) -> Result<Var, TensorError> {
        let ts = self.shape();
        if ts.len() != 2 || prefix.iter().product::<usize>() != indices.len() {
            return Err(shape_err(
                "embedding",
                format!("table {ts:?}, {} indices for prefix {prefix:?}", indices.len()),
            ));
        }
        let (v, e) = (ts[0], ts[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(TensorError::Index {
                op: "embedding",
                index: bad,
                size: v,
            });
        }
        let table = self.value().data();
        let mut out = Vec::with_capacity(indices.len() * e);
        for &i in indices {
            out.extend_from_slice(&table[i * e..][..e]);
        }
        let mut shape = prefix.to_vec();
        shape.push(e);
        let out = Tensor::new(&shape, out)?;
        let idx = indices.to_vec();
        self.tape().record("embedding", out, &[self], move |_| {
            Box::new(move |g| {
                let mut d = Tensor::zeros(&[v, e]);
                for (r, &i) in idx.iter().enumerate() {
                    for (a, b) in d.data_mut()[i * e..][..e].iter_mut().zip(&g.data()[r * e..][..e]) {
                        *a += b;
                    }
                }
                vec![Some(d)]
            })
        })
    }

    /// Selects entries `indices` along `axis` (repeats allowed).
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Result<Var, TensorError> {
        check_axis("gather", self.shape(), axis)?;
        let shape = self.shape().to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::Index {
                op: "gather",
                index: bad,
                size: n,
            });
        }
        let x = self.value().data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                out.extend_from_slice(&x[(o * n + i) * inner..][..inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = indices.len();
        let out = Tensor::new(&out_shape, out)?;
        let idx = indices.to_vec();
        self.tape().record("gather", out, &[self], move |_| {
            Box::new(move |g| {
                let mut d = Tensor::zeros(&shape);
                let m = idx.len();
                for o in 0..outer {
                    for (r, &i) in idx.iter().enumerate() {
                        let src = &g.data()[(o * m + r) * inner..][..inner];
                        for (a, b) in d.data_mut()[(o * n + i) * inner..][..inner].iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
                vec![Some(d)]
            })
        })
    }
}

/// For each output position, the flat input position it reads.
fn permutation_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let r = shape.len();
    let mut in_strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n: usize = shape.iter().product();
    let mut idx = vec![0usize; r];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        perm.push(idx.iter().zip(axes).map(|(&i, &a)| i * in_strides[a]).sum());
        for ax in (0..r).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    perm
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let tape = Tape::new();
        let x = tape.var(Tensor::scalar(0.0));
        let y = x.tanh().unwrap();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.get(&x).unwrap().item(), 1.0);
    }

    #[test]
    fn permute_transposes() {
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let y = x.permute(&[1, 0]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.value().data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let tape = Tape::new();
        let a = tape.var(Tensor::zeros(&[4, 3]));
        let b = tape.var(Tensor::zeros(&[3]));
        let s = a.add(&b).unwrap().sum_all().unwrap();
        let g = tape.backward(&s).unwrap();
        assert_eq!(g.get(&b).unwrap().data(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn slice_out_of_range_is_an_error() {
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(x.slice(1, 2, 4).is_err());
        assert!(x.embedding(&[2], &[1]).is_err());
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let tape = Tape::no_grad();
        let a = tape.constant(Tensor::from_fn(&[2, 2], |i| i as f64));
        let b = tape.constant(Tensor::from_fn(&[2, 3], |i| 10.0 + i as f64));
        let c = crate::Var::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 5]);
        assert_eq!(c.slice(1, 2, 5).unwrap().value(), b.value());
    }
}
