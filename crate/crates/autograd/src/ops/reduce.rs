use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t, F: Scalar> Var<'t, F> {
    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Result<Var<'t, F>> {
        let n = self.value().numel();
        let total: F = self.data().iter().copied().sum();
        self.tape().record("sum", Tensor::scalar(total), &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self) -> Result<Var<'t, F>> {
        let n = self.value().numel();
        if n == 0 {
            return Err(TensorError::arg("mean", "empty tensor"));
        }
        let inv = F::one() / F::lit(n as f64);
        let total: F = self.data().iter().copied().sum();
        self.tape().record("mean", Tensor::scalar(total * inv), &[self], move |g, _| vec![Some(vec![g[0] * inv; n])])
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t, F>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(TensorError::arg("mean_axis", format!("axis {axis} invalid for {shape:?}")));
        }
        let (outer, extent, inner) = split_axis(&shape, axis);
        let inv = F::one() / F::lit(extent as f64);
        let x = self.data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &x[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        self.tape().record("mean_axis", Tensor::new(out_shape, out)?, &[self], move |g, _| {
            let mut dx = vec![F::zero(); outer * extent * inner];
            for o in 0..outer {
                let gs = &g[o * inner..(o + 1) * inner];
                for e in 0..extent {
                    dx[(o * extent + e) * inner..(o * extent + e + 1) * inner]
                        .iter_mut()
                        .zip(gs)
                        .for_each(|(d, &g)| *d = g * inv);
                }
            }
            vec![Some(dx)]
        })
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&self) -> Result<Var<'t, F>> {
        let shape = self.shape().to_vec();
        let n = *shape.last().ok_or_else(|| TensorError::arg("softmax", "scalar input"))?;
        if n == 0 {
            return Err(TensorError::arg("softmax", "empty last axis"));
        }
        let mut y = self.data().to_vec();
        for row in y.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        let y = std::sync::Arc::new(Tensor::new(shape, y)?);
        let saved = y.clone();
        self.tape().record("softmax", y, &[self], move |g, _| {
            let mut dx = vec![F::zero(); g.len()];
            for ((d, gr), yr) in dx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(saved.data().chunks_exact(n)) {
                let dot: F = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                for ((d, &g), &y) in d.iter_mut().zip(gr).zip(yr) {
                    *d = y * (g - dot);
                }
            }
            vec![Some(dx)]
        })
    }

    /// Layer normalization over the last axis followed by a per-feature
    /// affine map.
    pub fn layernorm(&self, gamma: &Var<'t, F>, beta: &Var<'t, F>, eps: F) -> Result<Var<'t, F>> {
        let shape = self.shape().to_vec();
        let d = *shape.last().ok_or_else(|| TensorError::arg("layernorm", "scalar input"))?;
        if d == 0 || gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::dim(
                "layernorm",
                format!("input {shape:?}, gamma {:?}, beta {:?}", gamma.shape(), beta.shape()),
            ));
        }
        if eps <= F::zero() {
            return Err(TensorError::arg("layernorm", "eps must be positive"));
        }
        let rows = self.value().numel() / d;
        let inv_d = F::one() / F::lit(d as f64);
        let mut xhat = vec![F::zero(); rows * d];
        let mut inv_std = vec![F::zero(); rows];
        for r in 0..rows {
            let x = &self.data()[r * d..(r + 1) * d];
            let mean = x.iter().copied().sum::<F>() * inv_d;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let is = F::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for (h, &v) in xhat[r * d..(r + 1) * d].iter_mut().zip(x) {
                *h = (v - mean) * is;
            }
        }
        let (gv, bv) = (gamma.data(), beta.data());
        let out: Vec<F> = xhat
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(gv).zip(bv).map(|((&h, &g), &b)| h * g + b).collect::<Vec<_>>())
            .collect();
        let gamma_saved = gamma.shared_value();
        self.tape().record("layernorm", Tensor::new(shape, out)?, &[self, gamma, beta], move |g, mask| {
            let gam = gamma_saved.data();
            let dx = mask[0].then(|| {
                let mut dx = vec![F::zero(); rows * d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut mean_gg = F::zero();
                    let mut mean_ggh = F::zero();
                    for j in 0..d {
                        let gg = gr[j] * gam[j];
                        mean_gg += gg;
                        mean_ggh += gg * hr[j];
                    }
                    mean_gg *= inv_d;
                    mean_ggh *= inv_d;
                    for j in 0..d {
                        dx[r * d + j] = inv_std[r] * (gr[j] * gam[j] - mean_gg - hr[j] * mean_ggh);
                    }
                }
                dx
            });
            let dgamma = mask[1].then(|| {
                let mut dg = vec![F::zero(); d];
                for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                    for j in 0..d {
                        dg[j] += gr[j] * hr[j];
                    }
                }
                dg
            });
            let dbeta = mask[2].then(|| {
                let mut db = vec![F::zero(); d];
                for gr in g.chunks_exact(d) {
                    db.iter_mut().zip(gr).for_each(|(b, &g)| *b += g);
                }
                db
            });
            vec![dx, dgamma, dbeta]
        })
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
