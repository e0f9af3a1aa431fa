use crate::error::{Result, TensorError};
use crate::kernels::{mm_nn, mm_nt, mm_tn};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Geometry of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: usize,
    /// Pads `k − 1` zeros on the left only (and ignores `padding`).
    pub causal: bool,
}

impl Conv1dSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Conv1dSpec { stride, padding, causal: false }
    }

    pub fn causal() -> Self {
        Conv1dSpec { stride: 1, padding: 0, causal: true }
    }

    fn pads(&self, k: usize) -> (usize, usize) {
        if self.causal {
            (k - 1, 0)
        } else {
            (self.padding, self.padding)
        }
    }

    /// Output length for an input of length `t` and kernel size `k`.
    pub fn output_len(&self, t: usize, k: usize) -> Option<usize> {
        let (l, r) = self.pads(k);
        let padded = t + l + r;
        (padded >= k && self.stride > 0 && k > 0).then(|| (padded - k) / self.stride + 1)
    }
}

impl<'t, F: Scalar> Var<'t, F> {
    /// Cross-correlation of a channel-major signal.
    ///
    /// `self` is `[C_in×T]` or `[B×C_in×T]`; `kernel` is `[C_out×C_in×k]`.
    pub fn conv1d(&self, kernel: &Var<'t, F>, spec: Conv1dSpec) -> Result<Var<'t, F>> {
        let xs = self.shape().to_vec();
        let ks = kernel.shape().to_vec();
        let batched = xs.len() == 3;
        if !(xs.len() == 2 || batched) || ks.len() != 3 {
            return Err(TensorError::dim("conv1d", format!("input {xs:?}, kernel {ks:?}")));
        }
        let (b, cin, t) = if batched { (xs[0], xs[1], xs[2]) } else { (1, xs[0], xs[1]) };
        let (cout, kcin, k) = (ks[0], ks[1], ks[2]);
        if kcin != cin {
            return Err(TensorError::dim("conv1d", format!("kernel expects {kcin} input channels, input has {cin}")));
        }
        let tout = spec.output_len(t, k).ok_or_else(|| {
            TensorError::dim("conv1d", format!("window {k} larger than padded input of length {t} ({spec:?})"))
        })?;
        let (lpad, _) = spec.pads(k);
        let stride = spec.stride;
        let ck = cin * k;

        // Column matrix per batch: row (ci, tap), column t.
        let im2col = move |x: &[F]| -> Vec<F> {
            let mut cols = vec![F::zero(); ck * tout];
            for ci in 0..cin {
                for tap in 0..k {
                    let row = &mut cols[(ci * k + tap) * tout..(ci * k + tap + 1) * tout];
                    for (to, slot) in row.iter_mut().enumerate() {
                        let pos = (to * stride + tap) as isize - lpad as isize;
                        if pos >= 0 && (pos as usize) < t {
                            *slot = x[ci * t + pos as usize];
                        }
                    }
                }
            }
            cols
        };

        let mut out = vec![F::zero(); b * cout * tout];
        let mut all_cols = Vec::with_capacity(b);
        for bi in 0..b {
            let cols = im2col(&self.data()[bi * cin * t..(bi + 1) * cin * t]);
            mm_nn(kernel.data(), &cols, cout, ck, tout, &mut out[bi * cout * tout..(bi + 1) * cout * tout]);
            all_cols.push(cols);
        }
        self.tape().add_macs((b * cout * ck * tout) as u64);
        let out_shape = if batched { vec![b, cout, tout] } else { vec![cout, tout] };
        let w = kernel.shared_value();
        self.tape().record("conv1d", Tensor::new(out_shape, out)?, &[self, kernel], move |g, mask| {
            let mut dx = mask[0].then(|| vec![F::zero(); b * cin * t]);
            let mut dw = mask[1].then(|| vec![F::zero(); cout * ck]);
            for bi in 0..b {
                let gb = &g[bi * cout * tout..(bi + 1) * cout * tout];
                if let Some(dw) = dw.as_mut() {
                    mm_nt(gb, &all_cols[bi], cout, tout, ck, dw);
                }
                if let Some(dx) = dx.as_mut() {
                    let mut dcols = vec![F::zero(); ck * tout];
                    mm_tn(w.data(), gb, ck, cout, tout, &mut dcols);
                    let dxb = &mut dx[bi * cin * t..(bi + 1) * cin * t];
                    for ci in 0..cin {
                        for tap in 0..k {
                            let row = &dcols[(ci * k + tap) * tout..(ci * k + tap + 1) * tout];
                            for (to, &v) in row.iter().enumerate() {
                                let pos = (to * stride + tap) as isize - lpad as isize;
                                if pos >= 0 && (pos as usize) < t {
                                    dxb[ci * t + pos as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
            vec![dx, dw]
        })
    }

    /// Per-channel causal convolution along the token axis.
    ///
    /// `self` is token-major `[..×T×C]`, `kernel` is `[C×k]`; output token `t`
    /// sees inputs `t−k+1 ..= t` (zeros before the start).
    pub fn causal_depthwise_conv1d(&self, kernel: &Var<'t, F>) -> Result<Var<'t, F>> {
        let xs = self.shape().to_vec();
        let ks = kernel.shape().to_vec();
        if xs.len() < 2 || ks.len() != 2 || ks[0] != xs[xs.len() - 1] || ks[1] == 0 {
            return Err(TensorError::dim("causal_depthwise_conv1d", format!("input {xs:?}, kernel {ks:?}")));
        }
        let c = ks[0];
        let k = ks[1];
        let t = xs[xs.len() - 2];
        let b = self.value().numel() / (t * c).max(1);
        let x = self.data();
        let w = kernel.data();
        let mut out = vec![F::zero(); x.len()];
        for bi in 0..b {
            for to in 0..t {
                let orow = &mut out[(bi * t + to) * c..(bi * t + to + 1) * c];
                for j in 0..k {
                    let Some(src) = (to + j).checked_sub(k - 1) else { continue };
                    let xrow = &x[(bi * t + src) * c..(bi * t + src + 1) * c];
                    for ch in 0..c {
                        orow[ch] += w[ch * k + j] * xrow[ch];
                    }
                }
            }
        }
        self.tape().add_macs((b * t * c * k) as u64);
        let (xv, wv) = (self.shared_value(), kernel.shared_value());
        self.tape().record("causal_depthwise_conv1d", Tensor::new(xs, out)?, &[self, kernel], move |g, mask| {
            let x = xv.data();
            let w = wv.data();
            let mut dx = mask[0].then(|| vec![F::zero(); x.len()]);
            let mut dw = mask[1].then(|| vec![F::zero(); c * k]);
            for bi in 0..b {
                for to in 0..t {
                    let grow = &g[(bi * t + to) * c..(bi * t + to + 1) * c];
                    for j in 0..k {
                        let Some(src) = (to + j).checked_sub(k - 1) else { continue };
                        let base = (bi * t + src) * c;
                        if let Some(dx) = dx.as_mut() {
                            for ch in 0..c {
                                dx[base + ch] += grow[ch] * w[ch * k + j];
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            for ch in 0..c {
                                dw[ch * k + j] += grow[ch] * x[base + ch];
                            }
                        }
                    }
                }
            }
            vec![dx, dw]
        })
    }
}
