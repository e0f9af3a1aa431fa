//! Input-dependent diagonal state-space recurrence.
//!
//! For one channel `e` and state `n`:
//! `h_t = Ā_t h_{t−1} + B̄_t x_t`, `y_t = Σ_n C_t[n] h_t[n]`, with
//! `Ā = exp(ΔA)` and `B̄ = (ΔA)⁻¹(exp(ΔA) − 1)·ΔB`.

use mou_autograd::{Result, Scalar, Tensor, TensorError, Var};

/// Below this `|ΔA|` the zero-order-hold factor is replaced by its limit 1.
pub const LIMIT_THRESHOLD: f64 = 1e-6;

/// `φ(z) = (eᶻ − 1)/z`.
fn phi<F: Scalar>(z: F) -> F {
    if z.abs() < F::lit(LIMIT_THRESHOLD) {
        F::one()
    } else {
        z.exp_m1() / z
    }
}

/// `φ'(z) = (eᶻ − φ(z))/z`, by series near zero where that cancels.
fn dphi<F: Scalar>(z: F) -> F {
    if z.abs() < F::lit(LIMIT_THRESHOLD) {
        F::lit(0.5)
    } else if z.abs() < F::lit(1e-2) {
        F::lit(0.5) + z * (F::lit(1.0 / 3.0) + z * (F::lit(1.0 / 8.0) + z * F::lit(1.0 / 30.0)))
    } else {
        (z.exp() - phi(z)) / z
    }
}

/// Zero-order-hold discretisation of one (state, step) pair: `(Ā, B̄)`.
pub fn discretize<F: Scalar>(delta: F, a: F, b: F) -> (F, F) {
    let z = delta * a;
    (z.exp(), phi(z) * delta * b)
}

struct Dims {
    groups: usize,
    n: usize,
    e: usize,
    s: usize,
}

fn check_dims<F: Scalar>(x: &Tensor<F>, delta: &Tensor<F>, a: &Tensor<F>, b: &Tensor<F>, c: &Tensor<F>) -> Result<Dims> {
    let xs = x.shape();
    let bad = || {
        TensorError::dim(
            "selective_scan",
            format!("x {xs:?}, delta {:?}, A {:?}, B {:?}, C {:?}", delta.shape(), a.shape(), b.shape(), c.shape()),
        )
    };
    if xs.len() < 2 || delta.shape() != xs || a.ndim() != 2 {
        return Err(bad());
    }
    let (n, e) = (xs[xs.len() - 2], xs[xs.len() - 1]);
    let s = a.shape()[1];
    let mut bshape = xs.to_vec();
    *bshape.last_mut().unwrap() = s;
    if a.shape()[0] != e || b.shape() != bshape || c.shape() != bshape || s == 0 {
        return Err(bad());
    }
    Ok(Dims { groups: x.numel() / (n * e).max(1), n, e, s })
}

/// Runs the recurrence from `h_0 = 0` and returns `y` (shape of `x`).
///
/// `x` and `delta` are token-major `[..×N×E]`, `a` is `[E×S]`, `b` and `c`
/// are `[..×N×S]`. Gradients flow to all five inputs; every hidden state is
/// kept for the backward sweep.
pub fn selective_scan<'t, F: Scalar>(
    x: &Var<'t, F>,
    delta: &Var<'t, F>,
    a: &Var<'t, F>,
    b: &Var<'t, F>,
    c: &Var<'t, F>,
) -> Result<Var<'t, F>> {
    let Dims { groups, n, e, s } = check_dims(x.value(), delta.value(), a.value(), b.value(), c.value())?;
    let (xv, dv, av, bv, cv) = (x.shared_value(), delta.shared_value(), a.shared_value(), b.shared_value(), c.shared_value());
    let mut y = vec![F::zero(); groups * n * e];
    // hs[(g, t, e, s)]
    let mut hs = vec![F::zero(); groups * n * e * s];
    {
        let (xd, dd, ad, bd, cd) = (xv.data(), dv.data(), av.data(), bv.data(), cv.data());
        for g in 0..groups {
            for t in 0..n {
                let bt = &bd[(g * n + t) * s..(g * n + t + 1) * s];
                let ct = &cd[(g * n + t) * s..(g * n + t + 1) * s];
                for ch in 0..e {
                    let i = (g * n + t) * e + ch;
                    let (d, xi) = (dd[i], xd[i]);
                    let base = i * s;
                    let mut acc = F::zero();
                    for st in 0..s {
                        let (abar, bbar) = discretize(d, ad[ch * s + st], bt[st]);
                        let prev = if t == 0 { F::zero() } else { hs[base - e * s + st] };
                        let h = abar * prev + bbar * xi;
                        hs[base + st] = h;
                        acc += ct[st] * h;
                    }
                    y[i] = acc;
                }
            }
        }
    }
    x.tape().add_macs((3 * groups * n * e * s) as u64);

    let out = Tensor::new(x.shape().to_vec(), y)?;
    x.tape().record("selective_scan", out, &[x, delta, a, b, c], move |gy, _mask| {
        let (xd, dd, ad, bd, cd) = (xv.data(), dv.data(), av.data(), bv.data(), cv.data());
        let mut dx = vec![F::zero(); groups * n * e];
        let mut ddelta = vec![F::zero(); groups * n * e];
        let mut da = vec![F::zero(); e * s];
        let mut db = vec![F::zero(); groups * n * s];
        let mut dc = vec![F::zero(); groups * n * s];
        let mut carry = vec![F::zero(); e * s];
        for g in 0..groups {
            carry.iter_mut().for_each(|v| *v = F::zero());
            for t in (0..n).rev() {
                let row = (g * n + t) * s;
                for ch in 0..e {
                    let i = (g * n + t) * e + ch;
                    let (d, xi, gyi) = (dd[i], xd[i], gy[i]);
                    let base = i * s;
                    let (mut gx, mut gd) = (F::zero(), F::zero());
                    for st in 0..s {
                        let av_ = ad[ch * s + st];
                        let bt = bd[row + st];
                        let z = d * av_;
                        let abar = z.exp();
                        let ph = phi(z);
                        let bbar = ph * d * bt;
                        let h = hs[base + st];
                        let prev = if t == 0 { F::zero() } else { hs[base - e * s + st] };
                        let k = ch * s + st;
                        // Total sensitivity of the loss to h_t.
                        let gh = carry[k] + gyi * cd[row + st];
                        dc[row + st] += gyi * h;
                        let g_abar = gh * prev;
                        let g_bbar = gh * xi;
                        gx += gh * bbar;
                        let gz = g_abar * abar + g_bbar * d * bt * dphi(z);
                        gd += g_bbar * ph * bt + gz * av_;
                        da[k] += gz * d;
                        db[row + st] += g_bbar * ph * d;
                        carry[k] = gh * abar;
                    }
                    dx[i] = gx;
                    ddelta[i] = gd;
                }
            }
        }
        vec![Some(dx), Some(ddelta), Some(da), Some(db), Some(dc)]
    })
}

/// Materialises the recurrence as a causal token-mixing matrix for one
/// channel: `α[t, s] = C_t · (∏_{r=s+1..t} Ā_r) · B̄_s` summed over states,
/// so that `y[:, channel] = α · x[:, channel]`.
///
/// `delta` is `[N×E]`, `a` is `[E×S]`, `b` and `c` are `[N×S]`.
pub fn attention_matrix<F: Scalar>(
    delta: &Tensor<F>,
    a: &Tensor<F>,
    b: &Tensor<F>,
    c: &Tensor<F>,
    channel: usize,
) -> Result<Tensor<F>> {
    let Dims { groups, n, e, s } = check_dims(delta, delta, a, b, c)?;
    if groups != 1 {
        return Err(TensorError::dim("ssm_attention_matrix", format!("expects one sequence, got {:?}", delta.shape())));
    }
    if channel >= e {
        return Err(TensorError::arg("ssm_attention_matrix", format!("channel {channel} out of range for {e} channels")));
    }
    let (dd, ad, bd, cd) = (delta.data(), a.data(), b.data(), c.data());
    let abar = |t: usize, st: usize| (dd[t * e + channel] * ad[channel * s + st]).exp();
    let mut alpha = vec![F::zero(); n * n];
    let mut prod = vec![F::zero(); s];
    for src in 0..n {
        for (st, p) in prod.iter_mut().enumerate() {
            *p = discretize(dd[src * e + channel], ad[channel * s + st], bd[src * s + st]).1;
        }
        for t in src..n {
            if t > src {
                for (st, p) in prod.iter_mut().enumerate() {
                    *p *= abar(t, st);
                }
            }
            alpha[t * n + src] = prod.iter().zip(&cd[t * s..(t + 1) * s]).map(|(&p, &c)| p * c).sum();
        }
    }
    Tensor::new(vec![n, n], alpha)
}
