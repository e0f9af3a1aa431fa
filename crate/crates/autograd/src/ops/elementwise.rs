use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Elementwise operations exposed through [`Var::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Exp,
    Softplus,
    Silu,
    Relu,
    Sigmoid,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Add | Elementwise::Mul)
    }
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus<F: Scalar>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn silu<F: Scalar>(x: F) -> F {
    x * sigmoid(x)
}

/// How the smaller operand of a binary op repeats over the larger one.
#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    /// Right operand repeats over the leading extents of the left one.
    Right,
    Left,
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Broadcast)> {
    if a == b {
        Ok((a.to_vec(), Broadcast::Same))
    } else if is_suffix(b, a) {
        Ok((a.to_vec(), Broadcast::Right))
    } else if is_suffix(a, b) {
        Ok((b.to_vec(), Broadcast::Left))
    } else {
        Err(TensorError::dim(op, format!("cannot broadcast {a:?} with {b:?}")))
    }
}

/// Sums a full-size gradient down to a repeated operand of `n` elements.
fn reduce_repeats<F: Scalar>(grad: &[F], n: usize) -> Vec<F> {
    if grad.len() == n {
        return grad.to_vec();
    }
    let mut out = vec![F::zero(); n];
    for chunk in grad.chunks_exact(n) {
        out.iter_mut().zip(chunk).for_each(|(o, &g)| *o += g);
    }
    out
}

fn zip_broadcast<F: Scalar>(a: &[F], b: &[F], mode: Broadcast, f: impl Fn(F, F) -> F) -> Vec<F> {
    match mode {
        Broadcast::Same => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Right => a
            .chunks_exact(b.len())
            .flat_map(|chunk| chunk.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>())
            .collect(),
        Broadcast::Left => b
            .chunks_exact(a.len())
            .flat_map(|chunk| a.iter().zip(chunk).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>())
            .collect(),
    }
}

/// Expands the smaller operand to the output length.
fn tile<F: Scalar>(small: &[F], total: usize) -> Vec<F> {
    if small.len() == total {
        return small.to_vec();
    }
    small.iter().copied().cycle().take(total).collect()
}

impl<'t, F: Scalar> Var<'t, F> {
    fn unary(&self, op: &'static str, f: impl Fn(F) -> F, df: impl Fn(F, F) -> F + 'static) -> Result<Var<'t, F>> {
        let x = self.shared_value();
        let y: Arc<Tensor<F>> = Arc::new(x.map(f));
        let y_saved = y.clone();
        self.tape().record(op, y, &[self], move |g, _| {
            let grad = g
                .iter()
                .zip(x.data())
                .zip(y_saved.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(grad)]
        })
    }

    pub fn exp(&self) -> Result<Var<'t, F>> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn softplus(&self) -> Result<Var<'t, F>> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    pub fn silu(&self) -> Result<Var<'t, F>> {
        self.unary("silu", silu, |x, _| {
            let s = sigmoid(x);
            s * (F::one() + x * (F::one() - s))
        })
    }

    pub fn relu(&self) -> Result<Var<'t, F>> {
        self.unary("relu", |x| x.max(F::zero()), |x, _| if x > F::zero() { F::one() } else { F::zero() })
    }

    pub fn sigmoid(&self) -> Result<Var<'t, F>> {
        self.unary("sigmoid", sigmoid, |_, y| y * (F::one() - y))
    }

    pub fn neg(&self) -> Result<Var<'t, F>> {
        self.unary("neg", |x| -x, |_, _| -F::one())
    }

    pub fn square(&self) -> Result<Var<'t, F>> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn scale(&self, c: F) -> Result<Var<'t, F>> {
        self.unary("scale", move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: F) -> Result<Var<'t, F>> {
        self.unary("add_scalar", move |x| x + c, |_, _| F::one())
    }

    pub fn add(&self, other: &Var<'t, F>) -> Result<Var<'t, F>> {
        let (shape, mode) = broadcast("add", self.shape(), other.shape())?;
        let value = Tensor::new(shape, zip_broadcast(self.data(), other.data(), mode, |a, b| a + b))?;
        let (na, nb) = (self.value().numel(), other.value().numel());
        self.tape().record("add", value, &[self, other], move |g, mask| {
            vec![
                mask[0].then(|| reduce_repeats(g, na)),
                mask[1].then(|| reduce_repeats(g, nb)),
            ]
        })
    }

    pub fn sub(&self, other: &Var<'t, F>) -> Result<Var<'t, F>> {
        let (shape, mode) = broadcast("sub", self.shape(), other.shape())?;
        let value = Tensor::new(shape, zip_broadcast(self.data(), other.data(), mode, |a, b| a - b))?;
        let (na, nb) = (self.value().numel(), other.value().numel());
        self.tape().record("sub", value, &[self, other], move |g, mask| {
            vec![
                mask[0].then(|| reduce_repeats(g, na)),
                mask[1].then(|| reduce_repeats(g, nb).into_iter().map(|v| -v).collect()),
            ]
        })
    }

    pub fn mul(&self, other: &Var<'t, F>) -> Result<Var<'t, F>> {
        let (shape, mode) = broadcast("mul", self.shape(), other.shape())?;
        let value = Tensor::new(shape, zip_broadcast(self.data(), other.data(), mode, |a, b| a * b))?;
        let (a, b) = (self.shared_value(), other.shared_value());
        self.tape().record("mul", value, &[self, other], move |g, mask| {
            let total = g.len();
            let ga = mask[0].then(|| {
                let b_full = tile(b.data(), total);
                let full: Vec<F> = g.iter().zip(&b_full).map(|(&g, &b)| g * b).collect();
                reduce_repeats(&full, a.numel())
            });
            let gb = mask[1].then(|| {
                let a_full = tile(a.data(), total);
                let full: Vec<F> = g.iter().zip(&a_full).map(|(&g, &a)| g * a).collect();
                reduce_repeats(&full, b.numel())
            });
            vec![ga, gb]
        })
    }

    /// Dispatches one of the [`Elementwise`] operations.
    pub fn elementwise(&self, op: Elementwise, other: Option<&Var<'t, F>>) -> Result<Var<'t, F>> {
        match (op, other) {
            (Elementwise::Add, Some(b)) => self.add(b),
            (Elementwise::Mul, Some(b)) => self.mul(b),
            (Elementwise::Exp, None) => self.exp(),
            (Elementwise::Softplus, None) => self.softplus(),
            (Elementwise::Silu, None) => self.silu(),
            (Elementwise::Relu, None) => self.relu(),
            (Elementwise::Sigmoid, None) => self.sigmoid(),
            (op, _) => Err(TensorError::arg(
                "elementwise",
                format!("{op:?} expects {} operand(s)", if op.is_binary() { 2 } else { 1 }),
            )),
        }
    }
}
