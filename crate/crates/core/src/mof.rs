//! Patch embedding by a sparse mixture of linear sub-extractors, and the
//! alternative extractors used for ablation.

use mou_autograd::ops::softmax_in_place;
use mou_autograd::{topk_indices, Result, Scalar, Tensor, TensorError, Var};

use crate::params::{Bound, Linear, ParamBuilder, ParamId};

/// Per-token routing outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterDecision<F> {
    /// Selected experts, highest score first.
    pub indices: Vec<usize>,
    /// Convex weights aligned with `indices`.
    pub weights: Vec<F>,
    /// Raw scores for all experts.
    pub scores: Vec<F>,
}

impl<F: Scalar> RouterDecision<F> {
    /// Dense weight vector over all experts (zeros for unselected ones).
    pub fn dense(&self) -> Vec<F> {
        let mut w = vec![F::zero(); self.scores.len()];
        for (&i, &v) in self.indices.iter().zip(&self.weights) {
            w[i] = v;
        }
        w
    }

    pub fn winner(&self) -> usize {
        self.indices[0]
    }
}

/// `H = x·W_g + noise ⊙ softplus(x·W_noise)` for one token.
///
/// `w_gate` and `w_noise` are `[P×c]`; pass zeros as `noise` to evaluate
/// without noise.
pub fn router_scores<F: Scalar>(x: &[F], w_gate: &Tensor<F>, w_noise: &Tensor<F>, noise: &[F]) -> Result<Vec<F>> {
    let p = x.len();
    if w_gate.shape().len() != 2 || w_gate.shape()[0] != p || w_noise.shape() != w_gate.shape() {
        return Err(TensorError::dim(
            "router_scores",
            format!("token of {p}, gate {:?}, noise weights {:?}", w_gate.shape(), w_noise.shape()),
        ));
    }
    let c = w_gate.shape()[1];
    if noise.len() != c {
        return Err(TensorError::dim("router_scores", format!("{} noise draws for {c} experts", noise.len())));
    }
    let project = |w: &Tensor<F>, j: usize| (0..p).map(|i| x[i] * w.data()[i * c + j]).sum::<F>();
    Ok((0..c)
        .map(|j| {
            let clean = project(w_gate, j);
            if noise[j] == F::zero() {
                clean
            } else {
                clean + noise[j] * mou_autograd::ops::softplus(project(w_noise, j))
            }
        })
        .collect())
}

/// Keeps the `k` largest scores and normalises them with a softmax.
pub fn route_topk<F: Scalar>(scores: &[F], k: usize) -> Result<RouterDecision<F>> {
    let indices = topk_indices(scores, k)?;
    let mut weights: Vec<F> = indices.iter().map(|&i| scores[i]).collect();
    softmax_in_place(&mut weights);
    Ok(RouterDecision { indices, weights, scores: scores.to_vec() })
}

/// Parameters reached by one token: `k` experts plus both gate matrices.
pub fn activated_parameters(patch_len: usize, d_model: usize, experts: usize, top_k: usize) -> usize {
    top_k * (patch_len * d_model + d_model) + 2 * patch_len * experts
}

/// Mixture forward over rows of `x` (`[R×P]`).
///
/// Each expert is evaluated only on the rows routed to it. `noise`, when
/// given, is an `[R×c]` matrix of standard normal draws.
pub fn mof_forward<'t, F: Scalar>(
    x: &Var<'t, F>,
    experts: &[(Var<'t, F>, Var<'t, F>)],
    w_gate: &Var<'t, F>,
    w_noise: &Var<'t, F>,
    top_k: usize,
    noise: Option<&Tensor<F>>,
) -> Result<(Var<'t, F>, Vec<RouterDecision<F>>)> {
    let shape = x.shape();
    let c = experts.len();
    if shape.len() != 2 || c == 0 || w_gate.shape() != [shape[1], c] || w_noise.shape() != [shape[1], c] {
        return Err(TensorError::dim(
            "mof_forward",
            format!("input {shape:?}, {c} experts, gate {:?}, noise weights {:?}", w_gate.shape(), w_noise.shape()),
        ));
    }
    let rows = shape[0];
    let d = experts[0].0.shape()[1];
    if top_k == 0 || top_k > c {
        return Err(TensorError::arg("mof_forward", format!("k = {top_k} outside 1..={c}")));
    }
    let logits = x.matmul(w_gate)?;
    let scores = match noise {
        Some(n) => {
            if n.shape() != [rows, c] {
                return Err(TensorError::dim("mof_forward", format!("noise {:?} for {rows}×{c} scores", n.shape())));
            }
            let std = x.matmul(w_noise)?.softplus()?;
            logits.add(&x.tape().constant(n.clone()).mul(&std)?)?
        }
        None => logits,
    };

    let decisions: Vec<RouterDecision<F>> =
        scores.data().chunks_exact(c).map(|h| route_topk(h, top_k)).collect::<Result<_>>()?;
    let kept: Vec<usize> =
        decisions.iter().enumerate().flat_map(|(r, dec)| dec.indices.iter().map(move |&i| r * c + i)).collect();
    let weights = scores.gather(kept, &[rows, top_k])?.softmax()?;

    let mut out: Option<Var<'t, F>> = None;
    for (e, (w, b)) in experts.iter().enumerate() {
        let mut routed = Vec::new();
        let mut slots = Vec::new();
        for (r, dec) in decisions.iter().enumerate() {
            if let Some(slot) = dec.indices.iter().position(|&i| i == e) {
                routed.push(r);
                slots.push(r * top_k + slot);
            }
        }
        if routed.is_empty() {
            continue;
        }
        let n = routed.len();
        let y = x.gather_rows(&routed)?.matmul(w)?.add(b)?;
        let g = weights.gather(slots, &[n, 1])?.expand(&[n, d])?;
        let part = y.mul(&g)?.index_add_rows(rows, &routed)?;
        out = Some(match out {
            Some(acc) => acc.add(&part)?,
            None => part,
        });
    }
    Ok((out.expect("every row selects at least one expert"), decisions))
}

/// `x·W + b`.
pub fn baseline_linear<'t, F: Scalar>(x: &Var<'t, F>, w: &Var<'t, F>, b: &Var<'t, F>) -> Result<Var<'t, F>> {
    x.matmul(w)?.add(b)
}

/// Squeeze-and-excitation embedding on `[B×N×P]` patches:
/// `u = x·W_se`, `s = σ(relu(mean_tokens(u)·W_1)·W_2)`, output `u ⊙ s`.
pub fn baseline_sem<'t, F: Scalar>(
    x: &Var<'t, F>,
    w_se: &Var<'t, F>,
    w1: &Var<'t, F>,
    w2: &Var<'t, F>,
) -> Result<Var<'t, F>> {
    let s = x.shape().to_vec();
    if s.len() != 3 {
        return Err(TensorError::dim("baseline_sem", format!("expected [B×N×P], got {s:?}")));
    }
    let u = x.matmul(w_se)?;
    let d = u.shape()[2];
    let gate = u.mean_axis(1)?.matmul(w1)?.relu()?.matmul(w2)?.sigmoid()?;
    u.mul(&gate.reshape(&[s[0], 1, d])?.expand(&[s[0], s[1], d])?)
}

/// Dynamic convolution embedding on `[B×N×P]` patches.
///
/// Per sample, `π = softmax(relu(mean_tokens(x)·W_1)·W_2)` mixes the `n`
/// kernels `[n×D×P]` (each a `D`-filter convolution spanning the whole
/// patch) and biases `[n×D]`; the mixed kernel is applied to every patch.
pub fn baseline_dyconv<'t, F: Scalar>(
    x: &Var<'t, F>,
    w1: &Var<'t, F>,
    w2: &Var<'t, F>,
    kernels: &Var<'t, F>,
    biases: &Var<'t, F>,
) -> Result<Var<'t, F>> {
    let s = x.shape().to_vec();
    let ks = kernels.shape().to_vec();
    if s.len() != 3 || ks.len() != 3 || ks[2] != s[2] || biases.shape() != [ks[0], ks[1]] {
        return Err(TensorError::dim(
            "baseline_dyconv",
            format!("input {s:?}, kernels {ks:?}, biases {:?}", biases.shape()),
        ));
    }
    let (b, n_tok, p) = (s[0], s[1], s[2]);
    let (n, d) = (ks[0], ks[1]);
    let pi = x.mean_axis(1)?.matmul(w1)?.relu()?.matmul(w2)?.softmax()?;
    let kernel = pi.matmul(&kernels.reshape(&[n, d * p])?)?.reshape(&[b, d, p])?;
    let bias = pi.matmul(biases)?.reshape(&[b, 1, d])?.expand(&[b, n_tok, d])?;
    x.bmm(&kernel, true)?.add(&bias)
}

/// Sparse mixture parameters.
#[derive(Debug, Clone)]
pub struct MofExtractor {
    pub experts: Vec<Linear>,
    pub gate: ParamId,
    pub noise: ParamId,
    pub top_k: usize,
}

impl MofExtractor {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, patch_len: usize, d_model: usize, experts: usize, top_k: usize) -> Self {
        let experts = (0..experts).map(|i| Linear::new(b, &format!("expert{i}"), patch_len, d_model, true)).collect::<Vec<_>>();
        let c = experts.len();
        MofExtractor { gate: b.zeros("w_gate", &[patch_len, c]), noise: b.zeros("w_noise", &[patch_len, c]), experts, top_k }
    }

    pub fn forward<'t, F: Scalar>(
        &self,
        p: &Bound<'t, F>,
        x: &Var<'t, F>,
        noise: Option<&Tensor<F>>,
    ) -> Result<(Var<'t, F>, Vec<RouterDecision<F>>)> {
        let experts: Vec<_> =
            self.experts.iter().map(|l| (p.var(l.weight).clone(), p.var(l.bias.expect("expert bias")).clone())).collect();
        mof_forward(x, &experts, p.var(self.gate), p.var(self.noise), self.top_k, noise)
    }
}

#[derive(Debug, Clone)]
pub struct SemExtractor {
    pub w_se: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
}

impl SemExtractor {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, patch_len: usize, d_model: usize, reduction: usize) -> Self {
        let hidden = d_model / reduction;
        SemExtractor {
            w_se: b.uniform("w_se", &[patch_len, d_model], patch_len),
            w1: b.uniform("w1", &[d_model, hidden], d_model),
            w2: b.uniform("w2", &[hidden, d_model], hidden),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DyconvExtractor {
    pub w1: ParamId,
    pub w2: ParamId,
    pub kernels: ParamId,
    pub biases: ParamId,
}

impl DyconvExtractor {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, patch_len: usize, d_model: usize, kernels: usize, reduction: usize) -> Self {
        let hidden = (d_model / reduction).max(1);
        DyconvExtractor {
            w1: b.uniform("w1", &[patch_len, hidden], patch_len),
            w2: b.uniform("w2", &[hidden, kernels], hidden),
            kernels: b.uniform("kernels", &[kernels, d_model, patch_len], patch_len),
            biases: b.zeros("biases", &[kernels, d_model]),
        }
    }
}

/// Any patch embedding, mapping `[B×N×P]` patches to `[B×N×D]` tokens.
#[derive(Debug, Clone)]
pub enum Extractor {
    Mof(MofExtractor),
    Linear(Linear),
    Sem(SemExtractor),
    Dyconv(DyconvExtractor),
}

impl Extractor {
    pub fn forward<'t, F: Scalar>(
        &self,
        p: &Bound<'t, F>,
        x: &Var<'t, F>,
        noise: Option<&Tensor<F>>,
    ) -> Result<(Var<'t, F>, Vec<RouterDecision<F>>)> {
        let s = x.shape().to_vec();
        if s.len() != 3 {
            return Err(TensorError::dim("extractor", format!("expected [B×N×P], got {s:?}")));
        }
        match self {
            Extractor::Mof(m) => {
                let (y, dec) = m.forward(p, &x.reshape(&[s[0] * s[1], s[2]])?, noise)?;
                let d = y.shape()[1];
                Ok((y.reshape(&[s[0], s[1], d])?, dec))
            }
            Extractor::Linear(l) => Ok((l.forward(p, x)?, Vec::new())),
            Extractor::Sem(e) => Ok((baseline_sem(x, p.var(e.w_se), p.var(e.w1), p.var(e.w2))?, Vec::new())),
            Extractor::Dyconv(e) => Ok((
                baseline_dyconv(x, p.var(e.w1), p.var(e.w2), p.var(e.kernels), p.var(e.biases))?,
                Vec::new(),
            )),
        }
    }

    /// Number of router noise columns needed per token in training mode.
    pub fn noise_width(&self) -> Option<usize> {
        match self {
            Extractor::Mof(m) => Some(m.experts.len()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use approx::assert_abs_diff_eq;
    use mou_autograd::{Conv1dSpec, Tape};

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn scores_without_noise_are_the_gate_product() {
        let wg = t(&[2, 2], &[1., 2., 3., 4.]);
        let wn = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(router_scores(&[1.0, -1.0], &wg, &wn, &[0.0, 0.0]).unwrap(), vec![-2.0, -2.0]);
        let h = router_scores(&[0.0, 0.0], &wg, &wn, &[1.0, -2.0]).unwrap();
        assert_abs_diff_eq!(h[0], 0.6931, epsilon = 1e-4);
        assert_abs_diff_eq!(h[1], -2.0 * 0.6931, epsilon = 1e-3);
        let x = [0.5, 0.25];
        let small = router_scores(&x, &wg, &wn, &[1.0, 1.0]).unwrap();
        let big = router_scores(&x, &wg, &wn.map(|v| 2.0 * v), &[1.0, 1.0]).unwrap();
        assert!(big.iter().zip(&small).all(|(b, s)| b > s));
    }

    #[test]
    fn topk_routing_examples() {
        let d = route_topk(&[3.0f64, 2.0, 1.0, 0.5], 2).unwrap();
        assert_eq!(d.indices, vec![0, 1]);
        assert_abs_diff_eq!(d.weights[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(d.weights[1], 0.2689, epsilon = 1e-4);
        assert_eq!(d.dense()[2..], [0.0, 0.0]);
        let d = route_topk(&[0.1f64, 0.9, 0.3], 1).unwrap();
        assert_eq!((d.indices.as_slice(), d.weights.as_slice()), (&[1][..], &[1.0][..]));
        let shifted = route_topk(&[5.0f64, 4.0, 3.0, 2.5], 2).unwrap();
        assert_eq!(shifted.indices, vec![0, 1]);
        assert_eq!(shifted.weights, route_topk(&[3.0f64, 2.0, 1.0, 0.5], 2).unwrap().weights);
        assert!(route_topk(&[1.0f64], 2).is_err());
    }

    fn lin(tape: &Tape<f64>, w: Tensor<f64>, b: Tensor<f64>) -> (Var<'_, f64>, Var<'_, f64>) {
        (tape.constant(w), tape.constant(b))
    }

    #[test]
    fn single_expert_is_a_linear_layer() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[3, 2], &[1., 2., -1., 0.5, 3., 3.]));
        let (w, b) = lin(&tape, t(&[2, 2], &[0.5, -1., 2., 0.25]), t(&[2], &[0.1, -0.2]));
        let zeros = tape.constant(Tensor::zeros(vec![2, 1]));
        let (y, dec) = mof_forward(&x, &[(w.clone(), b.clone())], &zeros, &zeros, 1, None).unwrap();
        assert_eq!(y.data(), baseline_linear(&x, &w, &b).unwrap().data());
        assert!(dec.iter().all(|d| d.weights == vec![1.0]));
    }

    #[test]
    fn identical_experts_collapse() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let e = lin(&tape, t(&[2, 3], &[1., 2., 3., 4., 5., 6.]), t(&[3], &[1., 1., 1.]));
        let gate = tape.constant(t(&[2, 4], &[0.3, -0.1, 0.2, 0.0, 0.5, 0.1, -0.4, 0.2]));
        let (y, _) = mof_forward(&x, &vec![e.clone(); 4], &gate, &gate, 4, None).unwrap();
        let reference = baseline_linear(&x, &e.0, &e.1).unwrap();
        for (a, b) in y.data().iter().zip(reference.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_built_gate_routes_tokens() {
        let tape = Tape::<f64>::new();
        // Token A has a positive first feature, token B a negative one.
        let x = tape.constant(t(&[2, 2], &[1., 0., -1., 0.]));
        let e1 = lin(&tape, t(&[2, 2], &[1., 2., 3., 4.]), t(&[2], &[0.5, 0.5]));
        let e2 = lin(&tape, t(&[2, 2], &[-1., 0., 0., -1.]), t(&[2], &[-3., 3.]));
        let gate = tape.constant(t(&[2, 2], &[50., -50., 0., 0.]));
        let zeros = tape.constant(Tensor::zeros(vec![2, 2]));
        let (y, dec) = mof_forward(&x, &[e1.clone(), e2.clone()], &gate, &zeros, 1, None).unwrap();
        assert_eq!(dec[0].indices, vec![0]);
        assert_eq!(dec[1].indices, vec![1]);
        let a = baseline_linear(&x, &e1.0, &e1.1).unwrap();
        let b = baseline_linear(&x, &e2.0, &e2.1).unwrap();
        assert_eq!(&y.data()[..2], &a.data()[..2]);
        assert_eq!(&y.data()[2..], &b.data()[2..]);
    }

    #[test]
    fn unselected_experts_get_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 2], &[1., 0.]));
        let e: Vec<_> = (0..3)
            .map(|i| (tape.leaf(Tensor::full(vec![2, 2], i as f64 + 1.0), true), tape.leaf(Tensor::zeros(vec![2]), true)))
            .collect();
        let gate = tape.constant(t(&[2, 3], &[1., 3., 2., 0., 0., 0.]));
        let (y, dec) = mof_forward(&x, &e, &gate, &gate, 2, None).unwrap();
        assert_eq!(dec[0].indices, vec![1, 2]);
        let g = tape.backward(&y.sum().unwrap()).unwrap();
        assert!(g.wrt(&e[0].0).data().iter().all(|&v| v == 0.0));
        assert!(g.wrt(&e[1].0).data().iter().any(|&v| v != 0.0));
        assert!(g.wrt(&e[2].0).data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn linear_baseline_examples() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let eye = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let zb = tape.constant(Tensor::zeros(vec![2]));
        assert_eq!(baseline_linear(&x, &eye, &zb).unwrap().data(), x.data());
        let zw = tape.constant(Tensor::zeros(vec![2, 2]));
        assert!(baseline_linear(&x, &zw, &zb).unwrap().data().iter().all(|&v| v == 0.0));
        let w = tape.constant(t(&[2, 2], &[0.5, -1., 2., 1.]));
        let b = tape.constant(t(&[2], &[1., 0.]));
        // [1,2]·W = [4.5, 1], [3,4]·W = [9.5, 1]
        assert_eq!(baseline_linear(&x, &w, &b).unwrap().data(), &[5.5, 1., 10.5, 1.]);
    }

    #[test]
    fn sem_examples() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 2, 2], &[1., 2., 3., 4.]));
        let w_se = tape.constant(t(&[2, 2], &[1., 0., 1., -1.]));
        let w1 = tape.constant(t(&[2, 1], &[1., 1.]));
        let w2 = tape.constant(Tensor::zeros(vec![1, 2]));
        let u = x.matmul(&w_se).unwrap();
        let y = baseline_sem(&x, &w_se, &w1, &w2).unwrap();
        for (a, b) in y.data().iter().zip(u.data()) {
            assert_eq!(*a, 0.5 * b);
        }
        let zero = tape.constant(Tensor::zeros(vec![2, 2]));
        let w2 = tape.constant(t(&[1, 2], &[1., 1.]));
        assert!(baseline_sem(&x, &zero, &w1, &w2).unwrap().data().iter().all(|&v| v == 0.0));

        // D = 1, r = 1, one patch of one point: u = 2·3 = 6, s = σ(relu(6·0.5)·(−1)).
        let x = tape.constant(t(&[1, 1, 1], &[3.]));
        let y = baseline_sem(&x, &tape.constant(t(&[1, 1], &[2.])), &tape.constant(t(&[1, 1], &[0.5])), &tape.constant(t(&[1, 1], &[-1.])))
            .unwrap();
        assert_abs_diff_eq!(y.data()[0], 6.0 / (1.0 + 3f64.exp()), epsilon = 1e-12);
    }

    #[test]
    fn dyconv_examples() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 3, 2], &[1., 2., 3., 4., -1., 0.5]));
        let w1 = tape.constant(t(&[2, 1], &[0.3, -0.7]));
        let k1 = t(&[1, 2, 2], &[1., 2., -1., 0.5]);
        let b1 = t(&[1, 2], &[0.1, 0.2]);
        // A single kernel is a fixed convolution of each patch.
        let y = baseline_dyconv(&x, &w1, &tape.constant(t(&[1, 1], &[0.4])), &tape.constant(k1.clone()), &tape.constant(b1))
            .unwrap();
        let xc = tape.constant(x.value().clone().reshape(vec![3, 1, 2]).unwrap());
        let conv = xc.conv1d(&tape.constant(k1.reshape(vec![2, 1, 2]).unwrap()), Conv1dSpec::new(1, 0)).unwrap();
        for tok in 0..3 {
            for ch in 0..2 {
                let expect = conv.value().at(&[tok, ch, 0]) + [0.1, 0.2][ch];
                assert_abs_diff_eq!(y.value().at(&[0, tok, ch]), expect, epsilon = 1e-12);
            }
        }
        // Zero gate weights give π = [½, ½]: the averaged kernel.
        let ks = t(&[2, 2, 2], &[1., 2., -1., 0.5, 3., 0., 1., 1.5]);
        let avg = t(&[1, 2, 2], &[2., 1., 0., 1.]);
        let zb = tape.constant(Tensor::zeros(vec![2, 2]));
        let zw2 = tape.constant(Tensor::zeros(vec![1, 2]));
        let y = baseline_dyconv(&x, &w1, &zw2, &tape.constant(ks), &zb).unwrap();
        let single = baseline_dyconv(
            &x,
            &w1,
            &tape.constant(Tensor::zeros(vec![1, 1])),
            &tape.constant(avg),
            &tape.constant(Tensor::zeros(vec![1, 2])),
        )
        .unwrap();
        for (a, b) in y.data().iter().zip(single.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn activated_parameter_count() {
        assert_eq!(activated_parameters(16, 64, 4, 2), 2 * (16 * 64 + 64) + 2 * 16 * 4);
        let mut store = ParamStore::<f32>::new();
        let mut b = ParamBuilder::new(&mut store, 0);
        MofExtractor::new(&mut b, 16, 64, 4, 2);
        assert_eq!(store.numel(), 4 * (16 * 64 + 64) + 2 * 16 * 4);
    }
}
