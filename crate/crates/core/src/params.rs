//! Named parameter storage shared by every layer.
//!
//! Layers hold only [`ParamId`]s; the tensors live in one [`ParamStore`] so
//! the optimizer, checkpointing and gradient checks see a single flat list.

use std::sync::Arc;

use mou_autograd::{Gradients, Scalar, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F: Scalar> {
    names: Vec<String>,
    values: Vec<Arc<Tensor<F>>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| v.as_ref()))
    }

    /// Mutable access to every tensor, in registration order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.values.iter_mut().map(Arc::make_mut).collect()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore { names: self.names.clone(), values: self.values.iter().map(|v| Arc::new(v.cast())).collect() }
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<F>, requires_grad: bool) -> Bound<'t, F> {
        Bound { vars: self.values.iter().map(|v| tape.leaf_shared(v.clone(), requires_grad)).collect() }
    }
}

/// Parameters placed on one tape.
pub struct Bound<'t, F: Scalar> {
    vars: Vec<Var<'t, F>>,
}

impl<'t, F: Scalar> Bound<'t, F> {
    /// Wraps existing vars, in registration order (e.g. leaves owned by a
    /// gradient checker).
    pub fn from_vars(vars: Vec<Var<'t, F>>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> &Var<'t, F> {
        &self.vars[id.0]
    }

    /// Gradients for every parameter, in registration order.
    pub fn gradients(&self, grads: &Gradients<F>) -> Vec<Tensor<F>> {
        self.vars.iter().map(|v| grads.wrt(v)).collect()
    }
}

/// Registers freshly initialised parameters under a name prefix.
///
/// Every tensor draws from its own generator seeded by `(seed, full name)`,
/// so a layer initialises identically regardless of what else the model
/// contains.
pub struct ParamBuilder<'s, F: Scalar> {
    store: &'s mut ParamStore<F>,
    seed: u64,
    prefix: String,
}

impl<'s, F: Scalar> ParamBuilder<'s, F> {
    pub fn new(store: &'s mut ParamStore<F>, seed: u64) -> Self {
        ParamBuilder { store, seed, prefix: String::new() }
    }

    /// Builder whose names are nested under `scope`.
    pub fn scoped(&mut self, scope: &str) -> ParamBuilder<'_, F> {
        let prefix = self.full(scope);
        ParamBuilder { store: self.store, seed: self.seed, prefix }
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn rng(&self, name: &str) -> ChaCha8Rng {
        let digest = Sha256::new().chain_update(self.seed.to_le_bytes()).chain_update(name.as_bytes()).finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(bytes)
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<F>) -> ParamId {
        let full = self.full(name);
        self.store.add(full, value)
    }

    /// `U(−1/√fan_in, 1/√fan_in)` entries.
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let full = self.full(name);
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = self.rng(&full);
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::lit(rng.random_range(-bound..=bound))).collect();
        self.store.add(full, Tensor::new(shape.to_vec(), data).expect("shape matches data"))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.tensor(name, Tensor::zeros(shape.to_vec()))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.tensor(name, Tensor::ones(shape.to_vec()))
    }

    /// Values produced per element by `f`, given a dedicated generator.
    pub fn with_rng(&mut self, name: &str, shape: &[usize], mut f: impl FnMut(usize, &mut ChaCha8Rng) -> f64) -> ParamId {
        let full = self.full(name);
        let mut rng = self.rng(&full);
        let n = shape.iter().product();
        let data = (0..n).map(|i| F::lit(f(i, &mut rng))).collect();
        self.store.add(full, Tensor::new(shape.to_vec(), data).expect("shape matches data"))
    }
}

/// Weight and bias of an affine map `x·W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let mut s = b.scoped(name);
        let weight = s.uniform("weight", &[fan_in, fan_out], fan_in);
        let bias = bias.then(|| s.zeros("bias", &[fan_out]));
        Linear { weight, bias }
    }

    pub fn forward<'t, F: Scalar>(&self, p: &Bound<'t, F>, x: &Var<'t, F>) -> mou_autograd::Result<Var<'t, F>> {
        let y = x.matmul(p.var(self.weight))?;
        match self.bias {
            Some(b) => y.add(p.var(b)),
            None => Ok(y),
        }
    }
}

/// LayerNorm affine parameters.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, name: &str, d: usize) -> Self {
        let mut s = b.scoped(name);
        Norm { gamma: s.ones("gamma", &[d]), beta: s.zeros("beta", &[d]) }
    }

    pub fn forward<'t, F: Scalar>(&self, p: &Bound<'t, F>, x: &Var<'t, F>, eps: f64) -> mou_autograd::Result<Var<'t, F>> {
        x.layernorm(p.var(self.gamma), p.var(self.beta), F::lit(eps))
    }
}
