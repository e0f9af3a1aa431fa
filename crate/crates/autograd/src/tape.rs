use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Local gradient rule of a recorded operation.
///
/// Receives the gradient of the output and a mask naming which parents need
/// a gradient; returns one entry per parent (`None` for masked-out parents).
pub type BackwardFn<F> = Box<dyn Fn(&[F], &[bool]) -> Vec<Option<Vec<F>>>>;

struct Node<F> {
    value: Arc<Tensor<F>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    requires_grad: bool,
}

/// Wengert list of operations recorded during a forward pass.
///
/// Node ids are assigned in creation order, so parents always precede their
/// children and reverse id order is a reverse topological order.
pub struct Tape<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
    grad_enabled: bool,
    scope: Cell<&'static str>,
    macs: RefCell<BTreeMap<&'static str, u64>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var<'t, F: Scalar> {
    tape: &'t Tape<F>,
    id: usize,
    value: Arc<Tensor<F>>,
    requires_grad: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    /// A tape that records local gradients.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
            scope: Cell::new("other"),
            macs: RefCell::new(BTreeMap::new()),
        }
    }

    /// A tape for inference: values are recorded, gradient rules are not.
    pub fn inference() -> Self {
        Tape { grad_enabled: false, ..Self::new() }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Arc<Tensor<F>>, parents: Vec<usize>, backward: Option<BackwardFn<F>>, requires_grad: bool) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: value.clone(), parents, backward, requires_grad });
        Var { tape: self, id, value, requires_grad }
    }

    /// Registers an input. Leaves with `requires_grad` receive a gradient
    /// from [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<F>, requires_grad: bool) -> Var<'_, F> {
        self.leaf_shared(Arc::new(value), requires_grad)
    }

    pub fn leaf_shared(&self, value: Arc<Tensor<F>>, requires_grad: bool) -> Var<'_, F> {
        self.push(value, Vec::new(), None, requires_grad && self.grad_enabled)
    }

    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, false)
    }

    /// Records the result of an operation.
    ///
    /// Fails with [`TensorError::NonFinite`] when `value` contains NaN or
    /// infinity. The gradient rule is dropped when no parent needs gradients.
    pub fn record<B>(&self, op: &'static str, value: impl Into<Arc<Tensor<F>>>, parents: &[&Var<'_, F>], backward: B) -> Result<Var<'_, F>>
    where
        B: Fn(&[F], &[bool]) -> Vec<Option<Vec<F>>> + 'static,
    {
        let value = value.into();
        value.ensure_finite(op)?;
        let requires_grad = self.grad_enabled && parents.iter().any(|p| p.requires_grad);
        let rule: Option<BackwardFn<F>> = if requires_grad { Some(Box::new(backward)) } else { None };
        Ok(self.push(value, parents.iter().map(|p| p.id).collect(), rule, requires_grad))
    }

    /// Runs `f` with multiply-accumulate counts attributed to `scope`.
    pub fn with_scope<R>(&self, scope: &'static str, f: impl FnOnce() -> R) -> R {
        let previous = self.scope.replace(scope);
        let out = f();
        self.scope.set(previous);
        out
    }

    pub fn add_macs(&self, count: u64) {
        *self.macs.borrow_mut().entry(self.scope.get()).or_insert(0) += count;
    }

    /// Multiply-accumulate counts per scope since the tape was created.
    pub fn mac_counts(&self) -> BTreeMap<&'static str, u64> {
        self.macs.borrow().clone()
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: &Var<'_, F>) -> Result<Gradients<F>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::arg("backward", "loss was recorded on a different tape"));
        }
        if loss.value.numel() != 1 {
            return Err(TensorError::arg(
                "backward",
                format!("loss must be a scalar, got shape {:?}", loss.value.shape()),
            ));
        }
        let nodes = self.nodes.borrow();
        let mut pending: Vec<Option<Vec<F>>> = (0..=loss.id).map(|_| None).collect();
        let mut leaves = HashMap::new();
        pending[loss.id] = Some(vec![F::one()]);
        for id in (0..=loss.id).rev() {
            let Some(grad) = pending[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.backward {
                None => {
                    if node.parents.is_empty() {
                        leaves.insert(id, Tensor::new(node.value.shape().to_vec(), grad)?);
                    }
                }
                Some(rule) => {
                    let mask: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let parent_grads = rule(&grad, &mask);
                    for ((&parent, contribution), needed) in node.parents.iter().zip(parent_grads).zip(mask) {
                        let Some(contribution) = contribution else { continue };
                        if !needed {
                            continue;
                        }
                        debug_assert_eq!(contribution.len(), nodes[parent].value.numel());
                        match &mut pending[parent] {
                            Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += *c),
                            slot @ None => *slot = Some(contribution),
                        }
                    }
                }
            }
        }
        for g in leaves.values() {
            g.ensure_finite("backward")?;
        }
        Ok(Gradients { leaves })
    }
}

impl<'t, F: Scalar> Var<'t, F> {
    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.value
    }

    pub fn shared_value(&self) -> Arc<Tensor<F>> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[F] {
        self.value.data()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients<F: Scalar> {
    leaves: HashMap<usize, Tensor<F>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient for `leaf`; zeros when the leaf does not reach the loss.
    pub fn wrt(&self, leaf: &Var<'_, F>) -> Tensor<F> {
        self.leaves
            .get(&leaf.id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(leaf.shape().to_vec()))
    }

    pub fn get(&self, leaf: &Var<'_, F>) -> Option<&Tensor<F>> {
        self.leaves.get(&leaf.id)
    }
}
