use std::collections::HashMap;

use super::Matrix;

/// Handle to a [`Param`] inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether a parameter is a weight matrix (penalized by the Frobenius
/// regularizer) or a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Ordered, name-addressable collection of trainable tensors.
///
/// Insertion order is the canonical order used by checkpoints, the
/// optimizer, and gradient reductions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, value: Matrix) -> ParamId {
        let name = name.into();
        let id = ParamId(self.params.len());
        let previous = self.by_name.insert(name.clone(), id);
        assert!(previous.is_none(), "duplicate parameter name {name}");
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name, kind, value, grad });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds a gradient set into each `Param::grad`, in parameter order.
    pub fn accumulate(&mut self, grads: &Gradients) {
        assert_eq!(grads.slots.len(), self.params.len(), "gradient set size");
        for (p, g) in self.params.iter_mut().zip(&grads.slots) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }
}

/// Gradients produced by one backward pass, indexed by [`ParamId`].
/// Untouched parameters hold no storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    slots: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn empty(param_count: usize) -> Self {
        Self { slots: vec![None; param_count] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.slots[id.0].as_ref()
    }

    /// Gradient for `id`, materializing zeros of the parameter's shape if
    /// nothing flowed into it.
    pub fn dense(&self, id: ParamId, params: &ParamSet) -> Matrix {
        match &self.slots[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = params.value(id).shape();
                Matrix::zeros(r, c)
            }
        }
    }

    pub(crate) fn add_to(&mut self, id: ParamId, contribution: Matrix) {
        match &mut self.slots[id.0] {
            Some(g) => g.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Elementwise sum with another gradient set.
    pub fn merge(&mut self, other: &Gradients) {
        assert_eq!(self.slots.len(), other.slots.len(), "gradient set size");
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add_to(ParamId(i), g.clone());
            }
        }
    }

    pub fn touched(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.slots.iter().enumerate().filter(|(_, g)| g.is_some()).map(|(i, _)| ParamId(i))
    }
}
