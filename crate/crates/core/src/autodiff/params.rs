use std::collections::BTreeMap;

use super::{Graph, Scalar, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies every parameter into `graph` as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> BoundParams {
        BoundParams {
            vars: self.tensors.iter().map(|t| graph.param(t.clone())).collect(),
        }
    }

    /// Gradients of the bound leaves; missing gradients come back as zeros.
    pub fn grads(&self, graph: &Graph<T>, bound: &BoundParams) -> Vec<Tensor<T>> {
        bound
            .vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| graph.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
            .collect()
    }

    /// Parameters keyed by name, converted to `f64`.
    pub fn to_named_f64(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.iter()
            .map(|(n, t)| (n.to_string(), (t.shape().to_vec(), t.to_f64_vec())))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Graph variables for every parameter of a [`ParamStore`], by id.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}
