//! Reverse-mode autodiff over a linear tape of tensor operations.
//!
//! A [`Session`] owns the tape for one forward pass. Ops push nodes holding
//! the forward value, parent indices, and a VJP closure; [`Session::backward`]
//! replays the tape in reverse and accumulates cotangents. Parameters enter
//! exactly once per name (repeated `param()` calls return the same leaf), so
//! shared weights accumulate gradients from all their uses.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::params::ParamStore;
use crate::tensor::{Element, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) type VjpFn<T> =
    Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Tensor<T>> + Send>;

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    vjp: Option<VjpFn<T>>,
}

pub struct Session<'p, T: Element> {
    nodes: Vec<Node<T>>,
    params: &'p ParamStore<T>,
    leaf_cache: IndexMap<String, usize>,
}

/// Result of a backward pass.
pub struct Gradients<T> {
    node_grads: Vec<Option<Tensor<T>>>,
    param_grads: IndexMap<String, Tensor<T>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient with respect to an arbitrary tape node (inputs included).
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.node_grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.param_grads.get(name)
    }

    /// Parameter gradients in leaf-registration order.
    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.param_grads.iter()
    }
}

impl<'p, T: Element> Session<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Session<'p, T> {
        Session {
            nodes: Vec::new(),
            params,
            leaf_cache: IndexMap::new(),
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.params
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        parents: Vec<usize>,
        vjp: Option<VjpFn<T>>,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            vjp,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node carrying externally supplied data.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Vec::new(), None)
    }

    /// Leaf bound to a named parameter. Repeated calls reuse the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&idx) = self.leaf_cache.get(name) {
            return Ok(Var(idx));
        }
        let value = self.params.value(name)?.clone();
        let v = self.push(value, Vec::new(), None);
        self.leaf_cache.insert(name.to_string(), v.0);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Backward from a scalar root with cotangent 1.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::shape(format!(
                "backward root must be scalar, got {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let seed = Tensor::full(self.nodes[root.0].value.shape(), T::one());
        self.backward_with(root, seed)
    }

    /// Backward from an arbitrary node with an explicit cotangent.
    pub fn backward_with(&self, root: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.nodes[root.0].value.shape() {
            return Err(Error::shape(format!(
                "cotangent shape {:?} does not match root {:?}",
                seed.shape(),
                self.nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            let Some(vjp) = &node.vjp else { continue };
            let parent_values: Vec<&Tensor<T>> = node
                .parents
                .iter()
                .map(|&p| &self.nodes[p].value)
                .collect();
            let parent_grads = vjp(&g, &parent_values, &node.value);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                debug_assert_eq!(self.nodes[p].value.shape(), pg.shape());
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        let mut param_grads = IndexMap::new();
        for (name, &idx) in &self.leaf_cache {
            let g = grads[idx]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[idx].value.shape()));
            param_grads.insert(name.clone(), g);
        }
        Ok(Gradients {
            node_grads: grads,
            param_grads,
        })
    }
}
