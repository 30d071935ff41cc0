//! Named parameter tensors with gradient buffers.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// One parameter: value plus an accumulated gradient of identical shape.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// How a freshly registered parameter is filled.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, scaled by the factor.
    FanInUniform { fan_in: usize, scale: f64 },
    Zero,
    Constant(f64),
}

impl Init {
    pub fn fan_in(fan_in: usize) -> Init {
        Init::FanInUniform { fan_in, scale: 1.0 }
    }
}

/// Map from dotted parameter name to `(value, grad)`. Insertion order is the
/// canonical order for gradient reduction and checkpointing.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Param<T>>,
}

/// Stable per-parameter seed: mixes the root seed with the parameter name so
/// adding or reordering registrations does not shift other draws.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the root seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ root.rotate_left(17)
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> ParamStore<T> {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    /// Registers a parameter. `seed` is the per-parameter seed (use
    /// [`derive_seed`] to get one from a run seed).
    pub fn register(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let value = match init {
            Init::Zero => Tensor::zeros(shape),
            Init::Constant(c) => Tensor::full(shape, T::from_f64(c)),
            Init::FanInUniform { fan_in, scale } => {
                let bound = scale / (fan_in.max(1) as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Tensor::from_fn(shape, |_| {
                    T::from_f64(rng.random_range(-bound..=bound))
                })
            }
        };
        let grad = Tensor::zeros(shape);
        self.entries.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter `{name}`: stored shape {:?}, new shape {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Adds `grad` into the parameter's gradient buffer.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        debug_assert_eq!(p.value.shape(), grad.shape());
        p.grad.add_assign(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.entries.iter_mut() {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<T>)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Total scalar count over all parameter tensors.
    pub fn total_elements(&self) -> u64 {
        self.entries.values().map(|p| p.value.numel() as u64).sum()
    }
}
