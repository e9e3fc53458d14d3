use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::element::Element;
use crate::numerics::graph::{numel, Graph, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ParamId(pub(crate) usize);

/// Named parameter (or non-trainable buffer, e.g. batch-norm running stats).
pub struct Param<E> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<E>,
    pub grad: Vec<E>,
    pub grad_set: bool,
    pub trainable: bool,
}

/// Owns all parameters of a model. Parameters live outside the graph; each
/// forward pass binds them as leaves and gradients are accumulated back after
/// `backward`.
pub struct ParamStore<E> {
    params: Vec<Param<E>>,
    by_name: HashMap<String, usize>,
}

/// Graph leaves for one forward pass, indexed by [`ParamId`].
pub struct Bindings {
    tensors: Vec<Option<Tensor>>,
}

impl Bindings {
    pub fn tensor(&self, id: ParamId) -> Tensor {
        self.tensors[id.0].expect("parameter was not bound into this graph")
    }
}

impl<E: Element> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: Vec<E>,
        trainable: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        if numel(&shape) != value.len() {
            return Err(Error::Shape(format!(
                "parameter '{name}': shape {shape:?} expects {} values, got {}",
                numel(&shape),
                value.len()
            )));
        }
        let grad = vec![E::zero(); value.len()];
        self.by_name.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            shape,
            value,
            grad,
            grad_set: false,
            trainable,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<E> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<E> {
        &mut self.params[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<E>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar values across trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Scalar count of trainable parameters whose name starts with `prefix`.
    pub fn trainable_count_prefixed(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable && p.name.starts_with(prefix))
            .map(|p| p.value.len())
            .sum()
    }

    /// Insert every parameter into the graph as a leaf. Trainable parameters
    /// require gradients unless `frozen` is set (evaluation mode).
    pub fn bind(&self, g: &mut Graph<E>, frozen: bool) -> Result<Bindings> {
        self.bind_filtered(g, frozen, |_| true)
    }

    /// Bind only the parameters whose name satisfies `keep`; evaluation paths
    /// use this to avoid copying the backbone when only the head runs.
    pub fn bind_filtered(
        &self,
        g: &mut Graph<E>,
        frozen: bool,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Bindings> {
        let mut tensors = Vec::with_capacity(self.params.len());
        for p in &self.params {
            if keep(&p.name) {
                let rg = p.trainable && !frozen;
                tensors.push(Some(g.leaf(&p.shape, p.value.clone(), rg)?));
            } else {
                tensors.push(None);
            }
        }
        Ok(Bindings { tensors })
    }

    /// Pull gradients of bound leaves back into the store (accumulating).
    pub fn accumulate_grads(&mut self, g: &Graph<E>, bindings: &Bindings) {
        for (i, p) in self.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let Some(t) = bindings.tensors[i] else {
                continue;
            };
            if let Some(grad) = g.grad(t) {
                for (acc, &d) in p.grad.iter_mut().zip(grad) {
                    *acc += d;
                }
                p.grad_set = true;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = E::zero());
            p.grad_set = false;
        }
    }
}

/// Weight initializers. The backbone convolutions use fan-in-scaled normals,
/// linear layers symmetric fan-based uniforms, and norm layers scale 1 /
/// shift 0. Values are drawn in f64 so trajectories match across precisions.
pub mod init {
    use super::Element;
    use rand::Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    /// Normal with std sqrt(2 / fan_in) for conv weights [c_out, c_in, k…].
    pub fn conv_normal<E: Element, R: Rng>(rng: &mut R, shape: &[usize]) -> Vec<E> {
        let fan_in: usize = shape[1..].iter().product();
        let std = (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("std is finite");
        (0..super::numel(shape))
            .map(|_| E::from_f64(dist.sample(rng)))
            .collect()
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for linear weights and biases.
    pub fn linear_uniform<E: Element, R: Rng>(rng: &mut R, fan_in: usize, len: usize) -> Vec<E> {
        let bound = (fan_in as f64).sqrt().recip();
        let dist = Uniform::new_inclusive(-bound, bound);
        (0..len).map(|_| E::from_f64(dist.sample(rng))).collect()
    }

    pub fn zeros<E: Element>(len: usize) -> Vec<E> {
        vec![E::zero(); len]
    }

    pub fn ones<E: Element>(len: usize) -> Vec<E> {
        vec![E::one(); len]
    }
}
