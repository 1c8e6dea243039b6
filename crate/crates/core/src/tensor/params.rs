use std::collections::HashMap;

use rand::Rng;

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors and their accumulated gradients.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    touched: Vec<bool>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.index.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.touched.push(false);
        Ok(id)
    }

    /// Glorot-uniform matrix: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn add_matrix(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId, TensorError> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, TensorError> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn is_touched(&self, id: ParamId) -> bool {
        self.touched[id.0]
    }

    pub fn zero_grads(&mut self) {
        for (g, t) in self.grads.iter_mut().zip(self.touched.iter_mut()) {
            if *t {
                g.data_mut().fill(0.0);
                *t = false;
            }
        }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &Tensor) {
        self.grads[id.0].add_assign(grad);
        self.touched[id.0] = true;
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &Tensor) {
        (&mut self.values[id.0], &self.grads[id.0])
    }
}

impl ParamStore {
    /// Overwrites every value with the same-named tensor from `other`.
    /// Both stores must hold exactly the same names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), TensorError> {
        if other.len() != self.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for id in self.ids().collect::<Vec<_>>() {
            let name = self.names[id.0].clone();
            let src = other
                .id(&name)
                .ok_or_else(|| TensorError::Checkpoint(format!("missing parameter {name}")))?;
            let src = other.value(src);
            if src.shape() != self.values[id.0].shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load",
                    left: self.values[id.0].shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            self.values[id.0] = src.clone();
        }
        Ok(())
    }
}
