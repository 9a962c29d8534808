use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;
use super::rng::Rng;
use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
///
/// Order is registration order and is what checkpoints and the optimizer use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Matrix>>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::Contract(format!("parameter {name:?} registered twice")));
        }
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(Arc::new(value));
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        Arc::make_mut(&mut self.values[id.0])
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Matrix) -> Result<()> {
        let current = self.get(id);
        if current.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "parameter {:?} is {}x{}, replacement is {}x{}",
                self.names[id.0],
                current.rows(),
                current.cols(),
                value.rows(),
                value.cols()
            )));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| v.as_ref()))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.values.iter().map(|v| tape.leaf_shared(Arc::clone(v))).collect(),
        }
    }
}

/// Parameters of a [`ParamStore`] recorded on one tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    /// Gradients in store order (zeros for parameters the root ignores).
    pub fn gradients(&self, grads: &Gradients) -> Vec<Matrix> {
        self.vars.iter().map(|v| grads.wrt(*v)).collect()
    }
}

/// Uniform(-bound, +bound) initializer.
pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Glorot normal initializer with the given gain.
pub fn xavier_normal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Matrix {
    let std = gain * (2.0 / (rows + cols) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_raw(rows, cols, data)
}
