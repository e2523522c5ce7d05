use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dense::Tensor;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Ordered, named group of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its position.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Glorot-uniform `[fan_in, fan_out]` matrix.
    pub fn push_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> usize {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        self.push(name, Tensor::matrix(fan_in, fan_out, data).expect("glorot shape"))
    }

    pub fn push_normal(&mut self, name: impl Into<String>, rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> usize {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.push(name, Tensor::matrix(rows, cols, data).expect("normal shape"))
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        self.push(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Same names, new tensors (shapes must match).
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::invalid("parameter count mismatch"));
        }
        for (a, b) in self.tensors.iter().zip(&tensors) {
            if a.shape() != b.shape() {
                return Err(Error::shape("ParamSet::with_tensors", a.shape(), b.shape()));
            }
        }
        Ok(Self {
            names: self.names.clone(),
            tensors,
        })
    }

    /// Records every tensor as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Records every tensor as a constant (no gradient).
    pub fn register_constant(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Flattened values in order, for finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, k: usize, v: f64) {
        let mut k = k;
        for t in &mut self.tensors {
            if k < t.numel() {
                t.data_mut()[k] = v;
                return;
            }
            k -= t.numel();
        }
        panic!("flat index out of range");
    }

    /// Appends another set's tensors, prefixing their names.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (n, t) in other.names.iter().zip(&other.tensors) {
            self.push(format!("{prefix}{n}"), t.clone());
        }
    }
}
