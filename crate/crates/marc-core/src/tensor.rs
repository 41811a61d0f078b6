//! Dense per-position feature storage.
//!
//! Inputs are a sequence of `positions` feature vectors of equal width `dim`
//! (token embeddings, or single-channel pixels with `dim = 1`), stored
//! row-major by position.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    positions: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureTensor<T> {
    pub fn new(positions: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != positions * dim {
            return Err(Error::shape(
                format!("{positions}x{dim} = {} values", positions * dim),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            positions,
            dim,
            data,
        })
    }

    pub fn zeros(positions: usize, dim: usize) -> Self {
        Self {
            positions,
            dim,
            data: vec![T::zero(); positions * dim],
        }
    }

    pub fn constant(positions: usize, dim: usize, value: T) -> Self {
        Self {
            positions,
            dim,
            data: vec![value; positions * dim],
        }
    }

    /// A chain of scalar features, one per position.
    pub fn from_scalars(values: &[T]) -> Self {
        Self {
            positions: values.len(),
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn position(&self, j: usize) -> &[T] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn position_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.positions == other.positions && self.dim == other.dim
    }

    pub fn shape_of(&self) -> String {
        format!("{}x{}", self.positions, self.dim)
    }

    /// Extract positions `[start, start + len)` into a new tensor.
    pub fn slice_positions(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.positions {
            return Err(Error::invalid_argument(format!(
                "slice [{start}, {}) out of bounds for {} positions",
                start + len,
                self.positions
            )));
        }
        Ok(Self {
            positions: len,
            dim: self.dim,
            data: self.data[start * self.dim..(start + len) * self.dim].to_vec(),
        })
    }
}
