use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Dense row-major tensor of `f64` with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        ensure!(n == data.len(), "shape {:?} holds {} values, got {}", shape, n, data.len());
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n], grad: None }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n], grad: None }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value], grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same data viewed with a different shape.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        ensure!(n == self.data.len(), "cannot reshape {:?} into {:?}", self.shape, shape);
        self.shape = shape;
        Ok(self)
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_matches_data_shape() {
        let mut t = Tensor::zeros(vec![3, 4]);
        assert!(t.grad().is_none());
        assert_eq!(t.grad_mut().len(), 12);
        t.grad_mut()[5] = 1.0;
        t.zero_grad();
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
    }
}
