use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f32` tensor. The last dimension varies fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f32) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::dim("tensor", format!("zero-sized dimension in {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("dims {dims:?} need {len} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the buffer with new dims of the same element count.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {dims:?} changes element count", self.dims),
            ));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: f32) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum()
    }

    /// Index of the largest element; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn expect_dims(&self, layer: &str, what: &str, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::dim(
                layer,
                format!("{what}: expected {dims:?}, got {:?}", self.dims),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, layer: &str, what: &str, rank: usize) -> Result<()> {
        if self.dims.len() != rank {
            return Err(Error::dim(
                layer,
                format!("{what}: expected rank {rank}, got dims {:?}", self.dims),
            ));
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::Dimension { .. })
        ));
        assert!(Tensor::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let t = Tensor::from_vec(&[4], vec![1.0, 3.0, 3.0, 2.0]).unwrap();
        assert_eq!(t.argmax(), 1);
    }

    #[test]
    fn bit_eq_distinguishes_signed_zero() {
        let a = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![-0.0]).unwrap();
        assert_eq!(a, b);
        assert!(!a.bit_eq(&b));
    }
}
