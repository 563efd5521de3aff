//! Coefficient-space vectors aligned with a [`BasisSpec`](crate::BasisSpec)
//! index set.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex disk-harmonic coefficients, one per basis index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffVec(Vec<Complex64>);

impl CoeffVec {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_vec(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &CoeffVec) -> CoeffVec {
        CoeffVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &CoeffVec) -> CoeffVec {
        CoeffVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: Complex64) -> CoeffVec {
        CoeffVec(self.0.iter().map(|a| a * s).collect())
    }

    /// Entrywise product with real weights.
    pub fn weighted(&self, w: &RadialWeightVec) -> Result<CoeffVec> {
        check_len(self.len(), w.len())?;
        Ok(CoeffVec(
            self.0.iter().zip(w.values()).map(|(a, h)| a * h).collect(),
        ))
    }
}

impl Index<usize> for CoeffVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CoeffVec {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

/// Real weight per basis index, depending only on the root `lambda_nk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialWeightVec(Vec<f64>);

impl RadialWeightVec {
    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Entrywise product of two weight vectors.
    pub fn hadamard(&self, other: &RadialWeightVec) -> Result<RadialWeightVec> {
        check_len(self.len(), other.len())?;
        Ok(RadialWeightVec(
            self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect(),
        ))
    }
}

impl Index<usize> for RadialWeightVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}
