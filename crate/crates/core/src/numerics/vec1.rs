//! One-dimensional sample vectors, the universal waveform currency.

use crate::error::{Error, Result};
use crate::real::Real;
use std::ops::{Deref, Index};

/// A finite, non-empty 1-D vector of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Vec1<S>(Vec<S>);

impl<S: Real> Vec1<S> {
    /// Validates that `data` is non-empty and every entry is finite.
    pub fn new(data: Vec<S>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("Vec1 must hold at least one sample"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Vec1".into()));
        }
        Ok(Vec1(data))
    }

    /// Wraps data that is known finite (e.g. freshly computed from finite inputs).
    /// Checked in debug builds only.
    pub fn from_raw(data: Vec<S>) -> Self {
        debug_assert!(!data.is_empty());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Vec1(data)
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "Vec1 length must be >= 1");
        Vec1(vec![S::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: len >= 1
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> S {
        self.0.iter().fold(S::zero(), |acc, &v| acc + v * v)
    }

    /// Converts every sample through `f64` into another scalar type.
    pub fn cast<T: Real>(&self) -> Vec1<T> {
        Vec1(self
            .0
            .iter()
            .map(|&v| crate::real::from_f64(crate::real::to_f64(v)))
            .collect())
    }
}

impl<S: Real> Deref for Vec1<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S: Real> Index<usize> for Vec1<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl<S: Real> AsRef<[S]> for Vec1<S> {
    fn as_ref(&self) -> &[S] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Vec1::<f64>::new(vec![]).is_err());
        assert!(Vec1::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vec1::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(Vec1::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn energy_sums_squares() {
        let v = Vec1::new(vec![3.0f64, 4.0]).unwrap();
        assert_eq!(v.energy(), 25.0);
    }
}
