//! Named trainable parameters.

use crate::real::Real;

/// A named parameter block with its gradient accumulator.
///
/// Shape is `(rows, cols)`: conv kernels are `(out_channels, in_channels * kernel)`,
/// biases and magnitudes are `(channels, 1)`.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    rows: usize,
    cols: usize,
    pub values: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Real> Param<S> {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, values: Vec<S>) -> Self {
        assert_eq!(values.len(), rows * cols, "param shape mismatch");
        let grad = vec![S::zero(); values.len()];
        Param {
            name: name.into(),
            rows,
            cols,
            values,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, rows, cols, vec![S::zero(); rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = S::zero();
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.grad.len());
        for (g, &d) in self.grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn cast<T: Real>(&self) -> Param<T> {
        Param::new(
            self.name.clone(),
            self.rows,
            self.cols,
            self.values
                .iter()
                .map(|&v| crate::real::from_f64(crate::real::to_f64(v)))
                .collect(),
        )
    }
}
