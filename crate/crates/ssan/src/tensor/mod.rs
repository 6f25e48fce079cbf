//! Dense f64 tensors with a tape-based reverse-mode differentiation engine.
//!
//! Everything model-sized in this crate is small enough that plain row-major
//! `Vec<f64>` storage with 64-bit precision is the right trade: gradient
//! checks need the precision and nothing here needs a GPU.

mod gradcheck;
mod optim;
mod tape;

pub use gradcheck::{
    check_gradients, numerical_gradient, relative_error, GradCheckReport, DEFAULT_STEP,
};
pub use optim::{AdamConfig, ParamStore};
pub use tape::{Tape, Var, GATE_BYPASS_THRESHOLD, GATE_EPSILON, LAYER_NORM_EPSILON};

/// Numerically stable logistic sigmoid on a plain f64.
pub fn stable_sigmoid_value(x: f64) -> f64 {
    tape::stable_sigmoid(x)
}

use crate::error::{Error, Result};
use rand::Rng;

/// Dense row-major f64 tensor. Immutable once built except through `data_mut`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// 1x1 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("from_rows: ragged or empty row list".into()));
        }
        let mut data = Vec::with_capacity(m * n);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            shape: vec![m, n],
            data,
        })
    }

    /// Uniform values in [-limit, limit], consumed deterministically from `rng`.
    pub fn uniform<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn as_scalar(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected scalar tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Number of rows when viewed as a 2-D matrix.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns when viewed as a 2-D matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, value: f64) {
        let c = self.cols();
        self.data[i * c + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transposed(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    /// Largest absolute entry; 0 for the impossible empty case.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}
