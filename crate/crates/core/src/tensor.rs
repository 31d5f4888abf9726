//! Dense f64 arrays of rank 0..=2.
//!
//! Deliberately minimal: the differentiation engine and the dense model only
//! need scalars, vectors, and matrices.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A dense array with row-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn shape_str(shape: &[usize]) -> String {
    format!("{shape:?}")
}

impl Tensor {
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        // The empty product makes a rank-0 shape hold one element.
        let len = shape.iter().product::<usize>();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Shape {
                op: "from_vec".into(),
                details: format!(
                    "shape {} needs {expected} elements, got {}",
                    shape_str(shape),
                    data.len()
                ),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// The single element of a rank-0 tensor.
    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
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

    pub fn rows(&self) -> usize {
        match self.shape.as_slice() {
            [r, _] => *r,
            [n] => *n,
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.as_slice() {
            [_, c] => *c,
            _ => 1,
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert_eq!(self.rank(), 2);
        let c = self.cols();
        self.data[row * c + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let c = self.cols();
        (0..self.rows()).map(|i| self.data[i * c + j]).collect()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if !self.same_shape(other) {
            return Err(Error::Shape {
                op: "zip".into(),
                details: format!(
                    "{} vs {}",
                    shape_str(&self.shape),
                    shape_str(&other.shape)
                ),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Accumulates `other` into `self` elementwise.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Matrix product. Vectors are treated as 1xN on the left and Nx1 on the
    /// right only when an explicit matrix shape is present on the other side;
    /// both operands must be rank 2 here to keep gradient rules simple.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k1) = match self.shape.as_slice() {
            [n, k] => (*n, *k),
            _ => {
                return Err(Error::Shape {
                    op: "matmul".into(),
                    details: format!("left operand has shape {}", shape_str(&self.shape)),
                })
            }
        };
        let (k2, m) = match other.shape.as_slice() {
            [k, m] => (*k, *m),
            _ => {
                return Err(Error::Shape {
                    op: "matmul".into(),
                    details: format!("right operand has shape {}", shape_str(&other.shape)),
                })
            }
        };
        if k1 != k2 {
            return Err(Error::Shape {
                op: "matmul".into(),
                details: format!("inner dims {k1} vs {k2}"),
            });
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let lhs_row = &self.data[i * k1..(i + 1) * k1];
            let out_row = &mut out[i * m..(i + 1) * m];
            for (k, &l) in lhs_row.iter().enumerate() {
                let rhs_row = &other.data[k * m..(k + 1) * m];
                for (o, &r) in out_row.iter_mut().zip(rhs_row.iter()) {
                    *o += l * r;
                }
            }
        }
        Tensor::from_vec(&[n, m], out)
    }

    pub fn transpose(&self) -> Tensor {
        match self.shape.as_slice() {
            [n, m] => {
                let mut out = vec![0.0; n * m];
                for i in 0..*n {
                    for j in 0..*m {
                        out[j * n + i] = self.data[i * m + j];
                    }
                }
                Tensor {
                    shape: vec![*m, *n],
                    data: out,
                }
            }
            _ => self.clone(),
        }
    }
}
