//! Dense 64-bit float vectors and row-major matrices.
//!
//! This is the only value type the differentiation tape operates on. No
//! broadcasting: every operation states the exact shapes it accepts.

use std::fmt;

use rand::Rng;

/// Shape of a [`Tensor`]: a flat vector or a row-major matrix.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalars are represented as length-1 vectors.
    pub fn is_scalar(&self) -> bool {
        matches!(*self, Shape::Vector(1))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Vector(n) => write!(f, "vector({n})"),
            Shape::Matrix(r, c) => write!(f, "matrix({r}x{c})"),
        }
    }
}

/// Contiguous f64 storage with a [`Shape`]. Matrices are row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        Tensor {
            shape: Shape::Matrix(rows, cols),
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Entries drawn uniformly from `[-bound, bound)`.
    pub fn uniform<R: Rng>(shape: Shape, bound: f64, rng: &mut R) -> Self {
        let data = (0..shape.len()).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
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

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.data[i] = value;
    }

    /// Matrix entry at `(row, col)`; panics if the tensor is a vector.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        match self.shape {
            Shape::Matrix(_, c) => self.data[row * c + col],
            Shape::Vector(_) => panic!("at() on a vector tensor"),
        }
    }

    /// Row `r` of a matrix as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        match self.shape {
            Shape::Matrix(rows, cols) => {
                assert!(r < rows, "row {r} out of range for {} rows", rows);
                &self.data[r * cols..(r + 1) * cols]
            }
            Shape::Vector(_) => panic!("row() on a vector tensor"),
        }
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        match self.shape {
            Shape::Matrix(rows, cols) => {
                assert!(r < rows, "row {r} out of range for {} rows", rows);
                &mut self.data[r * cols..(r + 1) * cols]
            }
            Shape::Vector(_) => panic!("row_mut() on a vector tensor"),
        }
    }

    /// A scalar tensor's single value.
    pub fn scalar_value(&self) -> f64 {
        assert!(self.shape.is_scalar(), "scalar_value() on {}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Elementwise `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }
}

/// Cosine similarity between two equal-length slices; 0.0 when either norm is 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine length mismatch");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
