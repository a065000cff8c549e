//! Dense grid fields and the norms used throughout the crate.
//!
//! Pixels are addressed as `(i, j)` with `i` the row (first coordinate) and
//! `j` the column (second coordinate). Storage is row-major, so pixel
//! `(i, j)` lives at `i * width + j`. The same `(i, j)` ordering is used for
//! displacement vectors, Jacobians and gradient components.

use std::fmt;

use crate::error::{Error, Result};

/// Grid dimensions of a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Self {
        Shape { width, height }
    }

    pub fn square(n: usize) -> Self {
        Shape::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("grid must be at least 1x1, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Common access to the flat component storage of a field.
pub trait Field {
    fn shape(&self) -> Shape;
    fn components(&self) -> &[f64];
}

/// Real-valued image on a rectangular pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarImage {
    shape: Shape,
    data: Vec<f64>,
}

impl ScalarImage {
    pub fn zeros(shape: Shape) -> Self {
        Self::constant(shape, 0.0)
    }

    pub fn constant(shape: Shape, value: f64) -> Self {
        assert!(!shape.is_empty(), "grid must be at least 1x1");
        ScalarImage { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch { expected: shape.len(), found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image values must be finite"));
        }
        Ok(ScalarImage { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(!shape.is_empty(), "grid must be at least 1x1");
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..shape.height {
            for j in 0..shape.width {
                data.push(f(i, j));
            }
        }
        ScalarImage { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.shape.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.shape.index(i, j);
        self.data[idx] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarImage { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Pixelwise combination of two images of the same shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_shape(self.shape, other.shape)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(ScalarImage { shape: self.shape, data })
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &Self) -> Result<()> {
        check_shape(self.shape, other.shape)?;
        self.data.iter_mut().zip(&other.data).for_each(|(s, &o)| *s += a * o);
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Field for ScalarImage {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn components(&self) -> &[f64] {
        &self.data
    }
}

/// A 2-vector per pixel, e.g. an image gradient or a dual variable.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    shape: Shape,
    data: Vec<[f64; 2]>,
}

impl VectorField2 {
    pub fn zeros(shape: Shape) -> Self {
        Self::constant(shape, [0.0, 0.0])
    }

    pub fn constant(shape: Shape, value: [f64; 2]) -> Self {
        assert!(!shape.is_empty(), "grid must be at least 1x1");
        VectorField2 { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<[f64; 2]>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch { expected: shape.len(), found: data.len() });
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("vector field values must be finite"));
        }
        Ok(VectorField2 { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        assert!(!shape.is_empty(), "grid must be at least 1x1");
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..shape.height {
            for j in 0..shape.width {
                data.push(f(i, j));
            }
        }
        VectorField2 { shape, data }
    }

    /// Builds a field from a flat `[a0, b0, a1, b1, ...]` component vector.
    pub fn from_flat(shape: Shape, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * shape.len() {
            return Err(Error::LengthMismatch { expected: 2 * shape.len(), found: flat.len() });
        }
        Self::from_vec(shape, flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.data[self.shape.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: [f64; 2]) {
        let idx = self.shape.index(i, j);
        self.data[idx] = value;
    }

    pub fn pixels(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    pub fn as_flat(&self) -> &[f64] {
        self.data.as_flattened()
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        self.data.as_flattened_mut()
    }

    pub fn map_pixels(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        VectorField2 { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &Self) -> Result<()> {
        check_shape(self.shape, other.shape)?;
        self.as_flat_mut()
            .iter_mut()
            .zip(other.as_flat())
            .for_each(|(s, &o)| *s += a * o);
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.as_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_flat().iter().all(|v| v.is_finite())
    }
}

impl Field for VectorField2 {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn components(&self) -> &[f64] {
        self.as_flat()
    }
}

pub(crate) fn check_shape(expected: Shape, found: Shape) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[inline]
pub fn pixel_norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
pub fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Sum over pixels of the pointwise Euclidean norm.
pub fn norm_21(f: &VectorField2) -> f64 {
    f.pixels().iter().map(|&v| pixel_norm(v)).sum()
}

/// Maximum over pixels of the pointwise Euclidean norm.
pub fn norm_2inf(f: &VectorField2) -> f64 {
    f.pixels().iter().fold(0.0, |m, &v| m.max(pixel_norm(v)))
}

/// Euclidean inner product over all components.
pub fn inner<F: Field>(f: &F, g: &F) -> Result<f64> {
    check_shape(f.shape(), g.shape())?;
    Ok(dot(f.components(), g.components()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_21_examples() {
        assert_eq!(norm_21(&VectorField2::zeros(Shape::square(3))), 0.0);
        let one = VectorField2::from_vec(Shape::new(1, 1), vec![[3.0, 4.0]]).unwrap();
        assert_eq!(norm_21(&one), 5.0);
        let two = VectorField2::from_vec(Shape::new(2, 1), vec![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(norm_21(&two), 2.0);
    }

    #[test]
    fn norm_2inf_examples() {
        assert_eq!(norm_2inf(&VectorField2::zeros(Shape::square(2))), 0.0);
        let f = VectorField2::from_vec(Shape::new(2, 1), vec![[3.0, 4.0], [1.0, 0.0]]).unwrap();
        assert_eq!(norm_2inf(&f), 5.0);
        let c = VectorField2::constant(Shape::new(3, 2), [-1.5, 0.0]);
        assert_eq!(norm_2inf(&c), 1.5);
    }

    #[test]
    fn inner_examples() {
        let s = Shape::new(1, 1);
        let f = VectorField2::from_vec(s, vec![[1.0, 2.0]]).unwrap();
        let g = VectorField2::from_vec(s, vec![[3.0, 4.0]]).unwrap();
        assert_eq!(inner(&f, &g).unwrap(), 11.0);
        assert_eq!(inner(&VectorField2::zeros(s), &g).unwrap(), 0.0);
        assert_eq!(inner(&f, &f).unwrap(), 5.0);
    }

    #[test]
    fn inner_rejects_mismatched_shapes() {
        let a = ScalarImage::zeros(Shape::new(2, 3));
        let b = ScalarImage::zeros(Shape::new(3, 2));
        assert!(matches!(inner(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(ScalarImage::from_vec(Shape::new(0, 3), vec![]).is_err());
        assert!(ScalarImage::from_vec(Shape::new(2, 2), vec![0.0; 3]).is_err());
        assert!(ScalarImage::from_vec(Shape::new(1, 1), vec![f64::NAN]).is_err());
        assert!(VectorField2::from_vec(Shape::new(1, 1), vec![[f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let img = ScalarImage::from_fn(Shape::new(3, 2), |i, j| (10 * i + j) as f64);
        assert_eq!(img.as_slice(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(img.get(1, 2), 12.0);
    }
}
