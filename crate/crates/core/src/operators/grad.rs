use crate::field::{ScalarImage, Shape, VectorField2};

/// Boundary rule for the forward differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// The difference leaving the grid is zero; constants are in the kernel.
    Neumann,
    /// The image is extended by zero, so the outward difference at the last
    /// row or column is `-x / h`. The resulting operator is injective.
    Dirichlet,
}

/// 2-D forward-difference gradient.
///
/// Component 0 differentiates along rows (`i`), component 1 along columns (`j`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradOp {
    pub boundary: Boundary,
    pub h: f64,
}

impl GradOp {
    pub fn new(boundary: Boundary, h: f64) -> Self {
        assert!(h > 0.0, "cell width must be positive");
        GradOp { boundary, h }
    }

    pub fn neumann() -> Self {
        GradOp::new(Boundary::Neumann, 1.0)
    }

    pub fn dirichlet() -> Self {
        GradOp::new(Boundary::Dirichlet, 1.0)
    }

    /// Analytic bound `sqrt(8) / h` on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        8f64.sqrt() / self.h
    }

    pub fn apply(&self, x: &ScalarImage) -> VectorField2 {
        let Shape { width, height } = x.shape();
        let inv_h = 1.0 / self.h;
        let src = x.as_slice();
        let mut out = VectorField2::zeros(Shape::new(width, height));
        let dst = out.pixels_mut();
        for i in 0..height {
            for j in 0..width {
                let idx = i * width + j;
                let v = src[idx];
                let di = if i + 1 < height {
                    src[idx + width] - v
                } else {
                    self.outward(v)
                };
                let dj = if j + 1 < width { src[idx + 1] - v } else { self.outward(v) };
                dst[idx] = [di * inv_h, dj * inv_h];
            }
        }
        out
    }

    /// Exact transpose of [`GradOp::apply`] (a negative divergence).
    pub fn adjoint(&self, y: &VectorField2) -> ScalarImage {
        let Shape { width, height } = y.shape();
        let inv_h = 1.0 / self.h;
        let dirichlet = self.boundary == Boundary::Dirichlet;
        let src = y.pixels();
        let mut out = ScalarImage::zeros(Shape::new(width, height));
        let dst = out.as_mut_slice();
        for i in 0..height {
            for j in 0..width {
                let idx = i * width + j;
                let [yi, yj] = src[idx];
                let mut acc = 0.0;
                if i + 1 < height || dirichlet {
                    acc -= yi;
                }
                if i > 0 {
                    acc += src[idx - width][0];
                }
                if j + 1 < width || dirichlet {
                    acc -= yj;
                }
                if j > 0 {
                    acc += src[idx - 1][1];
                }
                dst[idx] = acc * inv_h;
            }
        }
        out
    }

    #[inline]
    fn outward(&self, v: f64) -> f64 {
        match self.boundary {
            Boundary::Neumann => 0.0,
            Boundary::Dirichlet => -v,
        }
    }
}
