//! Rigid displacements and the bilinear warps they induce.

use crate::field::{ScalarImage, Shape, VectorField2};

pub type Mat2 = [[f64; 2]; 2];

/// A rigid motion of the pixel plane, `xi -> v(xi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    /// `v(xi) = xi + d`.
    Translation([f64; 2]),
    /// `v(xi) = R(angle) (xi - center) + center`.
    Rotation { angle: f64, center: [f64; 2] },
}

impl Motion {
    pub fn identity() -> Self {
        Motion::Translation([0.0, 0.0])
    }

    #[inline]
    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            Motion::Translation(d) => [p[0] + d[0], p[1] + d[1]],
            Motion::Rotation { angle, center } => {
                let r = rotation_matrix(angle);
                let q = [p[0] - center[0], p[1] - center[1]];
                let rq = mat_vec(r, q);
                [rq[0] + center[0], rq[1] + center[1]]
            }
        }
    }

    pub fn inverse(&self) -> Motion {
        match *self {
            Motion::Translation(d) => Motion::Translation([-d[0], -d[1]]),
            Motion::Rotation { angle, center } => Motion::Rotation { angle: -angle, center },
        }
    }

    /// Whether this is a translation by whole pixels (including the identity).
    pub fn integer_translation(&self) -> Option<[i64; 2]> {
        match *self {
            Motion::Translation(d) if d[0].fract() == 0.0 && d[1].fract() == 0.0 => {
                Some([d[0] as i64, d[1] as i64])
            }
            Motion::Rotation { angle, .. } if angle == 0.0 => Some([0, 0]),
            _ => None,
        }
    }
}

/// True and measured motion between two consecutive frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Displacement {
    pub truth: Motion,
    pub measured: Motion,
}

impl Displacement {
    pub fn none() -> Self {
        Displacement { truth: Motion::identity(), measured: Motion::identity() }
    }
}

pub fn rotation_matrix(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

#[inline]
pub fn mat_vec(m: Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[inline]
pub fn mat_t_vec(m: Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[1][0] * v[1], m[0][1] * v[0] + m[1][1] * v[1]]
}

pub fn det2(m: Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inv2(m: Mat2) -> Option<Mat2> {
    let det = det2(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Spatial Jacobian of `v` at `xi`. Both supported motions have a constant
/// Jacobian, so `xi` is unused.
pub fn jacobian_of_displacement(motion: &Motion, _xi: [f64; 2]) -> Mat2 {
    match *motion {
        Motion::Translation(_) => [[1.0, 0.0], [0.0, 1.0]],
        Motion::Rotation { angle, .. } => rotation_matrix(angle),
    }
}

/// Bilinear interpolation stencil at a point, clamped to the grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

impl Stencil {
    #[inline]
    pub fn at(shape: Shape, p: [f64; 2]) -> Stencil {
        let max_i = (shape.height - 1) as f64;
        let max_j = (shape.width - 1) as f64;
        let pi = p[0].clamp(0.0, max_i);
        let pj = p[1].clamp(0.0, max_j);
        let i0 = pi.floor() as usize;
        let j0 = pj.floor() as usize;
        let i1 = (i0 + 1).min(shape.height - 1);
        let j1 = (j0 + 1).min(shape.width - 1);
        let fi = pi - i0 as f64;
        let fj = pj - j0 as f64;
        Stencil {
            idx: [
                shape.index(i0, j0),
                shape.index(i0, j1),
                shape.index(i1, j0),
                shape.index(i1, j1),
            ],
            w: [(1.0 - fi) * (1.0 - fj), (1.0 - fi) * fj, fi * (1.0 - fj), fi * fj],
        }
    }

    #[inline]
    pub fn sample(&self, data: &[f64]) -> f64 {
        self.idx.iter().zip(&self.w).map(|(&k, &w)| w * data[k]).sum()
    }

    #[inline]
    pub fn sample2(&self, data: &[[f64; 2]]) -> [f64; 2] {
        let mut out = [0.0, 0.0];
        for (&k, &w) in self.idx.iter().zip(&self.w) {
            out[0] += w * data[k][0];
            out[1] += w * data[k][1];
        }
        out
    }
}

/// The warp `(W x)(xi) = x(v(xi))` with clamped bilinear interpolation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpOp {
    pub motion: Motion,
}

impl WarpOp {
    pub fn new(motion: Motion) -> Self {
        WarpOp { motion }
    }

    fn stencils(&self, shape: Shape) -> impl Iterator<Item = Stencil> + '_ {
        (0..shape.height).flat_map(move |i| {
            (0..shape.width)
                .map(move |j| Stencil::at(shape, self.motion.map([i as f64, j as f64])))
        })
    }

    pub fn apply(&self, x: &ScalarImage) -> ScalarImage {
        let shape = x.shape();
        let src = x.as_slice();
        let data = self.stencils(shape).map(|s| s.sample(src)).collect();
        ScalarImage::from_vec(shape, data).expect("warp preserves finiteness")
    }

    /// Samples each component of a vector field at `v(xi)`.
    pub fn apply_field(&self, y: &VectorField2) -> VectorField2 {
        let shape = y.shape();
        let src = y.pixels();
        let data = self.stencils(shape).map(|s| s.sample2(src)).collect();
        VectorField2::from_vec(shape, data).expect("warp preserves finiteness")
    }

    /// Transpose of [`WarpOp::apply`]: scatters each output pixel back onto
    /// its interpolation stencil.
    pub fn adjoint(&self, r: &ScalarImage) -> ScalarImage {
        let shape = r.shape();
        let src = r.as_slice();
        let mut out = ScalarImage::zeros(shape);
        let dst = out.as_mut_slice();
        for (s, &val) in self.stencils(shape).zip(src) {
            for (&k, &w) in s.idx.iter().zip(&s.w) {
                dst[k] += w * val;
            }
        }
        out
    }
}
