//! Ray-driven parallel-beam Radon projector.
//!
//! Angles are uniform on `[0, pi)`. Detector bins are centred on the image
//! centre with spacing `max(width, height) / n_bins`, so the bins span the
//! inscribed disk. Each ray is sampled every half pixel and the image is
//! interpolated bilinearly, with zero outside the grid. The discretised
//! operator is stored as a sparse matrix whose rows are sinogram entries
//! `angle * n_bins + bin`; the adjoint is its exact transpose.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{ScalarImage, Shape};

const SAMPLE_STEP: f64 = 0.5;

#[derive(Debug)]
struct Csr {
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RadonOp {
    shape: Shape,
    n_angles: usize,
    n_bins: usize,
    ray_scale: f64,
    matrix: Arc<Csr>,
    mask: Arc<Vec<bool>>,
}

impl RadonOp {
    /// Full (unmasked) projector. `ray_scale` multiplies every line integral.
    pub fn new(shape: Shape, n_angles: usize, n_bins: usize, ray_scale: f64) -> Result<Self> {
        if n_angles == 0 || n_bins == 0 {
            return Err(Error::invalid("sinogram must have at least one angle and one bin"));
        }
        if !(ray_scale > 0.0 && ray_scale.is_finite()) {
            return Err(Error::invalid(format!("ray scale must be positive, got {ray_scale}")));
        }
        let matrix = Arc::new(build_matrix(shape, n_angles, n_bins, ray_scale));
        Ok(RadonOp {
            shape,
            n_angles,
            n_bins,
            ray_scale,
            matrix,
            mask: Arc::new(vec![true; n_angles * n_bins]),
        })
    }

    /// Same geometry with a different active-entry mask. The matrix is shared.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n_rows() {
            return Err(Error::LengthMismatch { expected: self.n_rows(), found: mask.len() });
        }
        Ok(RadonOp { mask: Arc::new(mask), ..self.clone() })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn ray_scale(&self) -> f64 {
        self.ray_scale
    }

    pub fn n_rows(&self) -> usize {
        self.n_angles * self.n_bins
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn angle(&self, a: usize) -> f64 {
        std::f64::consts::PI * a as f64 / self.n_angles as f64
    }

    pub fn apply(&self, x: &ScalarImage) -> Result<Vec<f64>> {
        crate::field::check_shape(self.shape, x.shape())?;
        Ok(self.apply_slice(x.as_slice()))
    }

    pub fn adjoint(&self, s: &[f64]) -> Result<ScalarImage> {
        if s.len() != self.n_rows() {
            return Err(Error::LengthMismatch { expected: self.n_rows(), found: s.len() });
        }
        ScalarImage::from_vec(self.shape, self.adjoint_slice(s))
    }

    pub(crate) fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        let m = &*self.matrix;
        (0..self.n_rows())
            .map(|r| {
                if !self.mask[r] {
                    return 0.0;
                }
                let (lo, hi) = (m.row_ptr[r], m.row_ptr[r + 1]);
                m.col[lo..hi].iter().zip(&m.val[lo..hi]).map(|(&c, &v)| v * x[c as usize]).sum()
            })
            .collect()
    }

    pub(crate) fn adjoint_slice(&self, s: &[f64]) -> Vec<f64> {
        let m = &*self.matrix;
        let mut out = vec![0.0; self.shape.len()];
        for r in 0..self.n_rows() {
            if !self.mask[r] || s[r] == 0.0 {
                continue;
            }
            let (lo, hi) = (m.row_ptr[r], m.row_ptr[r + 1]);
            for (&c, &v) in m.col[lo..hi].iter().zip(&m.val[lo..hi]) {
                out[c as usize] += v * s[r];
            }
        }
        out
    }
}

fn build_matrix(shape: Shape, n_angles: usize, n_bins: usize, ray_scale: f64) -> Csr {
    let (h, w) = (shape.height, shape.width);
    let ci = (h as f64 - 1.0) / 2.0;
    let cj = (w as f64 - 1.0) / 2.0;
    let extent = h.max(w) as f64;
    let spacing = extent / n_bins as f64;
    let half_len = 0.5 * ((h * h + w * w) as f64).sqrt() + 1.0;
    let n_samples = (2.0 * half_len / SAMPLE_STEP).ceil() as usize;

    let mut row_ptr = Vec::with_capacity(n_angles * n_bins + 1);
    let mut col = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0);
    let mut acc = vec![0.0; shape.len()];
    let mut touched: Vec<usize> = Vec::new();

    for a in 0..n_angles {
        let theta = std::f64::consts::PI * a as f64 / n_angles as f64;
        let (st, ct) = theta.sin_cos();
        // Ray direction and detector axis in (row, column) coordinates.
        let dir = [ct, st];
        let nrm = [-st, ct];
        for b in 0..n_bins {
            let s = (b as f64 + 0.5 - n_bins as f64 / 2.0) * spacing;
            for m in 0..n_samples {
                let t = -half_len + (m as f64 + 0.5) * SAMPLE_STEP;
                let pi = ci + s * nrm[0] + t * dir[0];
                let pj = cj + s * nrm[1] + t * dir[1];
                if pi <= -1.0 || pj <= -1.0 || pi >= h as f64 || pj >= w as f64 {
                    continue;
                }
                let i0 = pi.floor();
                let j0 = pj.floor();
                let fi = pi - i0;
                let fj = pj - j0;
                let weights = [
                    (i0, j0, (1.0 - fi) * (1.0 - fj)),
                    (i0, j0 + 1.0, (1.0 - fi) * fj),
                    (i0 + 1.0, j0, fi * (1.0 - fj)),
                    (i0 + 1.0, j0 + 1.0, fi * fj),
                ];
                for (ii, jj, wgt) in weights {
                    if wgt == 0.0 || ii < 0.0 || jj < 0.0 || ii >= h as f64 || jj >= w as f64 {
                        continue;
                    }
                    let k = shape.index(ii as usize, jj as usize);
                    if acc[k] == 0.0 {
                        touched.push(k);
                    }
                    acc[k] += wgt * SAMPLE_STEP * ray_scale;
                }
            }
            touched.sort_unstable();
            for &k in &touched {
                col.push(k as u32);
                val.push(acc[k]);
                acc[k] = 0.0;
            }
            touched.clear();
            row_ptr.push(col.len());
        }
    }
    Csr { row_ptr, col, val }
}
