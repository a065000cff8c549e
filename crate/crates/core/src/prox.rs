//! Proximal maps and smooth-term gradients for TV denoising and Poisson PET.

use crate::error::{Error, Result};
use crate::field::{check_shape, pixel_norm, ScalarImage, VectorField2};
use crate::operators::RadonOp;

/// `F(x) = 1/2 |x - z|^2`.
#[derive(Clone, Debug)]
pub struct DataTermL2 {
    pub z: ScalarImage,
}

impl DataTermL2 {
    pub fn new(z: ScalarImage) -> Self {
        DataTermL2 { z }
    }

    pub fn gamma(&self) -> f64 {
        1.0
    }

    pub fn value(&self, x: &ScalarImage) -> Result<f64> {
        check_shape(self.z.shape(), x.shape())?;
        Ok(0.5
            * x.as_slice()
                .iter()
                .zip(self.z.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>())
    }
}

/// `E(x) = sum_i [Ax]_i - z_i log([Ax + c]_i)` over the active sinogram entries.
#[derive(Clone, Debug)]
pub struct DataTermPoisson {
    pub a: RadonOp,
    z: Vec<f64>,
    c: Vec<f64>,
    /// Fixed Lipschitz bound used for stepping.
    pub lipschitz: f64,
}

impl DataTermPoisson {
    pub fn new(a: RadonOp, z: &[u64], c: Vec<f64>, lipschitz: f64) -> Result<Self> {
        let n = a.n_rows();
        if z.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: z.len() });
        }
        if c.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: c.len() });
        }
        if c.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("background must be finite and nonnegative"));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::invalid(format!("Lipschitz bound must be >= 0, got {lipschitz}")));
        }
        Ok(DataTermPoisson { a, z: z.iter().map(|&k| k as f64).collect(), c, lipschitz })
    }

    pub fn counts(&self) -> &[f64] {
        &self.z
    }

    pub fn background(&self) -> &[f64] {
        &self.c
    }

    fn forward(&self, x: &ScalarImage) -> Result<Vec<f64>> {
        let mut ax = self.a.apply(x)?;
        let mask = self.a.mask();
        for (r, v) in ax.iter_mut().enumerate() {
            if !mask[r] {
                continue;
            }
            *v += self.c[r];
            if !(*v > 0.0) {
                return Err(Error::Domain(format!(
                    "Ax + c = {v} is not positive at sinogram entry {r}"
                )));
            }
        }
        Ok(ax)
    }

    pub fn value(&self, x: &ScalarImage) -> Result<f64> {
        let axc = self.forward(x)?;
        let mask = self.a.mask();
        let mut total = 0.0;
        for r in 0..axc.len() {
            if !mask[r] {
                continue;
            }
            total += axc[r] - self.c[r];
            if self.z[r] > 0.0 {
                total -= self.z[r] * axc[r].ln();
            }
        }
        Ok(total)
    }

    pub fn grad(&self, x: &ScalarImage) -> Result<ScalarImage> {
        let axc = self.forward(x)?;
        let mask = self.a.mask();
        let resid: Vec<f64> = (0..axc.len())
            .map(|r| if mask[r] { 1.0 - self.z[r] / axc[r] } else { 0.0 })
            .collect();
        self.a.adjoint(&resid)
    }
}

/// `G = alpha |.|_{2,1}`; its conjugate is the indicator of the `alpha`-ball in `|.|_{2,inf}`.
/// `alpha = 0` switches the regulariser off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TVRegulariser {
    pub alpha: f64,
}

impl TVRegulariser {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(TVRegulariser { alpha })
    }

    pub fn value(&self, dx: &VectorField2) -> f64 {
        self.alpha * crate::field::norm_21(dx)
    }

    /// `G*(y)`: zero on the feasible ball (with a `1e-12` slack), `+inf` outside.
    pub fn conjugate(&self, y: &VectorField2) -> f64 {
        if crate::field::norm_2inf(y) <= self.alpha + 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Either data term of the two experiment families.
#[derive(Clone, Debug)]
pub enum DataTerm {
    /// `F = 1/2 |x - z|^2`, `E = 0`.
    L2(DataTermL2),
    /// `F = indicator of x >= 0`, `E` the Poisson negative log-likelihood.
    Poisson(DataTermPoisson),
}

impl DataTerm {
    pub fn prox_f(&self, tau: f64, x: &ScalarImage) -> Result<ScalarImage> {
        match self {
            DataTerm::L2(t) => prox_l2_data(t, tau, x),
            DataTerm::Poisson(_) => Ok(prox_nonneg(tau, x)),
        }
    }

    /// `grad E`, or `None` when `E = 0`.
    pub fn grad_e(&self, x: &ScalarImage) -> Option<Result<ScalarImage>> {
        match self {
            DataTerm::L2(_) => None,
            DataTerm::Poisson(t) => Some(grad_poisson(t, x)),
        }
    }

    /// `F(x) + E(x)`, with `+inf` outside the domain.
    pub fn value(&self, x: &ScalarImage) -> Result<f64> {
        match self {
            DataTerm::L2(t) => t.value(x),
            DataTerm::Poisson(t) => {
                if x.as_slice().iter().any(|&v| v < 0.0) {
                    return Ok(f64::INFINITY);
                }
                match t.value(x) {
                    Err(Error::Domain(_)) => Ok(f64::INFINITY),
                    other => other,
                }
            }
        }
    }

    pub fn gamma_f(&self) -> f64 {
        match self {
            DataTerm::L2(t) => t.gamma(),
            DataTerm::Poisson(_) => 0.0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            DataTerm::L2(_) => 0.0,
            DataTerm::Poisson(t) => t.lipschitz,
        }
    }

    pub fn shape(&self) -> crate::field::Shape {
        match self {
            DataTerm::L2(t) => t.z.shape(),
            DataTerm::Poisson(t) => t.a.shape(),
        }
    }
}

pub fn prox_l2_data(t: &DataTermL2, tau: f64, x: &ScalarImage) -> Result<ScalarImage> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    x.zip_map(&t.z, |xi, zi| (xi + tau * zi) / (1.0 + tau))
}

pub fn prox_nonneg(_tau: f64, x: &ScalarImage) -> ScalarImage {
    x.map(|v| v.max(0.0))
}

pub fn grad_poisson(t: &DataTermPoisson, x: &ScalarImage) -> Result<ScalarImage> {
    t.grad(x)
}

#[inline]
pub(crate) fn project_ball(v: [f64; 2], alpha: f64) -> [f64; 2] {
    let n = pixel_norm(v);
    if n <= alpha {
        v
    } else {
        let s = alpha / n;
        [v[0] * s, v[1] * s]
    }
}

/// Pixelwise projection onto the `alpha`-ball; independent of `sigma`.
pub fn prox_tv_conjugate(r: &TVRegulariser, _sigma: f64, y: &VectorField2) -> VectorField2 {
    y.map_pixels(|v| project_ball(v, r.alpha))
}

/// Prox of `sigma (G* + rho_tilde/2 |.|^2)`: shrink by `1 + sigma rho_tilde`, then project.
pub fn prox_tv_conjugate_strong(
    r: &TVRegulariser,
    rho_tilde: f64,
    sigma: f64,
    y: &VectorField2,
) -> Result<VectorField2> {
    if !(rho_tilde >= 0.0) || !(sigma >= 0.0) {
        return Err(Error::invalid("sigma and rho_tilde must be nonnegative"));
    }
    let s = 1.0 / (1.0 + sigma * rho_tilde);
    Ok(y.map_pixels(|v| project_ball([v[0] * s, v[1] * s], r.alpha)))
}

/// Running Lipschitz estimate `max(L_prev, 0.9 |grad E(x) - grad E(x_pred)| / |x - x_pred|)`.
/// Diagnostic only; stepping uses the fixed bound.
pub fn lipschitz_estimate(
    prev: f64,
    t: &DataTermPoisson,
    x: &ScalarImage,
    x_pred: &ScalarImage,
) -> Result<f64> {
    let dx = x.zip_map(x_pred, |a, b| a - b)?;
    let n = dx.norm();
    if n == 0.0 {
        return Ok(prev);
    }
    let g = t.grad(x)?.zip_map(&t.grad(x_pred)?, |a, b| a - b)?;
    Ok(prev.max(0.9 * g.norm() / n))
}
