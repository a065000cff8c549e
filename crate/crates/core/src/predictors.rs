//! Primal-dual predictors `(x, y) -> (x_pred, y_pred)` for the transition
//! from one frame to the next.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::{dot2, norm_21, pixel_norm, ScalarImage, VectorField2};
use crate::operators::warp::{det2, inv2, mat_t_vec, mat_vec, rotation_matrix};
use crate::operators::{jacobian_of_displacement, GradOp, Motion, WarpOp};
use crate::prox::{prox_tv_conjugate_strong, TVRegulariser};

pub type Prediction = (ScalarImage, VectorField2);

/// A 2-vector counts as zero below this norm.
const VANISH: f64 = 1e-12;

/// Whether a dual rescaling targets total-variation or inner-product preservation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreserveMode {
    Tv,
    InnerProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `1 / (1 + exp(-1000 (t - 0.05)))`
    Sigmoid,
    /// `1 - |t - 1|^(1/5)`
    Power,
}

impl Activation {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-1000.0 * (t - 0.05)).exp()),
            Activation::Power => 1.0 - (t - 1.0).abs().powf(0.2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PredictorKind {
    NoPrediction,
    PrimalOnly,
    ZeroDual,
    ProximalOld { rho_tilde: f64 },
    PointwiseL2 { mode: PreserveMode },
    Rotation { mode: PreserveMode },
    Greedy { eps: f64 },
    StrictGreedy,
    GlobalTV { mode: PreserveMode, cg: CgOptions },
    DualScaling { chi: f64, activation: Activation },
}

impl PredictorKind {
    /// The eight predictors compared in the experiments, with default parameters.
    pub fn table_set(dual_scaling: PredictorKind) -> Vec<PredictorKind> {
        vec![
            dual_scaling,
            PredictorKind::Greedy { eps: 1e-12 },
            PredictorKind::NoPrediction,
            PredictorKind::PrimalOnly,
            PredictorKind::ProximalOld { rho_tilde: 100.0 },
            PredictorKind::Rotation { mode: PreserveMode::Tv },
            PredictorKind::StrictGreedy,
            PredictorKind::ZeroDual,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::NoPrediction => "no_prediction",
            PredictorKind::PrimalOnly => "primal_only",
            PredictorKind::ZeroDual => "zero_dual",
            PredictorKind::ProximalOld { .. } => "proximal_old",
            PredictorKind::PointwiseL2 { .. } => "pointwise_l2",
            PredictorKind::Rotation { .. } => "rotation",
            PredictorKind::Greedy { .. } => "greedy",
            PredictorKind::StrictGreedy => "strict_greedy",
            PredictorKind::GlobalTV { .. } => "global_tv",
            PredictorKind::DualScaling { .. } => "dual_scaling",
        }
    }

    pub fn predict(&self, ctx: &PredictContext, x: &ScalarImage, y: &VectorField2) -> Result<Prediction> {
        match *self {
            PredictorKind::NoPrediction => Ok(predict_identity(x, y)),
            PredictorKind::PrimalOnly => Ok(predict_primal_only(ctx, x, y)),
            PredictorKind::ZeroDual => Ok(predict_zero_dual(ctx, x, y)),
            PredictorKind::ProximalOld { rho_tilde } => predict_proximal_old(ctx, x, y, rho_tilde),
            PredictorKind::PointwiseL2 { mode } => predict_pointwise_l2(ctx, x, y, mode),
            PredictorKind::Rotation { mode } => Ok(predict_rotation(ctx, x, y, mode)),
            PredictorKind::Greedy { eps } => predict_greedy(ctx, x, y, eps),
            PredictorKind::StrictGreedy => Ok(predict_strict_greedy(ctx, x, y)),
            PredictorKind::GlobalTV { mode, cg } => predict_global_tv(ctx, x, y, mode, cg),
            PredictorKind::DualScaling { chi, activation } => {
                predict_dual_scaling(ctx, x, y, chi, activation)
            }
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    /// Parses a predictor name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "no_prediction" => PredictorKind::NoPrediction,
            "primal_only" => PredictorKind::PrimalOnly,
            "zero_dual" => PredictorKind::ZeroDual,
            "proximal_old" => PredictorKind::ProximalOld { rho_tilde: 100.0 },
            "pointwise_l2" => PredictorKind::PointwiseL2 { mode: PreserveMode::Tv },
            "rotation" => PredictorKind::Rotation { mode: PreserveMode::Tv },
            "greedy" => PredictorKind::Greedy { eps: 1e-12 },
            "strict_greedy" => PredictorKind::StrictGreedy,
            "global_tv" => PredictorKind::GlobalTV { mode: PreserveMode::Tv, cg: CgOptions::default() },
            "dual_scaling" => PredictorKind::DualScaling { chi: 0.75, activation: Activation::Power },
            other => return Err(Error::invalid(format!("unknown predictor '{other}'"))),
        })
    }
}

/// Frame-transition data available to a predictor.
#[derive(Clone, Copy, Debug)]
pub struct PredictContext {
    /// Measured displacement `v` from the current frame to the next.
    pub motion: Motion,
    pub grad: GradOp,
    pub alpha: f64,
    /// Dual step length, used by the proximal baseline.
    pub sigma: f64,
}

impl PredictContext {
    fn warp(&self) -> WarpOp {
        WarpOp::new(self.motion)
    }
}

pub fn predict_primal_warp(ctx: &PredictContext, x: &ScalarImage) -> ScalarImage {
    ctx.warp().apply(x)
}

pub fn predict_identity(x: &ScalarImage, y: &VectorField2) -> Prediction {
    (x.clone(), y.clone())
}

pub fn predict_primal_only(ctx: &PredictContext, x: &ScalarImage, y: &VectorField2) -> Prediction {
    (predict_primal_warp(ctx, x), y.clone())
}

pub fn predict_zero_dual(ctx: &PredictContext, x: &ScalarImage, y: &VectorField2) -> Prediction {
    (predict_primal_warp(ctx, x), VectorField2::zeros(y.shape()))
}

pub fn predict_proximal_old(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    rho_tilde: f64,
) -> Result<Prediction> {
    let xp = predict_primal_warp(ctx, x);
    let dxp = ctx.grad.apply(&xp);
    let dx = ctx.grad.apply(x);
    let s = ctx.sigma;
    let arg = VectorField2::from_vec(
        y.shape(),
        y.pixels()
            .iter()
            .zip(dxp.pixels().iter().zip(dx.pixels()))
            .map(|(v, (a, b))| [v[0] + s * (a[0] - b[0]), v[1] + s * (a[1] - b[1])])
            .collect(),
    )?;
    let reg = TVRegulariser::new(ctx.alpha)?;
    let yp = prox_tv_conjugate_strong(&reg, rho_tilde, s, &arg)?;
    Ok((xp, yp))
}

pub fn predict_pointwise_l2(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    mode: PreserveMode,
) -> Result<Prediction> {
    let warp = ctx.warp();
    let xp = warp.apply(x);
    let jac = jacobian_of_displacement(&ctx.motion, [0.0, 0.0]);
    let jinv = inv2(jac).ok_or_else(|| Error::Domain("singular displacement Jacobian".into()))?;
    let y_at_v = warp.apply_field(y);
    let yp = match mode {
        PreserveMode::InnerProduct => {
            let s = det2(jac).abs();
            y_at_v.map_pixels(|v| {
                let t = mat_vec(jinv, v);
                [s * t[0], s * t[1]]
            })
        }
        PreserveMode::Tv => {
            let dx_at_v = warp.apply_field(&ctx.grad.apply(x));
            let data = y_at_v
                .pixels()
                .iter()
                .zip(dx_at_v.pixels())
                .map(|(&v, &g)| {
                    let ng = pixel_norm(g);
                    if ng <= VANISH {
                        v
                    } else {
                        let s = pixel_norm(mat_t_vec(jac, g)) / ng;
                        let t = mat_vec(jinv, v);
                        [s * t[0], s * t[1]]
                    }
                })
                .collect();
            VectorField2::from_vec(y.shape(), data)?
        }
    };
    Ok((xp, yp))
}

/// Dual update at one pixel given `g = Dx` and `gp = D x_pred` there.
pub fn rotation_pixel(g: [f64; 2], gp: [f64; 2], v: [f64; 2], alpha: f64, mode: PreserveMode) -> [f64; 2] {
    let ng = pixel_norm(g);
    let ngp = pixel_norm(gp);
    match (ng > VANISH, ngp > VANISH) {
        (true, true) => {
            let theta = (g[0] * gp[1] - g[1] * gp[0]).atan2(dot2(g, gp));
            let r = mat_vec(rotation_matrix(theta), v);
            match mode {
                PreserveMode::Tv => r,
                PreserveMode::InnerProduct => {
                    let c = ngp / ng;
                    [r[0] / c, r[1] / c]
                }
            }
        }
        (true, false) => v,
        (false, true) => match mode {
            PreserveMode::Tv => [alpha * gp[0] / ngp, alpha * gp[1] / ngp],
            PreserveMode::InnerProduct => [0.0, 0.0],
        },
        (false, false) => [0.0, 0.0],
    }
}

/// Rotates `y` in place by the oriented angle from `Dx` to `D x_pred`.
pub fn predict_rotation(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    mode: PreserveMode,
) -> Prediction {
    let xp = predict_primal_warp(ctx, x);
    let dx = ctx.grad.apply(x);
    let dxp = ctx.grad.apply(&xp);
    let data = dx
        .pixels()
        .iter()
        .zip(dxp.pixels())
        .zip(y.pixels())
        .map(|((&g, &gp), &v)| rotation_pixel(g, gp, v, ctx.alpha, mode))
        .collect();
    let yp = VectorField2::from_vec(y.shape(), data).expect("rotation keeps values finite");
    (xp, yp)
}

/// Componentwise ratio update `y_i (Dx)_i / (D x_pred)_i` where the denominator exceeds `eps`.
pub fn predict_greedy(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    eps: f64,
) -> Result<Prediction> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("greedy tolerance must be positive, got {eps}")));
    }
    let xp = predict_primal_warp(ctx, x);
    let dx = ctx.grad.apply(x);
    let dxp = ctx.grad.apply(&xp);
    let mut yp = y.clone();
    for ((out, &a), &b) in yp.as_flat_mut().iter_mut().zip(dx.as_flat()).zip(dxp.as_flat()) {
        *out = greedy_component(a, b, *out, eps);
    }
    Ok((xp, yp))
}

#[inline]
pub fn greedy_component(dx: f64, dx_pred: f64, y: f64, eps: f64) -> f64 {
    if dx_pred.abs() > eps {
        dx / dx_pred * y
    } else {
        y
    }
}

pub fn predict_strict_greedy(ctx: &PredictContext, x: &ScalarImage, y: &VectorField2) -> Prediction {
    let warp = ctx.warp();
    let xp = warp.apply(x);
    let dx_at_v = warp.apply_field(&ctx.grad.apply(x));
    let y_at_v = warp.apply_field(y);
    let dxp = ctx.grad.apply(&xp);
    let mut yp = VectorField2::zeros(y.shape());
    for (out, ((&g, &v), &gp)) in yp
        .pixels_mut()
        .iter_mut()
        .zip(dx_at_v.pixels().iter().zip(y_at_v.pixels()).zip(dxp.pixels()))
    {
        let ng = pixel_norm(g);
        let s = if ng > VANISH { dot2(g, v) / ng } else { 0.0 };
        let ngp = pixel_norm(gp);
        let d = if ngp > VANISH { [gp[0] / ngp, gp[1] / ngp] } else { [1.0, 0.0] };
        *out = [s * d[0], s * d[1]];
    }
    (xp, yp)
}

/// Circular shift `(W x)(i, j) = x(i + d0, j + d1)` with wrap-around.
pub fn circular_shift(x: &ScalarImage, d: [i64; 2]) -> ScalarImage {
    let (h, w) = (x.height() as i64, x.width() as i64);
    ScalarImage::from_fn(x.shape(), |i, j| {
        let si = (i as i64 + d[0]).rem_euclid(h) as usize;
        let sj = (j as i64 + d[1]).rem_euclid(w) as usize;
        x.get(si, sj)
    })
}

/// Global preservation: `y_pred = D_dir z` with `D_dir* D_dir z = W D* Q y`.
///
/// `W` must be the identity or a whole-pixel translation, applied as a
/// circular shift, and the primal prediction is `W x`.
pub fn predict_global_tv(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    mode: PreserveMode,
    cg: CgOptions,
) -> Result<Prediction> {
    let shift = ctx.motion.integer_translation().ok_or_else(|| {
        Error::Unsupported(format!(
            "global TV predictor needs an identity or whole-pixel translation warp, got {:?}",
            ctx.motion
        ))
    })?;
    let xp = circular_shift(x, shift);
    let d = ctx.grad;
    let dd = GradOp::new(crate::operators::Boundary::Dirichlet, d.h);
    let q = match mode {
        PreserveMode::InnerProduct => 1.0,
        PreserveMode::Tv => {
            let denom = norm_21(&d.apply(x));
            if denom == 0.0 {
                return Err(Error::Domain("degenerate scale: |Dx|_{2,1} = 0".into()));
            }
            norm_21(&dd.apply(&xp)) / denom
        }
    };
    let mut rhs = d.adjoint(y);
    rhs.as_mut_slice().iter_mut().for_each(|v| *v *= q);
    let rhs = circular_shift(&rhs, shift);
    let z = conjugate_gradient(|v| dd.adjoint(&dd.apply(v)), &rhs, cg)?;
    Ok((xp, dd.apply(&z)))
}

/// Solves `A z = b` for symmetric positive definite `A`.
pub(crate) fn conjugate_gradient(
    a: impl Fn(&ScalarImage) -> ScalarImage,
    b: &ScalarImage,
    opts: CgOptions,
) -> Result<ScalarImage> {
    let shape = b.shape();
    let bnorm = b.norm();
    let mut z = ScalarImage::zeros(shape);
    if bnorm == 0.0 {
        return Ok(z);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm().powi(2);
    for _ in 0..opts.max_iter {
        if rr.sqrt() <= opts.tol * bnorm {
            return Ok(z);
        }
        let ap = a(&p);
        let pap = crate::field::dot(p.as_slice(), ap.as_slice());
        if !(pap > 0.0) {
            return Err(Error::Convergence("operator is not positive definite".into()));
        }
        let step = rr / pap;
        z.add_scaled(step, &p)?;
        r.add_scaled(-step, &ap)?;
        let rr_new = r.norm().powi(2);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pv, rv) in p.as_mut_slice().iter_mut().zip(r.as_slice()) {
            *pv = rv + beta * *pv;
        }
    }
    if rr.sqrt() <= opts.tol * bnorm {
        Ok(z)
    } else {
        Err(Error::Convergence(format!(
            "CG residual {:.3e} after {} iterations",
            rr.sqrt() / bnorm,
            opts.max_iter
        )))
    }
}

pub fn predict_dual_scaling(
    ctx: &PredictContext,
    x: &ScalarImage,
    y: &VectorField2,
    chi: f64,
    activation: Activation,
) -> Result<Prediction> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::invalid(format!("chi must lie in [0, 1], got {chi}")));
    }
    let xp = predict_primal_warp(ctx, x);
    let delta: Vec<f64> = xp.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).abs()).collect();
    let scale = delta.iter().fold(1e-12f64, |m, &v| m.max(v));
    let mut yp = y.clone();
    for (v, &d) in yp.pixels_mut().iter_mut().zip(&delta) {
        let c = 1.0 - chi * activation.eval(d / scale);
        v[0] *= c;
        v[1] *= c;
    }
    Ok((xp, yp))
}
