//! Computable checks of the theory: static saddle points, duality gaps,
//! preservation residuals and prediction-penalty bounds.

use crate::error::{Error, Result};
use crate::field::{inner, norm_21, norm_2inf, ScalarImage, Shape, VectorField2};
use crate::operators::{op_norm_estimate, GradOp, WarpOp};
use crate::popd::{FrameProblem, StepParams};
use crate::prox::{prox_tv_conjugate, DataTerm};

#[derive(Clone, Debug)]
pub struct StaticSaddle {
    pub x_opt: ScalarImage,
    pub y_opt: VectorField2,
    /// Primal-dual gap for the quadratic data term, otherwise the scaled
    /// iterate-difference residual.
    pub gap_achieved: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Primal objective `F(x) + E(x) + alpha |Dx|_{2,1}`.
pub fn primal_objective(problem: &FrameProblem, x: &ScalarImage) -> Result<f64> {
    Ok(problem.data.value(x)? + problem.reg.value(&problem.grad.apply(x)))
}

/// Dual objective of the quadratic data term, `<D* y, z> - |D* y|^2 / 2`.
fn l2_dual_objective(z: &ScalarImage, dty: &ScalarImage) -> f64 {
    let lin: f64 = dty.as_slice().iter().zip(z.as_slice()).map(|(a, b)| a * b).sum();
    lin - 0.5 * dty.norm().powi(2)
}

/// Solves the static problem of one frame by primal-dual proximal splitting.
///
/// The quadratic data term uses the accelerated variant for its unit strong
/// convexity and stops on the primal-dual gap; the Poisson term uses constant
/// steps and stops on the iterate-difference residual. The best pair seen is
/// returned, so `gap_achieved` is nonincreasing in `max_iters`.
pub fn solve_static(problem: &FrameProblem, max_iters: usize, gap_tol: f64) -> Result<StaticSaddle> {
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let shape = problem.shape();
    let k_norm = problem.grad.norm_bound();
    let mut x = ScalarImage::zeros(shape);
    let mut y = VectorField2::zeros(shape);
    let mut best: Option<(f64, ScalarImage, VectorField2)> = None;
    let mut iterations = 0;

    match &problem.data {
        DataTerm::L2(t) => {
            let mut tau = 1.0 / k_norm;
            let mut sigma = 1.0 / k_norm;
            let gamma = t.gamma();
            let mut x_bar = x.clone();
            for it in 1..=max_iters {
                iterations = it;
                let mut w = y.clone();
                w.add_scaled(sigma, &problem.grad.apply(&x_bar))?;
                y = prox_tv_conjugate(&problem.reg, sigma, &w);
                let mut v = x.clone();
                v.add_scaled(-tau, &problem.grad.adjoint(&y))?;
                let x_new = problem.data.prox_f(tau, &v)?;
                let theta = 1.0 / (1.0 + 2.0 * gamma * tau).sqrt();
                tau *= theta;
                sigma /= theta;
                x_bar = x_new.zip_map(&x, |a, b| a + theta * (a - b))?;
                x = x_new;
                // Pair each dual iterate with the minimiser of the Lagrangian
                // in x, so the reported gap is exactly P(x_y) - D(y).
                let dty = problem.grad.adjoint(&y);
                let x_y = t.z.zip_map(&dty, |a, b| a - b)?;
                let gap = primal_objective(problem, &x_y)? - l2_dual_objective(&t.z, &dty);
                if best.as_ref().is_none_or(|b| gap < b.0) {
                    best = Some((gap, x_y, y.clone()));
                }
                if gap <= gap_tol {
                    break;
                }
            }
        }
        DataTerm::Poisson(_) => {
            let lip = problem.data.lipschitz();
            let tau = if lip > 0.0 { 0.5 / lip } else { 1.0 / k_norm };
            let sigma = (1.0 - tau * lip) / (tau * k_norm * k_norm);
            for it in 1..=max_iters {
                iterations = it;
                let mut v = x.clone();
                if let Some(g) = problem.data.grad_e(&x) {
                    v.add_scaled(-tau, &g?)?;
                }
                v.add_scaled(-tau, &problem.grad.adjoint(&y))?;
                let x_new = problem.data.prox_f(tau, &v)?;
                let over = x_new.zip_map(&x, |a, b| 2.0 * a - b)?;
                let mut w = y.clone();
                w.add_scaled(sigma, &problem.grad.apply(&over))?;
                let y_new = prox_tv_conjugate(&problem.reg, sigma, &w);
                let dx = x_new.zip_map(&x, |a, b| a - b)?.norm() / tau;
                let mut dyf = y_new.clone();
                dyf.add_scaled(-1.0, &y)?;
                let resid = dx + dyf.norm() / sigma;
                x = x_new;
                y = y_new;
                if best.as_ref().is_none_or(|b| resid < b.0) {
                    best = Some((resid, x.clone(), y.clone()));
                }
                if resid <= gap_tol {
                    break;
                }
            }
        }
    }
    let (gap, x_opt, y_opt) = best.expect("at least one iteration ran");
    Ok(StaticSaddle { x_opt, y_opt, gap_achieved: gap, iterations, converged: gap <= gap_tol })
}

/// Lagrangian duality gap of `(x, y)` against the reference `(x_ref, y_ref)`,
/// scaled by `eta`. An infeasible `y` gives `+inf`.
pub fn duality_gap(
    problem: &FrameProblem,
    u: (&ScalarImage, &VectorField2),
    u_ref: (&ScalarImage, &VectorField2),
    eta: f64,
) -> Result<f64> {
    let (x, y) = u;
    let (xr, yr) = u_ref;
    if problem.reg.conjugate(yr).is_infinite() {
        return Err(Error::invalid("reference dual is infeasible"));
    }
    let gy = problem.reg.conjugate(y);
    if gy.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let d = problem.grad;
    let fx = problem.data.value(x)?;
    let fxr = problem.data.value(xr)?;
    let val = fx + inner(&d.apply(x), yr)? - fxr - inner(&d.adjoint(y), xr)?;
    Ok(eta * val)
}

/// `(alpha |Dx|_{2,1} - <Dx, y>, max(0, |y|_{2,inf} - alpha))`.
pub fn tv_preservation_residual(d: &GradOp, alpha: f64, x: &ScalarImage, y: &VectorField2) -> Result<(f64, f64)> {
    let dx = d.apply(x);
    let attain = alpha * norm_21(&dx) - inner(&dx, y)?;
    let excess = (norm_2inf(y) - alpha).max(0.0);
    Ok((attain, excess))
}

/// Inputs to the prediction-penalty bound beyond the step parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyInputs {
    /// `Lambda > |W|^2`
    pub lambda: f64,
    /// `Theta > |T|^2`
    pub theta: f64,
    /// Bound on the squared operator-compatibility defect.
    pub c: f64,
    pub m_x: f64,
    pub m_y: f64,
    /// `|W|^2`
    pub w_norm_sq: f64,
    /// `|T|^2`
    pub t_norm_sq: f64,
    /// `|W - W_true|^2`
    pub w_diff: f64,
    /// `|T - T_true|^2`
    pub t_diff: f64,
    /// `|a - a_true|^2`
    pub a_diff: f64,
    /// `|b - b_true|^2`
    pub b_diff: f64,
    pub pi: f64,
    pub pi_tilde: f64,
    pub beta: f64,
    pub kappa: f64,
    /// `|y - y_true|^2`
    pub dual_dist: f64,
}

impl Default for PenaltyInputs {
    fn default() -> Self {
        PenaltyInputs {
            lambda: 1.0,
            theta: 1.0,
            c: 0.0,
            m_x: 0.0,
            m_y: 0.0,
            w_norm_sq: 0.0,
            t_norm_sq: 0.0,
            w_diff: 0.0,
            t_diff: 0.0,
            a_diff: 0.0,
            b_diff: 0.0,
            pi: 1.0,
            pi_tilde: 1.0,
            beta: 1.0,
            kappa: 0.5,
            dual_dist: 0.0,
        }
    }
}

impl PenaltyInputs {
    /// Checks the strict inequalities. `pi` (or `pi_tilde`) may be zero only
    /// when the matching offset difference is zero; the product
    /// `(1 + 1/pi) * 0` is then taken as zero.
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("C", self.c),
            ("M_x", self.m_x),
            ("M_y", self.m_y),
            ("|W|^2", self.w_norm_sq),
            ("|T|^2", self.t_norm_sq),
            ("W_diff", self.w_diff),
            ("T_diff", self.t_diff),
            ("a_diff", self.a_diff),
            ("b_diff", self.b_diff),
            ("dual_dist", self.dual_dist),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lambda > self.w_norm_sq) {
            return Err(Error::invalid("need Lambda > |W|^2"));
        }
        if !(self.theta > self.t_norm_sq) {
            return Err(Error::invalid("need Theta > |T|^2"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid("need beta > 0"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid("need kappa in (0, 1)"));
        }
        for (name, p, offset) in [("pi", self.pi, self.a_diff), ("pi_tilde", self.pi_tilde, self.b_diff)] {
            if !(p > 0.0 || (p == 0.0 && offset == 0.0)) {
                return Err(Error::invalid(format!(
                    "{name} must be positive (zero allowed only with a zero offset difference), got {p}"
                )));
            }
        }
        Ok(())
    }
}

fn young_split(m: f64, p: f64, op_diff: f64, offset_diff: f64) -> f64 {
    let offset = if offset_diff == 0.0 { 0.0 } else { (1.0 + 1.0 / p) * offset_diff };
    m * (1.0 + p) * op_diff + offset
}

/// The per-frame prediction penalty bound for frame `k + 1`, given the step
/// parameters of frames `k` (`params`) and `k + 1` (`params_next`).
pub fn prediction_penalty(p: &PenaltyInputs, params: &StepParams, params_next: &StepParams) -> Result<f64> {
    p.validate()?;
    let slack = params.phi * (1.0 + params.gamma * params.tau) - params_next.phi * p.lambda;
    if !(slack > 0.0) {
        return Err(Error::invalid(format!(
            "primal testing condition phi_k (1 + gamma tau) > phi_(k+1) Lambda fails (slack {slack})"
        )));
    }
    let eta1 = params_next.eta;
    let k1 = params_next.k_norm * params_next.k_norm;
    let dual_strength = params.psi * (1.0 + params.rho * params.sigma);
    let coupling = eta1 * eta1 * (p.c * p.beta + k1 * p.w_norm_sq) / (2.0 * slack);

    let first = (params_next.psi * p.theta - p.kappa * dual_strength) / 2.0 + coupling / p.beta;
    let second = eta1 * eta1 * k1 * p.t_norm_sq / (2.0 * (1.0 - p.kappa) * dual_strength)
        + eta1 * k1 / 2.0
        + params_next.phi * p.lambda / (p.lambda - p.w_norm_sq);
    let third = coupling + eta1 / 2.0 + params_next.psi * p.theta / (p.theta - p.t_norm_sq);

    Ok(first * p.dual_dist
        + second * young_split(p.m_x, p.pi, p.w_diff, p.a_diff)
        + third * young_split(p.m_y, p.pi_tilde, p.t_diff, p.b_diff))
}

/// Power-iteration estimate of `|W_measured - W_true|^2` on a grid.
pub fn estimate_predictor_gap_norms(measured: &WarpOp, truth: &WarpOp, shape: Shape, iters: usize) -> f64 {
    let to_img = |v: &[f64]| ScalarImage::from_vec(shape, v.to_vec()).expect("finite power iterate");
    let est = op_norm_estimate(
        |v| {
            let x = to_img(v);
            let a = measured.apply(&x);
            let b = truth.apply(&x);
            a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p - q).collect()
        },
        |v| {
            let r = to_img(v);
            let a = measured.adjoint(&r);
            let b = truth.adjoint(&r);
            a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p - q).collect()
        },
        shape.len(),
        iters,
    );
    est * est
}
