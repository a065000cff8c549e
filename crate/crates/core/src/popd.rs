//! The predictive online primal-dual iteration.

use crate::error::{Error, Result};
use crate::field::{check_shape, ScalarImage, Shape, VectorField2};
use crate::operators::{Displacement, GradOp};
use crate::predictors::{PredictContext, PredictorKind};
use crate::prox::{prox_tv_conjugate, DataTerm, TVRegulariser};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub tau: f64,
    pub sigma: f64,
    pub eta: f64,
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
    pub rho: f64,
    pub kappa: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub k_norm: f64,
}

/// Strong convexity factors of `F` and `E`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gammas {
    pub gamma_f: f64,
    pub gamma_e: f64,
}

impl StepParams {
    /// `tau L / kappa + tau sigma |K|^2`, which must not exceed one.
    pub fn metric_load(&self) -> f64 {
        self.tau * self.lipschitz / self.kappa + self.tau * self.sigma * self.k_norm * self.k_norm
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("sigma", self.sigma),
            ("eta", self.eta),
            ("phi", self.phi),
            ("psi", self.psi),
            ("alpha", self.alpha),
            ("K norm bound", self.k_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("rho", self.rho), ("L", self.lipschitz)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be nonnegative and finite, got {v}")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        let tol = 1e-12 * self.eta.max(1.0);
        if (self.eta - self.phi * self.tau).abs() > tol || (self.eta - self.psi * self.sigma).abs() > tol {
            return Err(Error::invalid("coupling eta = phi tau = psi sigma violated"));
        }
        if self.metric_load() > 1.0 + 1e-12 {
            return Err(self.infeasible());
        }
        Ok(())
    }

    fn infeasible(&self) -> Error {
        Error::InfeasibleStep {
            tau: self.tau,
            lipschitz: self.lipschitz,
            kappa: self.kappa,
            k_norm: self.k_norm,
            tau_l_kappa: self.tau * self.lipschitz / self.kappa,
            tau_sigma_k2: self.tau * self.sigma * self.k_norm * self.k_norm,
        }
    }
}

/// Constant steps with the largest `sigma` allowed by the metric condition.
pub fn make_unaccelerated_params(
    tau: f64,
    lipschitz: f64,
    kappa: f64,
    k_norm: f64,
    alpha: f64,
    gammas: Gammas,
    rho: f64,
) -> Result<StepParams> {
    if !(tau > 0.0) || !(k_norm > 0.0) || !(kappa > 0.0 && kappa <= 1.0) || !(lipschitz >= 0.0) {
        return Err(Error::invalid(format!(
            "need tau > 0, |K| > 0, kappa in (0, 1], L >= 0; got tau = {tau}, |K| = {k_norm}, kappa = {kappa}, L = {lipschitz}"
        )));
    }
    let load = tau * lipschitz / kappa;
    if load >= 1.0 {
        return Err(Error::InfeasibleStep {
            tau,
            lipschitz,
            kappa,
            k_norm,
            tau_l_kappa: load,
            tau_sigma_k2: 0.0,
        });
    }
    let sigma = (1.0 - load) / (tau * k_norm * k_norm);
    let gamma = if gammas.gamma_e > 0.0 {
        gammas.gamma_f + gammas.gamma_e - kappa * lipschitz
    } else {
        gammas.gamma_f
    };
    if gamma < 0.0 {
        return Err(Error::invalid(format!("strong convexity factor gamma = {gamma} is negative")));
    }
    let p = StepParams {
        tau,
        sigma,
        eta: tau,
        phi: 1.0,
        psi: tau / sigma,
        gamma,
        rho,
        kappa,
        lipschitz,
        alpha,
        k_norm,
    };
    p.validate()?;
    Ok(p)
}

/// Everything that defines one frame of the online problem.
#[derive(Clone, Debug)]
pub struct FrameProblem {
    pub index: usize,
    pub data: DataTerm,
    pub reg: TVRegulariser,
    pub grad: GradOp,
    /// Motion from the previous frame to this one.
    pub displacement: Displacement,
}

impl FrameProblem {
    pub fn shape(&self) -> Shape {
        self.data.shape()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdState {
    pub x: ScalarImage,
    pub y: VectorField2,
    pub x_pred: ScalarImage,
    pub y_pred: VectorField2,
    pub k: usize,
}

impl PdState {
    pub fn zeros(shape: Shape) -> Self {
        PdState {
            x: ScalarImage::zeros(shape),
            y: VectorField2::zeros(shape),
            x_pred: ScalarImage::zeros(shape),
            y_pred: VectorField2::zeros(shape),
            k: 0,
        }
    }
}

/// Primal and dual updates from a given prediction.
pub(crate) fn pd_update(
    problem: &FrameProblem,
    xp: &ScalarImage,
    yp: &VectorField2,
    params: &StepParams,
) -> Result<(ScalarImage, VectorField2)> {
    let tau = params.tau;
    let mut v = xp.clone();
    if let Some(g) = problem.data.grad_e(xp) {
        v.add_scaled(-tau, &g?)?;
    }
    v.add_scaled(-tau, &problem.grad.adjoint(yp))?;
    let x_new = problem.data.prox_f(tau, &v)?;
    let over = x_new.zip_map(xp, |a, b| 2.0 * a - b)?;
    let mut w = yp.clone();
    w.add_scaled(params.sigma, &problem.grad.apply(&over))?;
    let y_new = prox_tv_conjugate(&problem.reg, params.sigma, &w);
    Ok((x_new, y_new))
}

pub fn popd2_step(
    problem: &FrameProblem,
    predictor: &PredictorKind,
    state: &PdState,
    params: &StepParams,
) -> Result<PdState> {
    check_shape(problem.shape(), state.x.shape())?;
    let ctx = PredictContext {
        motion: problem.displacement.measured,
        grad: problem.grad,
        alpha: problem.reg.alpha,
        sigma: params.sigma,
    };
    let (x_pred, y_pred) = predictor.predict(&ctx, &state.x, &state.y)?;
    let (x, y) = pd_update(problem, &x_pred, &y_pred, params)?;
    Ok(PdState { x, y, x_pred, y_pred, k: problem.index })
}

/// Online solver state for one predictor, advanced one frame at a time.
#[derive(Clone, Debug)]
pub struct OnlineRunner {
    pub predictor: PredictorKind,
    pub params: StepParams,
    pub steps_per_frame: usize,
    state: Option<PdState>,
}

impl OnlineRunner {
    pub fn new(predictor: PredictorKind, params: StepParams, steps_per_frame: usize) -> Result<Self> {
        if steps_per_frame == 0 {
            return Err(Error::invalid("steps per frame must be at least 1"));
        }
        params.validate()?;
        Ok(OnlineRunner { predictor, params, steps_per_frame, state: None })
    }

    /// One prediction followed by `steps_per_frame` updates. The first frame
    /// starts from zero iterates.
    pub fn advance(&mut self, problem: &FrameProblem) -> Result<&PdState> {
        let current = self.state.take().unwrap_or_else(|| PdState::zeros(problem.shape()));
        let mut next = popd2_step(problem, &self.predictor, &current, &self.params)?;
        for _ in 1..self.steps_per_frame {
            let (x, y) = pd_update(problem, &next.x, &next.y, &self.params)?;
            next.x = x;
            next.y = y;
        }
        Ok(self.state.insert(next))
    }

    pub fn state(&self) -> Option<&PdState> {
        self.state.as_ref()
    }
}

/// Runs one prediction and `steps_per_frame` updates per frame, calling `sink`
/// after each frame. Iterates start at zero.
pub fn run_online<I, R>(
    problems: I,
    predictor: &PredictorKind,
    params: &StepParams,
    steps_per_frame: usize,
    mut sink: impl FnMut(&FrameProblem, &PdState) -> Result<R>,
) -> Result<Vec<R>>
where
    I: IntoIterator<Item = Result<FrameProblem>>,
{
    let mut runner = OnlineRunner::new(*predictor, *params, steps_per_frame)?;
    let mut records = Vec::new();
    for problem in problems {
        let problem = problem?;
        let state = runner.advance(&problem)?;
        records.push(sink(&problem, state)?);
    }
    if records.is_empty() {
        return Err(Error::invalid("no frames to process"));
    }
    Ok(records)
}
