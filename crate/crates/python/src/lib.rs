//! Python bindings. Images cross the boundary as lists of rows.

use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use popd::cli::{self, parse_config};
use popd::experiments::phantoms;
use popd::experiments::{psnr as psnr_db, ssim as ssim_index};
use popd::operators::{Displacement, GradOp, Motion, RadonOp};
use popd::popd::{make_unaccelerated_params, FrameProblem, Gammas, OnlineRunner, StepParams};
use popd::predictors::PredictorKind;
use popd::prox::{DataTerm, DataTermL2, TVRegulariser};
use popd::{Error, ScalarImage, Shape, VectorField2};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Convergence(_) | Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cli_to_py(e: cli::CliError) -> PyErr {
    to_py(e.error)
}

pub fn image_from_rows(rows: &[Vec<f64>]) -> Result<ScalarImage, Error> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidArgument("image rows have different lengths".into()));
    }
    ScalarImage::from_vec(Shape::new(width, height), rows.concat())
}

pub fn image_to_rows(x: &ScalarImage) -> Vec<Vec<f64>> {
    x.as_slice().chunks(x.width()).map(<[f64]>::to_vec).collect()
}

fn field_from_rows(shape: Shape, c0: &[Vec<f64>], c1: &[Vec<f64>]) -> Result<VectorField2, Error> {
    let a = image_from_rows(c0)?;
    let b = image_from_rows(c1)?;
    if a.shape() != shape || b.shape() != shape {
        return Err(Error::DimensionMismatch { expected: shape, found: if a.shape() != shape { a.shape() } else { b.shape() } });
    }
    Ok(VectorField2::from_fn(shape, |i, j| [a.get(i, j), b.get(i, j)]))
}

fn field_to_rows(y: &VectorField2) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let part = |c: usize| {
        let img = ScalarImage::from_fn(y.shape(), |i, j| y.get(i, j)[c]);
        image_to_rows(&img)
    };
    (part(0), part(1))
}

fn grad_op(boundary: &str) -> PyResult<GradOp> {
    match boundary {
        "neumann" => Ok(GradOp::neumann()),
        "dirichlet" => Ok(GradOp::dirichlet()),
        b => Err(PyValueError::new_err(format!("boundary must be 'neumann' or 'dirichlet', got {b:?}"))),
    }
}

/// Shepp-Logan phantom with values in [0, 1].
#[pyfunction]
fn shepp_logan(size: usize) -> PyResult<Vec<Vec<f64>>> {
    phantoms::shepp_logan(size).map(|x| image_to_rows(&x)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (size, seed=0))]
fn synthetic_brain(size: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    phantoms::synthetic_brain(size, seed).map(|x| image_to_rows(&x)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, reference, peak=1.0))]
fn psnr(x: Vec<Vec<f64>>, reference: Vec<Vec<f64>>, peak: f64) -> PyResult<f64> {
    psnr_db(&image_from_rows(&x).map_err(to_py)?, &image_from_rows(&reference).map_err(to_py)?, peak).map_err(to_py)
}

#[pyfunction]
fn ssim(x: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<f64> {
    ssim_index(&image_from_rows(&x).map_err(to_py)?, &image_from_rows(&reference).map_err(to_py)?).map_err(to_py)
}

/// Forward differences; returns the two gradient components.
#[pyfunction]
#[pyo3(signature = (x, boundary="neumann"))]
fn gradient(x: Vec<Vec<f64>>, boundary: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = grad_op(boundary)?;
    Ok(field_to_rows(&d.apply(&image_from_rows(&x).map_err(to_py)?)))
}

/// Adjoint of [`gradient`] (negative divergence).
#[pyfunction]
#[pyo3(signature = (y0, y1, boundary="neumann"))]
fn gradient_adjoint(y0: Vec<Vec<f64>>, y1: Vec<Vec<f64>>, boundary: &str) -> PyResult<Vec<Vec<f64>>> {
    let d = grad_op(boundary)?;
    let shape = image_from_rows(&y0).map_err(to_py)?.shape();
    let y = field_from_rows(shape, &y0, &y1).map_err(to_py)?;
    Ok(image_to_rows(&d.adjoint(&y)))
}

/// Result of each built-in self-check as `(name, passed, detail)`.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    cli::selftest::run_checks().into_iter().map(|c| (c.name, c.passed, c.detail)).collect()
}

/// Runs a config file body; returns `(frame, psnr, ssim, gap)` per frame.
#[pyfunction]
fn run_config(text: &str) -> PyResult<Vec<(usize, f64, f64, Option<f64>)>> {
    let config = parse_config(text).map_err(to_py)?;
    let out = cli::run(&config).map_err(cli_to_py)?;
    Ok(out.records.into_iter().map(|r| (r.frame, r.psnr, r.ssim, r.gap)).collect())
}

/// Runs several predictors on one frame sequence; returns summary rows
/// `(predictor, avg_psnr_full, avg_psnr_burnin, avg_ssim_full, avg_ssim_burnin)`.
#[pyfunction]
fn compare_config(text: &str, predictors: Vec<String>) -> PyResult<Vec<(String, f64, f64, f64, f64)>> {
    let config = parse_config(text).map_err(to_py)?;
    let out = cli::compare(&config, &predictors).map_err(cli_to_py)?;
    Ok(out
        .summary
        .into_iter()
        .map(|r| (r.predictor, r.avg_psnr_full, r.avg_psnr_burnin, r.avg_ssim_full, r.avg_ssim_burnin))
        .collect())
}

/// Constant step lengths satisfying the metric condition.
#[pyclass(name = "StepParams", frozen)]
struct PyStepParams {
    inner: StepParams,
}

#[pymethods]
impl PyStepParams {
    #[new]
    #[pyo3(signature = (tau, lipschitz=0.0, kappa=1.0, k_norm=8f64.sqrt(), alpha=0.25, gamma=0.0, rho=0.0))]
    fn new(tau: f64, lipschitz: f64, kappa: f64, k_norm: f64, alpha: f64, gamma: f64, rho: f64) -> PyResult<Self> {
        let inner = make_unaccelerated_params(tau, lipschitz, kappa, k_norm, alpha, Gammas { gamma_f: gamma, gamma_e: 0.0 }, rho)
            .map_err(to_py)?;
        Ok(PyStepParams { inner })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("StepParams(tau={}, sigma={}, L={}, kappa={}, alpha={})", p.tau, p.sigma, p.lipschitz, p.kappa, p.alpha)
    }
}

/// Parallel-beam projector `x -> sinogram` (angle-major rows).
#[pyclass(name = "Radon", frozen)]
struct PyRadon {
    inner: RadonOp,
}

#[pymethods]
impl PyRadon {
    #[new]
    #[pyo3(signature = (size, n_angles, n_bins, ray_scale=1.0))]
    fn new(size: usize, n_angles: usize, n_bins: usize, ray_scale: f64) -> PyResult<Self> {
        RadonOp::new(Shape::square(size), n_angles, n_bins, ray_scale).map(|inner| PyRadon { inner }).map_err(to_py)
    }

    fn apply(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.apply(&image_from_rows(&x).map_err(to_py)?).map_err(to_py)
    }

    fn adjoint(&self, s: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.adjoint(&s).map(|x| image_to_rows(&x)).map_err(to_py)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
}

/// Online TV denoiser: one predictor and one primal-dual step per frame.
#[pyclass(name = "OnlineDenoiser")]
struct PyOnlineDenoiser {
    runner: OnlineRunner,
    frames: usize,
}

#[pymethods]
impl PyOnlineDenoiser {
    #[new]
    #[pyo3(signature = (predictor, params, steps_per_frame=1))]
    fn new(predictor: &str, params: &PyStepParams, steps_per_frame: usize) -> PyResult<Self> {
        let kind = PredictorKind::from_str(predictor).map_err(to_py)?;
        let runner = OnlineRunner::new(kind, params.inner, steps_per_frame).map_err(to_py)?;
        Ok(PyOnlineDenoiser { runner, frames: 0 })
    }

    /// Feeds the next noisy frame together with the measured translation
    /// `(d_row, d_col)` from the previous frame; returns the reconstruction.
    #[pyo3(signature = (z, shift=None))]
    fn step(&mut self, z: Vec<Vec<f64>>, shift: Option<(f64, f64)>) -> PyResult<Vec<Vec<f64>>> {
        let z = image_from_rows(&z).map_err(to_py)?;
        let motion = shift.map_or(Motion::identity(), |(a, b)| Motion::Translation([a, b]));
        let problem = FrameProblem {
            index: self.frames,
            data: DataTerm::L2(DataTermL2::new(z)),
            reg: TVRegulariser::new(self.runner.params.alpha).map_err(to_py)?,
            grad: GradOp::neumann(),
            displacement: Displacement { truth: motion, measured: motion },
        };
        let state = self.runner.advance(&problem).map_err(to_py)?;
        self.frames += 1;
        Ok(image_to_rows(&state.x))
    }

    /// Current dual iterate as two component images.
    fn dual(&self) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.runner.state().map(|s| field_to_rows(&s.y))
    }

    #[getter]
    fn frames(&self) -> usize {
        self.frames
    }
}

#[pyfunction]
fn predictor_names() -> Vec<&'static str> {
    vec![
        "no_prediction",
        "primal_only",
        "zero_dual",
        "proximal_old",
        "pointwise_l2",
        "rotation",
        "greedy",
        "strict_greedy",
        "global_tv",
        "dual_scaling",
    ]
}

#[pymodule]
fn popd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStepParams>()?;
    m.add_class::<PyRadon>()?;
    m.add_class::<PyOnlineDenoiser>()?;
    m.add_function(wrap_pyfunction!(shepp_logan, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_brain, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(compare_config, m)?)?;
    m.add_function(wrap_pyfunction!(predictor_names, m)?)?;
    Ok(())
}
