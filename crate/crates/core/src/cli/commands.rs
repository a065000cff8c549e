//! `run` and `compare` orchestration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::diagnostics::{duality_gap, estimate_predictor_gap_norms, solve_static, tv_preservation_residual};
use crate::error::{Error, Result};
use crate::experiments::io::{metrics_csv, write_pgm, write_text, FrameRecord};
use crate::experiments::metrics::{mean_ci, psnr, ssim, PSNR_CAP_DB};
use crate::experiments::scenario::Frame;
use crate::operators::WarpOp;
use crate::popd::{OnlineRunner, PdState, StepParams};
use crate::predictors::PredictorKind;
use crate::prox::{lipschitz_estimate, DataTerm};

use super::config::{load_config, Diagnostics, Experiment, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// An error tagged with the process exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for CliError {}

fn tag(code: i32) -> impl Fn(Error) -> CliError {
    move |error| {
        let code = if matches!(error, Error::InfeasibleStep { .. }) { EXIT_INFEASIBLE } else { code };
        CliError { code, error }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, error: Error::InvalidArgument(msg.into()) }
}

/// Prints the error of a failed command and returns its exit status.
pub fn report(result: std::result::Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.error);
            e.code
        }
    }
}

pub fn cmd_run(config_path: &Path) -> i32 {
    report(load_config(config_path).map_err(tag(EXIT_USAGE)).and_then(|c| run(&c).map(|_| ())))
}

pub fn cmd_compare(config_path: &Path, predictors: &[String]) -> i32 {
    if predictors.len() < 2 {
        return report(Err(usage("compare needs at least two predictors")));
    }
    report(load_config(config_path).map_err(tag(EXIT_USAGE)).and_then(|c| compare(&c, predictors).map(|_| ())))
}

/// Scenario frames in order, generated lazily.
pub fn frame_stream(config: &RunConfig) -> Result<Box<dyn Iterator<Item = Result<Frame>>>> {
    let alpha = config.step.alpha;
    match config.run.experiment {
        Experiment::Stabilise => Ok(Box::new(config.stabilisation_scenario()?.into_frames(alpha)?)),
        Experiment::Pet => Ok(Box::new(config.pet_scenario()?.into_frames(alpha, config.step.lipschitz)?)),
    }
}

/// Checks everything that can be rejected before a frame is generated.
fn prepare(config: &RunConfig) -> std::result::Result<StepParams, CliError> {
    config.validate().map_err(tag(EXIT_USAGE))?;
    let params = config.step_params().map_err(tag(EXIT_USAGE))?;
    match config.run.experiment {
        Experiment::Stabilise => config.stabilisation_scenario().map(|_| ()),
        Experiment::Pet => config.pet_scenario().map(|_| ()),
    }
    .map_err(tag(EXIT_USAGE))?;
    fs::create_dir_all(&config.run.output_dir).map_err(|e| tag(EXIT_RUNTIME)(Error::io(&config.run.output_dir, e)))?;
    Ok(params)
}

fn quality(frame: &Frame, state: &PdState) -> Result<(f64, f64)> {
    Ok((psnr(&state.x, &frame.truth, 1.0)?, ssim(&state.x, &frame.truth)?))
}

/// Eta-scaled Lagrangian gap of `state` against the frame's static saddle point.
fn gap_against(frame: &Frame, oracle: &crate::diagnostics::StaticSaddle, state: &PdState, eta: f64) -> Result<f64> {
    duality_gap(&frame.problem, (&state.x, &state.y), (&oracle.x_opt, &oracle.y_opt), eta)
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<FrameRecord>,
    pub output_dir: PathBuf,
}

/// Runs the configured predictor and writes `metrics.csv`, PGM dumps, the
/// resolved config and, with full diagnostics, `diagnostics.csv`.
pub fn run(config: &RunConfig) -> std::result::Result<RunOutput, CliError> {
    let params = prepare(config)?;
    let kind = config.predictor_kind(&config.predictor.name).map_err(tag(EXIT_USAGE))?;
    let dir = config.run.output_dir.clone();
    write_text(&dir.join("resolved_config"), &config.render()).map_err(tag(EXIT_RUNTIME))?;
    let body = || -> Result<Vec<FrameRecord>> {
        let mut runner = OnlineRunner::new(kind, params, config.run.steps_per_frame)?;
        let mut records = Vec::new();
        let mut diag = String::from("frame,tv_attainment,dual_excess,lipschitz_estimate,warp_error_sq\n");
        let mut l_est = 0.0;
        for frame in frame_stream(config)? {
            let frame = frame?;
            let start = Instant::now();
            let state = runner.advance(&frame.problem)?;
            let elapsed = start.elapsed().as_secs_f64();
            let (p, s) = quality(&frame, state)?;
            let k = frame.problem.index;
            let gap = if config.run.diagnostics == Diagnostics::Off {
                None
            } else {
                let oracle = solve_static(&frame.problem, config.run.oracle_iters, 0.0)?;
                Some(gap_against(&frame, &oracle, state, params.eta)?)
            };
            if config.run.diagnostics == Diagnostics::Full {
                let (attain, excess) = tv_preservation_residual(&frame.problem.grad, params.alpha, &state.x, &state.y)?;
                let l = match &frame.problem.data {
                    DataTerm::Poisson(t) => {
                        l_est = lipschitz_estimate(l_est, t, &state.x, &state.x_pred)?;
                        l_est.to_string()
                    }
                    DataTerm::L2(_) => String::new(),
                };
                let d = frame.problem.displacement;
                let w = estimate_predictor_gap_norms(&WarpOp::new(d.measured), &WarpOp::new(d.truth), frame.problem.shape(), 10);
                let _ = writeln!(diag, "{k},{attain},{excess},{l},{w}");
            }
            if config.run.dump_every > 0 && k % config.run.dump_every == 0 {
                write_pgm(&dir.join(format!("frame_{k:06}.pgm")), &state.x)?;
                write_pgm(&dir.join(format!("truth_{k:06}.pgm")), &frame.truth)?;
            }
            records.push(FrameRecord {
                frame: k,
                psnr: p,
                ssim: s,
                gap,
                wall_time: config.run.timing.then_some(elapsed),
            });
        }
        write_text(&dir.join("metrics.csv"), &metrics_csv(&records))?;
        if config.run.diagnostics == Diagnostics::Full {
            write_text(&dir.join("diagnostics.csv"), &diag)?;
        }
        Ok(records)
    };
    let records = body().map_err(tag(EXIT_RUNTIME))?;
    Ok(RunOutput { records, output_dir: dir })
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub predictor: String,
    pub avg_psnr_full: f64,
    pub avg_psnr_burnin: f64,
    pub psnr_ci: (f64, f64),
    pub avg_ssim_full: f64,
    pub avg_ssim_burnin: f64,
    pub ssim_ci: (f64, f64),
}

pub const SUMMARY_HEADER: &str =
    "predictor,avg_psnr_full,avg_psnr_burnin,psnr_ci_lo,psnr_ci_hi,avg_ssim_full,avg_ssim_burnin,ssim_ci_lo,ssim_ci_hi";

fn capped(p: f64) -> f64 {
    if p == f64::INFINITY { PSNR_CAP_DB } else { p }
}

/// Averages over all frames and over frames from `burn_in` on, with the
/// confidence interval of the latter. PSNR is capped as in `metrics.csv`.
pub fn summarise(name: &str, records: &[FrameRecord], burn_in: usize) -> Result<SummaryRow> {
    let psnr_all: Vec<f64> = records.iter().map(|r| capped(r.psnr)).collect();
    let ssim_all: Vec<f64> = records.iter().map(|r| r.ssim).collect();
    let late = |v: &[f64]| -> Vec<f64> { records.iter().zip(v).filter(|(r, _)| r.frame >= burn_in).map(|(_, &x)| x).collect() };
    let none = || Error::invalid(format!("no frames at or after burn-in frame {burn_in}"));
    let (pf, _, _) = mean_ci(&psnr_all).ok_or_else(none)?;
    let (sf, _, _) = mean_ci(&ssim_all).ok_or_else(none)?;
    let (pb, plo, phi) = mean_ci(&late(&psnr_all)).ok_or_else(none)?;
    let (sb, slo, shi) = mean_ci(&late(&ssim_all)).ok_or_else(none)?;
    Ok(SummaryRow {
        predictor: name.to_string(),
        avg_psnr_full: pf,
        avg_psnr_burnin: pb,
        psnr_ci: (plo, phi),
        avg_ssim_full: sf,
        avg_ssim_burnin: sb,
        ssim_ci: (slo, shi),
    })
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.predictor,
            r.avg_psnr_full,
            r.avg_psnr_burnin,
            r.psnr_ci.0,
            r.psnr_ci.1,
            r.avg_ssim_full,
            r.avg_ssim_burnin,
            r.ssim_ci.0,
            r.ssim_ci.1
        );
    }
    out
}

/// Result of [`compare`]: per-predictor records in the order given.
#[derive(Clone, Debug)]
pub struct CompareOutput {
    pub names: Vec<String>,
    pub records: Vec<Vec<FrameRecord>>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every predictor on one shared frame sequence. Each frame is
/// generated once and handed to all predictors, which advance in lockstep
/// on separate threads. Writes `metrics_<name>.csv`, `summary.csv` and the
/// resolved config.
pub fn compare(config: &RunConfig, predictors: &[String]) -> std::result::Result<CompareOutput, CliError> {
    if predictors.len() < 2 {
        return Err(usage("compare needs at least two predictors"));
    }
    for (i, p) in predictors.iter().enumerate() {
        if predictors[..i].contains(p) {
            return Err(usage(format!("predictor {p} listed twice")));
        }
    }
    let kinds: Vec<PredictorKind> =
        predictors.iter().map(|n| config.predictor_kind(n)).collect::<Result<_>>().map_err(tag(EXIT_USAGE))?;
    let params = prepare(config)?;
    let dir = config.run.output_dir.clone();
    write_text(&dir.join("resolved_config"), &config.render()).map_err(tag(EXIT_RUNTIME))?;
    let body = || -> Result<CompareOutput> {
        let mut runners: Vec<OnlineRunner> =
            kinds.iter().map(|&k| OnlineRunner::new(k, params, config.run.steps_per_frame)).collect::<Result<_>>()?;
        let mut records: Vec<Vec<FrameRecord>> = vec![Vec::new(); kinds.len()];
        for frame in frame_stream(config)? {
            let frame = frame?;
            let oracle = if config.run.diagnostics == Diagnostics::Off {
                None
            } else {
                Some(solve_static(&frame.problem, config.run.oracle_iters, 0.0)?)
            };
            let rows: Vec<Result<FrameRecord>> = std::thread::scope(|s| {
                let handles: Vec<_> = runners
                    .iter_mut()
                    .map(|runner| {
                        let frame = &frame;
                        let oracle = oracle.as_ref();
                        s.spawn(move || -> Result<FrameRecord> {
                            let start = Instant::now();
                            let state = runner.advance(&frame.problem)?;
                            let elapsed = start.elapsed().as_secs_f64();
                            let (p, q) = quality(frame, state)?;
                            let gap = oracle.map(|o| gap_against(frame, o, state, params.eta)).transpose()?;
                            Ok(FrameRecord {
                                frame: frame.problem.index,
                                psnr: p,
                                ssim: q,
                                gap,
                                wall_time: config.run.timing.then_some(elapsed),
                            })
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("predictor thread panicked")).collect()
            });
            for (dst, row) in records.iter_mut().zip(rows) {
                dst.push(row?);
            }
        }
        let mut summary = Vec::new();
        for (name, recs) in predictors.iter().zip(&records) {
            write_text(&dir.join(format!("metrics_{name}.csv")), &metrics_csv(recs))?;
            summary.push(summarise(name, recs, config.run.burn_in)?);
        }
        write_text(&dir.join("summary.csv"), &summary_csv(&summary))?;
        Ok(CompareOutput { names: predictors.to_vec(), records, summary })
    };
    body().map_err(tag(EXIT_RUNTIME))
}
