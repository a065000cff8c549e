//! Plain-text `section.key = value` run configuration.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::phantoms::synthetic_scene;
use crate::experiments::scenario::{PetScenario, PhantomKind, StabilisationScenario, PAPER_RAY_SCALE};
use crate::experiments::io::read_pgm;
use crate::field::Shape;
use crate::popd::{make_unaccelerated_params, Gammas, StepParams};
use crate::predictors::{Activation, CgOptions, PredictorKind, PreserveMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Stabilise,
    Pet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagnostics {
    Off,
    Gaps,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub experiment: Experiment,
    pub scale: Scale,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Write PGM dumps every this many frames; 0 disables them.
    pub dump_every: usize,
    pub diagnostics: Diagnostics,
    /// Iterations of the per-frame static solver used for gap diagnostics.
    pub oracle_iters: usize,
    /// First frame of the post-burn-in averages in `compare`.
    pub burn_in: usize,
    /// Record per-frame wall time (makes `metrics.csv` non-reproducible).
    pub timing: bool,
    pub steps_per_frame: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorSection {
    pub name: String,
    pub chi: f64,
    pub activation: Activation,
    pub rho_tilde: f64,
    pub eps: f64,
    pub mode: PreserveMode,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSection {
    pub tau: f64,
    pub kappa: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub k_norm: f64,
    pub gamma: f64,
    pub rho: f64,
}

/// Either `synthetic` or a PGM path.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Synthetic,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabiliseSection {
    pub source: SourceSpec,
    pub source_size: usize,
    pub source_seed: u64,
    pub crop_width: usize,
    pub crop_height: usize,
    pub n_frames: usize,
    pub brownian_std: f64,
    pub stop_intervals: Vec<Range<usize>>,
    pub data_noise_std: f64,
    pub displacement_noise_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub run: RunSection,
    pub predictor: PredictorSection,
    pub step: StepSection,
    pub stabilise: StabiliseSection,
    /// The seed field is ignored; `run.seed` is used.
    pub pet: PetScenario,
}

const SQRT8: f64 = 2.8284271247461903;

const KEYS: &[&str] = &[
    "run.experiment",
    "run.scale",
    "run.seed",
    "run.output_dir",
    "run.dump_every",
    "run.diagnostics",
    "run.oracle_iters",
    "run.burn_in",
    "run.timing",
    "run.steps_per_frame",
    "predictor.name",
    "predictor.chi",
    "predictor.activation",
    "predictor.rho_tilde",
    "predictor.eps",
    "predictor.mode",
    "predictor.cg_tol",
    "predictor.cg_max_iter",
    "step.tau",
    "step.kappa",
    "step.lipschitz",
    "step.alpha",
    "step.k_norm",
    "step.gamma",
    "step.rho",
    "stabilise.source",
    "stabilise.source_size",
    "stabilise.source_seed",
    "stabilise.crop_width",
    "stabilise.crop_height",
    "stabilise.n_frames",
    "stabilise.brownian_std",
    "stabilise.stop_intervals",
    "stabilise.data_noise_std",
    "stabilise.displacement_noise_std",
    "pet.phantom",
    "pet.phantom_seed",
    "pet.size",
    "pet.n_angles",
    "pet.n_bins",
    "pet.ray_scale",
    "pet.subsample_fraction",
    "pet.rotation_angle_std",
    "pet.center_offset_std",
    "pet.angle_noise_std",
    "pet.center_noise_std",
    "pet.background",
    "pet.stop_intervals",
    "pet.n_frames",
];

/// Every key accepted in a config file.
pub fn known_keys() -> &'static [&'static str] {
    KEYS
}

impl RunConfig {
    /// Defaults for an experiment at the given scale. Dual scaling uses
    /// `chi = 1` with the sigmoid activation for the Shepp-Logan study and
    /// `chi = 0.75` with the power activation otherwise.
    pub fn defaults(experiment: Experiment, scale: Scale) -> RunConfig {
        let paper = scale == Scale::Paper;
        let pet = experiment == Experiment::Pet;
        let mut pet_scenario = PetScenario::desk(PhantomKind::SheppLogan, 0);
        if paper {
            pet_scenario = PetScenario::paper(PhantomKind::SheppLogan, 0);
            pet_scenario.ray_scale = PAPER_RAY_SCALE;
        }
        let stabilise = if paper {
            StabiliseSection {
                source: SourceSpec::Synthetic,
                source_size: 768,
                source_seed: 0,
                crop_width: 300,
                crop_height: 200,
                n_frames: 10000,
                brownian_std: 2.0,
                stop_intervals: vec![2500..5000, 8700..10000],
                data_noise_std: 0.5,
                displacement_noise_std: 0.05,
            }
        } else {
            StabiliseSection {
                source: SourceSpec::Synthetic,
                source_size: 192,
                source_seed: 0,
                crop_width: 64,
                crop_height: 64,
                n_frames: 1000,
                brownian_std: 2.0,
                stop_intervals: vec![250..500, 870..1000],
                data_noise_std: 0.5,
                displacement_noise_std: 0.05,
            }
        };
        let (chi, activation) = if pet { (1.0, Activation::Sigmoid) } else { (0.75, Activation::Power) };
        RunConfig {
            run: RunSection {
                experiment,
                scale,
                seed: 0,
                output_dir: PathBuf::from("out"),
                dump_every: 100,
                diagnostics: Diagnostics::Off,
                oracle_iters: 2000,
                burn_in: if pet && !paper { 250 } else { 500 },
                timing: false,
                steps_per_frame: 1,
            },
            predictor: PredictorSection {
                name: "dual_scaling".into(),
                chi,
                activation,
                rho_tilde: 100.0,
                eps: 1e-12,
                mode: PreserveMode::Tv,
                cg_tol: CgOptions::default().tol,
                cg_max_iter: CgOptions::default().max_iter,
            },
            step: StepSection {
                tau: if pet { 0.003 } else { 0.01 },
                kappa: 1.0,
                lipschitz: if pet { 300.0 } else { 0.0 },
                alpha: 0.25,
                k_norm: SQRT8,
                gamma: 1.0,
                rho: 0.0,
            },
            stabilise,
            pet: pet_scenario,
        }
    }

    /// Predictor of the given name with this config's parameters.
    pub fn predictor_kind(&self, name: &str) -> Result<PredictorKind> {
        let p = &self.predictor;
        Ok(match PredictorKind::from_str(name)? {
            PredictorKind::ProximalOld { .. } => PredictorKind::ProximalOld { rho_tilde: p.rho_tilde },
            PredictorKind::PointwiseL2 { .. } => PredictorKind::PointwiseL2 { mode: p.mode },
            PredictorKind::Rotation { .. } => PredictorKind::Rotation { mode: p.mode },
            PredictorKind::Greedy { .. } => PredictorKind::Greedy { eps: p.eps },
            PredictorKind::GlobalTV { .. } => PredictorKind::GlobalTV {
                mode: p.mode,
                cg: CgOptions { tol: p.cg_tol, max_iter: p.cg_max_iter },
            },
            PredictorKind::DualScaling { .. } => PredictorKind::DualScaling { chi: p.chi, activation: p.activation },
            other => other,
        })
    }

    /// Constant step parameters; fails with [`Error::InfeasibleStep`] when
    /// `tau L / kappa >= 1`.
    pub fn step_params(&self) -> Result<StepParams> {
        let s = &self.step;
        make_unaccelerated_params(s.tau, s.lipschitz, s.kappa, s.k_norm, s.alpha, Gammas { gamma_f: s.gamma, gamma_e: 0.0 }, s.rho)
    }

    pub fn stabilisation_scenario(&self) -> Result<StabilisationScenario> {
        let s = &self.stabilise;
        let source = match &s.source {
            SourceSpec::Synthetic => synthetic_scene(s.source_size, s.source_seed)?,
            SourceSpec::File(p) => read_pgm(p)?,
        };
        let sc = StabilisationScenario {
            source,
            crop: Shape::new(s.crop_width, s.crop_height),
            n_frames: s.n_frames,
            brownian_std: s.brownian_std,
            stop_intervals: s.stop_intervals.clone(),
            data_noise_std: s.data_noise_std,
            displacement_noise_std: s.displacement_noise_std,
            seed: self.run.seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn pet_scenario(&self) -> Result<PetScenario> {
        let sc = PetScenario { seed: self.run.seed, ..self.pet.clone() };
        sc.validate()?;
        Ok(sc)
    }

    pub fn n_frames(&self) -> usize {
        match self.run.experiment {
            Experiment::Stabilise => self.stabilise.n_frames,
            Experiment::Pet => self.pet.n_frames,
        }
    }

    /// Checks that do not need the scenario to be built.
    pub fn validate(&self) -> Result<()> {
        self.predictor_kind(&self.predictor.name)?;
        if self.run.steps_per_frame == 0 {
            return Err(Error::invalid("run.steps_per_frame must be at least 1"));
        }
        if self.run.oracle_iters == 0 {
            return Err(Error::invalid("run.oracle_iters must be at least 1"));
        }
        if self.run.burn_in >= self.n_frames() {
            return Err(Error::invalid(format!(
                "run.burn_in = {} leaves no frames out of {}",
                self.run.burn_in,
                self.n_frames()
            )));
        }
        Ok(())
    }

    /// Every effective parameter as a config file that parses back to `self`.
    /// Only the section of the selected experiment is written.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let r = &self.run;
        put("run.experiment", experiment_name(r.experiment).into());
        put("run.scale", if r.scale == Scale::Paper { "paper" } else { "desk" }.into());
        put("run.seed", r.seed.to_string());
        put("run.output_dir", r.output_dir.display().to_string());
        put("run.dump_every", r.dump_every.to_string());
        put("run.diagnostics", diagnostics_name(r.diagnostics).into());
        put("run.oracle_iters", r.oracle_iters.to_string());
        put("run.burn_in", r.burn_in.to_string());
        put("run.timing", r.timing.to_string());
        put("run.steps_per_frame", r.steps_per_frame.to_string());
        let p = &self.predictor;
        put("predictor.name", p.name.clone());
        put("predictor.chi", p.chi.to_string());
        put("predictor.activation", activation_name(p.activation).into());
        put("predictor.rho_tilde", p.rho_tilde.to_string());
        put("predictor.eps", p.eps.to_string());
        put("predictor.mode", mode_name(p.mode).into());
        put("predictor.cg_tol", p.cg_tol.to_string());
        put("predictor.cg_max_iter", p.cg_max_iter.to_string());
        let s = &self.step;
        put("step.tau", s.tau.to_string());
        put("step.kappa", s.kappa.to_string());
        put("step.lipschitz", s.lipschitz.to_string());
        put("step.alpha", s.alpha.to_string());
        put("step.k_norm", s.k_norm.to_string());
        put("step.gamma", s.gamma.to_string());
        put("step.rho", s.rho.to_string());
        match r.experiment {
            Experiment::Stabilise => {
                let s = &self.stabilise;
                put(
                    "stabilise.source",
                    match &s.source {
                        SourceSpec::Synthetic => "synthetic".into(),
                        SourceSpec::File(p) => p.display().to_string(),
                    },
                );
                put("stabilise.source_size", s.source_size.to_string());
                put("stabilise.source_seed", s.source_seed.to_string());
                put("stabilise.crop_width", s.crop_width.to_string());
                put("stabilise.crop_height", s.crop_height.to_string());
                put("stabilise.n_frames", s.n_frames.to_string());
                put("stabilise.brownian_std", s.brownian_std.to_string());
                put("stabilise.stop_intervals", render_intervals(&s.stop_intervals));
                put("stabilise.data_noise_std", s.data_noise_std.to_string());
                put("stabilise.displacement_noise_std", s.displacement_noise_std.to_string());
            }
            Experiment::Pet => {
                let p = &self.pet;
                let (name, seed) = match p.phantom {
                    PhantomKind::SheppLogan => ("shepp_logan", 0),
                    PhantomKind::SyntheticBrain { seed } => ("synthetic_brain", seed),
                };
                put("pet.phantom", name.into());
                put("pet.phantom_seed", seed.to_string());
                put("pet.size", p.size.to_string());
                put("pet.n_angles", p.n_angles.to_string());
                put("pet.n_bins", p.n_bins.to_string());
                put("pet.ray_scale", p.ray_scale.to_string());
                put("pet.subsample_fraction", p.subsample_fraction.to_string());
                put("pet.rotation_angle_std", p.rotation_angle_std.to_string());
                put("pet.center_offset_std", p.center_offset_std.to_string());
                put("pet.angle_noise_std", p.angle_noise_std.to_string());
                put("pet.center_noise_std", p.center_noise_std.to_string());
                put("pet.background", p.background.to_string());
                put("pet.stop_intervals", render_intervals(&p.stop_intervals));
                put("pet.n_frames", p.n_frames.to_string());
            }
        }
        out
    }
}

fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Stabilise => "stabilise",
        Experiment::Pet => "pet",
    }
}

fn diagnostics_name(d: Diagnostics) -> &'static str {
    match d {
        Diagnostics::Off => "off",
        Diagnostics::Gaps => "gaps",
        Diagnostics::Full => "full",
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Power => "power",
    }
}

fn mode_name(m: PreserveMode) -> &'static str {
    match m {
        PreserveMode::Tv => "tv",
        PreserveMode::InnerProduct => "inner_product",
    }
}

fn render_intervals(v: &[Range<usize>]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(|r| format!("{}..{}", r.start, r.end)).collect::<Vec<_>>().join(", ")
}

struct Entry {
    line: usize,
    value: String,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn split_lines(text: &str) -> Result<HashMap<String, Entry>> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(config_err(line, format!("expected `section.key = value`, found {content:?}")));
        };
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(config_err(line, format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(config_err(line, format!("missing value for {key}")));
        }
        if let Some(prev) = entries.get(key) {
            return Err(config_err(line, format!("duplicate key {key} (first set on line {})", prev.line)));
        }
        entries.insert(key.to_string(), Entry { line, value: value.to_string() });
    }
    Ok(entries)
}

fn parse_value<T: FromStr>(key: &str, e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| config_err(e.line, format!("cannot parse {key} = {:?}", e.value)))
}

fn parse_bool(key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        v => Err(config_err(e.line, format!("{key} must be true or false, got {v:?}"))),
    }
}

fn parse_intervals(key: &str, e: &Entry) -> Result<Vec<Range<usize>>> {
    if e.value == "none" {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|part| {
            let part = part.trim();
            let bad = || config_err(e.line, format!("{key}: expected `start..end`, found {part:?}"));
            let (a, b) = part.split_once("..").ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            Ok(a..b)
        })
        .collect()
}

fn choice<T: Copy>(key: &str, e: &Entry, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(n, _)| *n == e.value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        config_err(e.line, format!("{key} must be one of {}, got {:?}", names.join(" | "), e.value))
    })
}

/// Parses a config file body. Missing keys take the defaults of the selected
/// experiment and scale.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let entries = split_lines(text)?;
    let get = |k: &str| entries.get(k);
    let experiment = match get("run.experiment") {
        Some(e) => choice("run.experiment", e, &[("stabilise", Experiment::Stabilise), ("pet", Experiment::Pet)])?,
        None => Experiment::Stabilise,
    };
    let scale = match get("run.scale") {
        Some(e) => choice("run.scale", e, &[("desk", Scale::Desk), ("paper", Scale::Paper)])?,
        None => Scale::Desk,
    };
    let mut c = RunConfig::defaults(experiment, scale);
    let mut phantom_name = "shepp_logan".to_string();
    let mut phantom_seed = 0u64;
    let mut keys: Vec<(&String, &Entry)> = entries.iter().collect();
    keys.sort_by_key(|(_, e)| e.line);
    for (key, e) in keys {
        let k = key.as_str();
        match k {
            "run.experiment" | "run.scale" => {}
            "run.seed" => c.run.seed = parse_value(k, e)?,
            "run.output_dir" => c.run.output_dir = PathBuf::from(&e.value),
            "run.dump_every" => c.run.dump_every = parse_value(k, e)?,
            "run.diagnostics" => {
                c.run.diagnostics =
                    choice(k, e, &[("off", Diagnostics::Off), ("gaps", Diagnostics::Gaps), ("full", Diagnostics::Full)])?
            }
            "run.oracle_iters" => c.run.oracle_iters = parse_value(k, e)?,
            "run.burn_in" => c.run.burn_in = parse_value(k, e)?,
            "run.timing" => c.run.timing = parse_bool(k, e)?,
            "run.steps_per_frame" => c.run.steps_per_frame = parse_value(k, e)?,
            "predictor.name" => {
                PredictorKind::from_str(&e.value).map_err(|err| config_err(e.line, err.to_string()))?;
                c.predictor.name = e.value.clone();
            }
            "predictor.chi" => c.predictor.chi = parse_value(k, e)?,
            "predictor.activation" => {
                c.predictor.activation = choice(k, e, &[("sigmoid", Activation::Sigmoid), ("power", Activation::Power)])?
            }
            "predictor.rho_tilde" => c.predictor.rho_tilde = parse_value(k, e)?,
            "predictor.eps" => c.predictor.eps = parse_value(k, e)?,
            "predictor.mode" => {
                c.predictor.mode = choice(k, e, &[("tv", PreserveMode::Tv), ("inner_product", PreserveMode::InnerProduct)])?
            }
            "predictor.cg_tol" => c.predictor.cg_tol = parse_value(k, e)?,
            "predictor.cg_max_iter" => c.predictor.cg_max_iter = parse_value(k, e)?,
            "step.tau" => c.step.tau = parse_value(k, e)?,
            "step.kappa" => c.step.kappa = parse_value(k, e)?,
            "step.lipschitz" => c.step.lipschitz = parse_value(k, e)?,
            "step.alpha" => c.step.alpha = parse_value(k, e)?,
            "step.k_norm" => c.step.k_norm = parse_value(k, e)?,
            "step.gamma" => c.step.gamma = parse_value(k, e)?,
            "step.rho" => c.step.rho = parse_value(k, e)?,
            "stabilise.source" => {
                c.stabilise.source = if e.value == "synthetic" {
                    SourceSpec::Synthetic
                } else {
                    SourceSpec::File(PathBuf::from(&e.value))
                }
            }
            "stabilise.source_size" => c.stabilise.source_size = parse_value(k, e)?,
            "stabilise.source_seed" => c.stabilise.source_seed = parse_value(k, e)?,
            "stabilise.crop_width" => c.stabilise.crop_width = parse_value(k, e)?,
            "stabilise.crop_height" => c.stabilise.crop_height = parse_value(k, e)?,
            "stabilise.n_frames" => c.stabilise.n_frames = parse_value(k, e)?,
            "stabilise.brownian_std" => c.stabilise.brownian_std = parse_value(k, e)?,
            "stabilise.stop_intervals" => c.stabilise.stop_intervals = parse_intervals(k, e)?,
            "stabilise.data_noise_std" => c.stabilise.data_noise_std = parse_value(k, e)?,
            "stabilise.displacement_noise_std" => c.stabilise.displacement_noise_std = parse_value(k, e)?,
            "pet.phantom" => {
                choice(k, e, &[("shepp_logan", ()), ("synthetic_brain", ())])?;
                phantom_name = e.value.clone();
            }
            "pet.phantom_seed" => phantom_seed = parse_value(k, e)?,
            "pet.size" => c.pet.size = parse_value(k, e)?,
            "pet.n_angles" => c.pet.n_angles = parse_value(k, e)?,
            "pet.n_bins" => c.pet.n_bins = parse_value(k, e)?,
            "pet.ray_scale" => c.pet.ray_scale = parse_value(k, e)?,
            "pet.subsample_fraction" => c.pet.subsample_fraction = parse_value(k, e)?,
            "pet.rotation_angle_std" => c.pet.rotation_angle_std = parse_value(k, e)?,
            "pet.center_offset_std" => c.pet.center_offset_std = parse_value(k, e)?,
            "pet.angle_noise_std" => c.pet.angle_noise_std = parse_value(k, e)?,
            "pet.center_noise_std" => c.pet.center_noise_std = parse_value(k, e)?,
            "pet.background" => c.pet.background = parse_value(k, e)?,
            "pet.stop_intervals" => c.pet.stop_intervals = parse_intervals(k, e)?,
            "pet.n_frames" => c.pet.n_frames = parse_value(k, e)?,
            _ => unreachable!("key list and parser disagree on {k}"),
        }
    }
    if phantom_name == "synthetic_brain" {
        c.pet.phantom = PhantomKind::SyntheticBrain { seed: phantom_seed };
        if get("predictor.chi").is_none() && get("predictor.activation").is_none() {
            c.predictor.chi = 0.75;
            c.predictor.activation = Activation::Power;
        }
    }
    Ok(c)
}

/// Reads and parses a config file; a missing file names its path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
