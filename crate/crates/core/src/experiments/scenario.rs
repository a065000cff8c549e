//! Frame-sequence generators for the stabilisation and PET studies.
//!
//! Randomness is split into ChaCha sub-streams: stream 0 drives the motion
//! path and stream `k + 1` the measurement noise of frame `k`. A scenario
//! and its seed therefore determine every frame bit-for-bit, and changing
//! e.g. the noise level leaves the motion path unchanged.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::field::{ScalarImage, Shape};
use crate::operators::warp::{mat_vec, rotation_matrix, Mat2, Stencil};
use crate::operators::{Displacement, GradOp, Motion, RadonOp};
use crate::popd::FrameProblem;
use crate::prox::{DataTerm, DataTermL2, DataTermPoisson, TVRegulariser};
use crate::rng::SeededRng;

use super::phantoms::{shepp_logan, synthetic_brain, synthetic_scene};

/// One generated frame: the optimisation problem and its ground truth.
#[derive(Clone, Debug)]
pub struct Frame {
    pub problem: FrameProblem,
    pub truth: ScalarImage,
}

fn is_stopped(stops: &[Range<usize>], k: usize) -> bool {
    stops.iter().any(|r| r.contains(&k))
}

fn check_stops(stops: &[Range<usize>], n_frames: usize) -> Result<()> {
    for r in stops {
        if r.start >= r.end || r.end > n_frames {
            return Err(Error::invalid(format!(
                "stop interval {}..{} must be non-empty and inside 0..{n_frames}",
                r.start, r.end
            )));
        }
    }
    Ok(())
}

fn check_std(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// Folds `p` into `[0, max]` by mirror reflection at both ends.
pub fn reflect(p: f64, max: f64) -> f64 {
    if max <= 0.0 {
        return 0.0;
    }
    let m = p.rem_euclid(2.0 * max);
    if m > max { 2.0 * max - m } else { m }
}

/// Reflected Brownian path of crop offsets. Each frame after the first
/// draws an `N(0, std^2 I)` step; frames inside a stop interval discard it
/// and keep the previous offset.
pub fn brownian_offsets(
    n_frames: usize,
    std: f64,
    stops: &[Range<usize>],
    range: [f64; 2],
    start: [f64; 2],
    rng: &mut SeededRng,
) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n_frames);
    let mut o = [reflect(start[0], range[0]), reflect(start[1], range[1])];
    for k in 0..n_frames {
        if k > 0 {
            let step = [rng.normal(std), rng.normal(std)];
            if !is_stopped(stops, k) {
                o = [reflect(o[0] + step[0], range[0]), reflect(o[1] + step[1], range[1])];
            }
        }
        out.push(o);
    }
    out
}

/// Noisy translating crops of a larger image, denoised with TV.
#[derive(Clone, Debug)]
pub struct StabilisationScenario {
    pub source: ScalarImage,
    pub crop: Shape,
    pub n_frames: usize,
    pub brownian_std: f64,
    pub stop_intervals: Vec<Range<usize>>,
    pub data_noise_std: f64,
    pub displacement_noise_std: f64,
    pub seed: u64,
}

impl StabilisationScenario {
    /// 64x64 crops of a 192x192 synthetic scene, 1000 frames, motion stopped
    /// on the same fractions of the run as the full-size experiment.
    pub fn desk(seed: u64) -> Result<Self> {
        Ok(StabilisationScenario {
            source: synthetic_scene(192, 0)?,
            crop: Shape::square(64),
            n_frames: 1000,
            brownian_std: 2.0,
            stop_intervals: vec![250..500, 870..1000],
            data_noise_std: 0.5,
            displacement_noise_std: 0.05,
            seed,
        })
    }

    /// 300x200 crops (width x height), 10000 frames.
    pub fn paper(source: ScalarImage, seed: u64) -> Self {
        StabilisationScenario {
            source,
            crop: Shape::new(300, 200),
            n_frames: 10000,
            brownian_std: 2.0,
            stop_intervals: vec![2500..5000, 8700..10000],
            data_noise_std: 0.5,
            displacement_noise_std: 0.05,
            seed,
        }
    }

    fn offset_range(&self) -> [f64; 2] {
        [
            self.source.height() as f64 - self.crop.height as f64 - 1.0,
            self.source.width() as f64 - self.crop.width as f64 - 1.0,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.offset_range();
        if r[0] < 0.0 || r[1] < 0.0 || self.crop.is_empty() {
            return Err(Error::invalid(format!(
                "crop {} does not fit inside source {} with a one-pixel margin",
                self.crop,
                self.source.shape()
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::invalid("need at least one frame"));
        }
        check_std("brownian std", self.brownian_std)?;
        check_std("data noise std", self.data_noise_std)?;
        check_std("displacement noise std", self.displacement_noise_std)?;
        check_stops(&self.stop_intervals, self.n_frames)
    }

    /// True crop offsets `(row, column)` of every frame.
    pub fn true_offsets(&self) -> Vec<[f64; 2]> {
        let r = self.offset_range();
        let mut rng = SeededRng::substream(self.seed, 0);
        brownian_offsets(self.n_frames, self.brownian_std, &self.stop_intervals, r, [r[0] / 2.0, r[1] / 2.0], &mut rng)
    }

    pub fn crop_at(&self, offset: [f64; 2]) -> ScalarImage {
        let src = self.source.shape();
        let data = self.source.as_slice();
        ScalarImage::from_fn(self.crop, |i, j| {
            Stencil::at(src, [i as f64 + offset[0], j as f64 + offset[1]]).sample(data)
        })
    }

    /// Lazily generated frames; each is a pure function of the scenario, its
    /// seed and the frame index.
    pub fn into_frames(self, alpha: f64) -> Result<impl Iterator<Item = Result<Frame>>> {
        self.validate()?;
        let reg = TVRegulariser::new(alpha)?;
        let offsets = self.true_offsets();
        Ok((0..self.n_frames).map(move |k| {
            let o = offsets[k];
            let mut rng = SeededRng::substream(self.seed, k as u64 + 1);
            let displacement = if k == 0 {
                Displacement::none()
            } else {
                let prev = offsets[k - 1];
                let d = [o[0] - prev[0], o[1] - prev[1]];
                let s = self.displacement_noise_std;
                Displacement {
                    truth: Motion::Translation(d),
                    measured: Motion::Translation([d[0] + rng.normal(s), d[1] + rng.normal(s)]),
                }
            };
            let truth = self.crop_at(o);
            let noisy: Vec<f64> = truth.as_slice().iter().map(|v| v + rng.normal(self.data_noise_std)).collect();
            let z = ScalarImage::from_vec(self.crop, noisy)?;
            Ok(Frame {
                problem: FrameProblem {
                    index: k,
                    data: DataTerm::L2(DataTermL2::new(z)),
                    reg,
                    grad: GradOp::neumann(),
                    displacement,
                },
                truth,
            })
        }))
    }

    pub fn generate(&self, alpha: f64) -> Result<Vec<Frame>> {
        self.clone().into_frames(alpha)?.collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhantomKind {
    SheppLogan,
    SyntheticBrain { seed: u64 },
}

impl PhantomKind {
    pub fn render(&self, size: usize) -> Result<ScalarImage> {
        match *self {
            PhantomKind::SheppLogan => shepp_logan(size),
            PhantomKind::SyntheticBrain { seed } => synthetic_brain(size, seed),
        }
    }
}

/// Rotating phantom observed through a randomly subsampled Radon transform
/// with Poisson counts.
#[derive(Clone, Debug, PartialEq)]
pub struct PetScenario {
    pub phantom: PhantomKind,
    pub size: usize,
    pub n_angles: usize,
    pub n_bins: usize,
    /// Multiplies every line integral, setting the count level.
    pub ray_scale: f64,
    pub subsample_fraction: f64,
    pub rotation_angle_std: f64,
    pub center_offset_std: f64,
    pub angle_noise_std: f64,
    pub center_noise_std: f64,
    pub background: f64,
    pub stop_intervals: Vec<Range<usize>>,
    pub n_frames: usize,
    pub seed: u64,
}

/// Line-integral scale of the desk-scale PET configuration.
pub const DESK_RAY_SCALE: f64 = 0.3;

/// Line-integral scale of the full-size configuration. Uncalibrated: chosen
/// so that the count level per ray matches the desk setting.
pub const PAPER_RAY_SCALE: f64 = 0.075;

impl PetScenario {
    /// 64x64 phantom, 32 angles by 64 bins, 500 frames.
    pub fn desk(phantom: PhantomKind, seed: u64) -> Self {
        PetScenario {
            phantom,
            size: 64,
            n_angles: 32,
            n_bins: 64,
            ray_scale: DESK_RAY_SCALE,
            subsample_fraction: 0.5,
            rotation_angle_std: 0.15,
            center_offset_std: 1.0,
            angle_noise_std: 0.035,
            center_noise_std: 0.25,
            background: 0.5,
            stop_intervals: vec![125..250, 438..500],
            n_frames: 500,
            seed,
        }
    }

    /// 256x256 phantom, 64 angles by 128 bins, 4000 frames.
    pub fn paper(phantom: PhantomKind, seed: u64) -> Self {
        PetScenario {
            size: 256,
            n_angles: 64,
            n_bins: 128,
            ray_scale: PAPER_RAY_SCALE,
            stop_intervals: vec![1000..2000, 3500..4000],
            n_frames: 4000,
            ..Self::desk(phantom, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "subsample fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        if self.n_frames == 0 || self.n_angles == 0 || self.n_bins == 0 {
            return Err(Error::invalid("frames, angles and bins must all be positive"));
        }
        if !(self.background > 0.0 && self.background.is_finite()) {
            return Err(Error::invalid(format!("background must be positive, got {}", self.background)));
        }
        for (name, v) in [
            ("rotation angle std", self.rotation_angle_std),
            ("center offset std", self.center_offset_std),
            ("angle noise std", self.angle_noise_std),
            ("center noise std", self.center_noise_std),
        ] {
            check_std(name, v)?;
        }
        check_stops(&self.stop_intervals, self.n_frames)
    }

    fn centre(&self) -> [f64; 2] {
        let c = (self.size as f64 - 1.0) / 2.0;
        [c, c]
    }

    /// True frame-to-frame rotations; frame 0 and stopped frames get the
    /// identity (zero angle).
    pub fn true_motions(&self) -> Vec<Motion> {
        let mut rng = SeededRng::substream(self.seed, 0);
        let c0 = self.centre();
        (0..self.n_frames)
            .map(|k| {
                if k == 0 {
                    return Motion::Rotation { angle: 0.0, center: c0 };
                }
                let angle = rng.normal(self.rotation_angle_std);
                let center = [c0[0] + rng.normal(self.center_offset_std), c0[1] + rng.normal(self.center_offset_std)];
                if is_stopped(&self.stop_intervals, k) {
                    Motion::Rotation { angle: 0.0, center }
                } else {
                    Motion::Rotation { angle, center }
                }
            })
            .collect()
    }

    pub fn projector(&self) -> Result<RadonOp> {
        RadonOp::new(Shape::square(self.size), self.n_angles, self.n_bins, self.ray_scale)
    }

    /// Lazily generated frames. The pose accumulates along the sequence, so
    /// frames must be consumed in order.
    pub fn into_frames(self, alpha: f64, lipschitz: f64) -> Result<impl Iterator<Item = Result<Frame>>> {
        self.validate()?;
        let reg = TVRegulariser::new(alpha)?;
        let base = self.phantom.render(self.size)?;
        let full = self.projector()?;
        let motions = self.true_motions();
        // Pose phi(xi) = m xi + t maps frame coordinates to phantom coordinates.
        let mut m: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
        let mut t = [0.0, 0.0];
        Ok(motions.into_iter().enumerate().map(move |(k, motion)| {
            let mut rng = SeededRng::substream(self.seed, k as u64 + 1);
            let Motion::Rotation { angle, center } = motion else { unreachable!() };
            if angle != 0.0 {
                let r = rotation_matrix(angle);
                let rc = mat_vec(r, center);
                let shift = mat_vec(m, [center[0] - rc[0], center[1] - rc[1]]);
                m = mat_mul(m, r);
                t = [t[0] + shift[0], t[1] + shift[1]];
            }
            let truth = ScalarImage::from_fn(base.shape(), |i, j| {
                let p = mat_vec(m, [i as f64, j as f64]);
                sample_zero(&base, [p[0] + t[0], p[1] + t[1]])
            });
            let displacement = if k == 0 {
                Displacement::none()
            } else {
                Displacement {
                    truth: motion,
                    measured: Motion::Rotation {
                        angle: angle + rng.normal(self.angle_noise_std),
                        center: [
                            center[0] + rng.normal(self.center_noise_std),
                            center[1] + rng.normal(self.center_noise_std),
                        ],
                    },
                }
            };
            let mask: Vec<bool> = (0..full.n_rows()).map(|_| rng.bernoulli(self.subsample_fraction)).collect();
            let a = full.with_mask(mask)?;
            let clean = a.apply(&truth)?;
            let counts = clean
                .iter()
                .zip(a.mask())
                .map(|(&v, &on)| if on { rng.poisson(v + self.background) } else { Ok(0) })
                .collect::<Result<Vec<u64>>>()?;
            let data = DataTermPoisson::new(a, &counts, vec![self.background; full.n_rows()], lipschitz)?;
            Ok(Frame {
                problem: FrameProblem {
                    index: k,
                    data: DataTerm::Poisson(data),
                    reg,
                    grad: GradOp::neumann(),
                    displacement,
                },
                truth,
            })
        }))
    }

    pub fn generate(&self, alpha: f64, lipschitz: f64) -> Result<Vec<Frame>> {
        self.clone().into_frames(alpha, lipschitz)?.collect()
    }
}

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Bilinear sample with zero outside the grid.
fn sample_zero(x: &ScalarImage, p: [f64; 2]) -> f64 {
    let (h, w) = (x.height() as i64, x.width() as i64);
    let i0 = p[0].floor();
    let j0 = p[1].floor();
    let fi = p[0] - i0;
    let fj = p[1] - j0;
    let (i0, j0) = (i0 as i64, j0 as i64);
    let at = |i: i64, j: i64| if i < 0 || j < 0 || i >= h || j >= w { 0.0 } else { x.get(i as usize, j as usize) };
    (1.0 - fi) * ((1.0 - fj) * at(i0, j0) + fj * at(i0, j0 + 1)) + fi * ((1.0 - fj) * at(i0 + 1, j0) + fj * at(i0 + 1, j0 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::WarpOp;

    fn small_stab(seed: u64) -> StabilisationScenario {
        StabilisationScenario {
            source: synthetic_scene(48, 3).unwrap(),
            crop: Shape::square(16),
            n_frames: 30,
            stop_intervals: vec![10..20],
            ..StabilisationScenario::desk(seed).unwrap()
        }
    }

    #[test]
    fn reflect_folds_into_range() {
        assert_eq!(reflect(3.0, 10.0), 3.0);
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(-2.5, 10.0), 2.5);
        assert_eq!(reflect(25.0, 10.0), 5.0);
        assert_eq!(reflect(7.0, 0.0), 0.0);
    }

    #[test]
    fn stabilisation_is_deterministic() {
        let a = small_stab(4).generate(0.25).unwrap();
        let b = small_stab(4).generate(0.25).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.truth, fb.truth);
            assert_eq!(fa.problem.displacement, fb.problem.displacement);
            let (DataTerm::L2(za), DataTerm::L2(zb)) = (&fa.problem.data, &fb.problem.data) else { panic!() };
            assert_eq!(za.z, zb.z);
        }
    }

    #[test]
    fn stops_freeze_truth_but_not_measurement() {
        let s = small_stab(5);
        let frames = s.generate(0.25).unwrap();
        for f in &frames[10..20] {
            assert_eq!(f.problem.displacement.truth, Motion::Translation([0.0, 0.0]));
            assert_ne!(f.problem.displacement.measured, Motion::Translation([0.0, 0.0]));
        }
        assert_eq!(frames[12].truth, frames[10].truth);
    }

    #[test]
    fn zero_noise_zero_motion_gives_constant_frames() {
        let s = StabilisationScenario {
            brownian_std: 0.0,
            data_noise_std: 0.0,
            displacement_noise_std: 0.0,
            ..small_stab(6)
        };
        let frames = s.generate(0.25).unwrap();
        for f in &frames {
            assert_eq!(f.truth, frames[0].truth);
            assert_eq!(f.problem.displacement.measured, if f.problem.index == 0 {
                Motion::identity()
            } else {
                Motion::Translation([0.0, 0.0])
            });
        }
    }

    #[test]
    fn consecutive_crops_follow_the_translation_warp() {
        let s = StabilisationScenario { data_noise_std: 0.0, ..small_stab(7) };
        let frames = s.generate(0.25).unwrap();
        // Interior pixels of frame k+1 equal frame k warped by the true motion,
        // up to bilinear re-interpolation error on a smooth-ish image.
        let k = 3;
        let w = WarpOp::new(frames[k + 1].problem.displacement.truth);
        let pred = w.apply(&frames[k].truth);
        let direct = frames[k + 1].truth.clone();
        let offsets = s.true_offsets();
        let d = [offsets[k + 1][0] - offsets[k][0], offsets[k + 1][1] - offsets[k][1]];
        if d[0].fract() == 0.0 && d[1].fract() == 0.0 {
            assert_eq!(pred, direct);
        }
        assert_eq!(direct, s.crop_at(offsets[k + 1]));
    }

    #[test]
    fn brownian_step_std_matches() {
        let mut rng = SeededRng::new(11);
        let n = 10_000;
        let o = brownian_offsets(n, 2.0, &[], [1e9, 1e9], [5e8, 5e8], &mut rng);
        let steps: Vec<f64> = o.windows(2).flat_map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]]).collect();
        let var = steps.iter().map(|s| s * s).sum::<f64>() / steps.len() as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.05, "{}", var.sqrt());
    }

    #[test]
    fn full_stop_keeps_initial_offset() {
        let mut rng = SeededRng::new(1);
        let o = brownian_offsets(50, 2.0, &[0..50], [100.0, 100.0], [50.0, 50.0], &mut rng);
        assert!(o.iter().all(|&p| p == [50.0, 50.0]));
    }

    fn small_pet(seed: u64) -> PetScenario {
        PetScenario {
            size: 24,
            n_angles: 8,
            n_bins: 24,
            n_frames: 12,
            stop_intervals: vec![4..8],
            ..PetScenario::desk(PhantomKind::SheppLogan, seed)
        }
    }

    #[test]
    fn pet_static_when_motion_off() {
        let s = PetScenario { rotation_angle_std: 0.0, center_offset_std: 0.0, ..small_pet(2) };
        let frames = s.generate(0.25, 300.0).unwrap();
        for f in &frames {
            assert_eq!(f.truth, frames[0].truth);
        }
        assert_eq!(frames[0].truth, s.phantom.render(24).unwrap());
    }

    #[test]
    fn pet_full_sampling_and_fraction() {
        let s = PetScenario { subsample_fraction: 1.0, ..small_pet(3) };
        for f in s.generate(0.25, 300.0).unwrap() {
            let DataTerm::Poisson(p) = &f.problem.data else { panic!() };
            assert_eq!(p.a.n_active(), p.a.n_rows());
        }
        let s = PetScenario { size: 16, n_angles: 25, n_bins: 40, n_frames: 10, stop_intervals: vec![], ..small_pet(4) };
        let active: usize = s
            .generate(0.25, 300.0)
            .unwrap()
            .iter()
            .map(|f| match &f.problem.data {
                DataTerm::Poisson(p) => p.a.n_active(),
                _ => unreachable!(),
            })
            .sum();
        let frac = active as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn pet_frames_follow_rotation_warp() {
        let s = small_pet(5);
        let frames = s.generate(0.25, 300.0).unwrap();
        for f in &frames[4..8] {
            let Motion::Rotation { angle, .. } = f.problem.displacement.truth else { panic!() };
            assert_eq!(angle, 0.0);
        }
        assert_eq!(frames[5].truth, frames[4].truth);
        // Away from the border the next truth is the previous one seen through
        // the true motion (both are bilinear resamplings of the same phantom).
        let k = 1;
        let pred = WarpOp::new(frames[k + 1].problem.displacement.truth).apply(&frames[k].truth);
        let err = pred.zip_map(&frames[k + 1].truth, |a, b| (a - b).abs()).unwrap();
        let mean_err = err.as_slice().iter().sum::<f64>() / err.as_slice().len() as f64;
        assert!(mean_err < 0.05, "{mean_err}");
        let again = s.generate(0.25, 300.0).unwrap();
        for (a, b) in frames.iter().zip(&again) {
            let (DataTerm::Poisson(pa), DataTerm::Poisson(pb)) = (&a.problem.data, &b.problem.data) else { panic!() };
            assert_eq!(pa.counts(), pb.counts());
        }
    }

    #[test]
    fn invalid_scenarios_rejected() {
        assert!(PetScenario { subsample_fraction: 0.0, ..small_pet(1) }.validate().is_err());
        assert!(PetScenario { stop_intervals: vec![5..40], ..small_pet(1) }.validate().is_err());
        assert!(StabilisationScenario { crop: Shape::square(48), ..small_stab(1) }.validate().is_err());
    }
}
