//! Analytic test images.
//!
//! All phantoms take values in `[0, 1]` and are rasterised with 4x4
//! supersampling per pixel. Image coordinates map the grid onto `[-1, 1]^2`
//! with the first axis pointing up, as in the usual phantom tables.

use crate::error::{Error, Result};
use crate::field::{ScalarImage, Shape};
use crate::rng::SeededRng;

const SUPERSAMPLE: usize = 4;

/// Ellipse `(intensity, a, b, x0, y0, phi_degrees)`.
type Ellipse = (f64, f64, f64, f64, f64, f64);

/// Ten-ellipse Shepp-Logan table with the higher-contrast intensities of
/// Toft's modification, so that the phantom spans `[0, 1]`.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn inside(e: &Ellipse, u: f64, v: f64) -> bool {
    let (_, a, b, x0, y0, phi) = *e;
    let (s, c) = phi.to_radians().sin_cos();
    let du = u - x0;
    let dv = v - y0;
    let p = du * c + dv * s;
    let q = -du * s + dv * c;
    (p / a).powi(2) + (q / b).powi(2) <= 1.0
}

/// Rasterises `f(u, v)` on `[-1, 1]^2` by averaging subsamples.
fn rasterise(size: usize, f: impl Fn(f64, f64) -> f64) -> ScalarImage {
    let n = size as f64;
    let ss = SUPERSAMPLE as f64;
    ScalarImage::from_fn(Shape::square(size), |i, j| {
        let mut acc = 0.0;
        for a in 0..SUPERSAMPLE {
            for b in 0..SUPERSAMPLE {
                let u = 2.0 * (j as f64 + (b as f64 + 0.5) / ss) / n - 1.0;
                let v = 1.0 - 2.0 * (i as f64 + (a as f64 + 0.5) / ss) / n;
                acc += f(u, v);
            }
        }
        (acc / (ss * ss)).clamp(0.0, 1.0)
    })
}

fn sum_ellipses(ellipses: &[Ellipse], u: f64, v: f64) -> f64 {
    ellipses.iter().filter(|e| inside(e, u, v)).map(|e| e.0).sum()
}

pub fn shepp_logan(size: usize) -> Result<ScalarImage> {
    if size < 16 {
        return Err(Error::invalid(format!("phantom size must be at least 16, got {size}")));
    }
    Ok(rasterise(size, |u, v| sum_ellipses(&SHEPP_LOGAN_ELLIPSES, u, v)))
}

/// Brain-like phantom: skull, grey and white matter with smooth texture,
/// ventricles and a few bright lesions. Lesion placement and texture depend
/// on `seed`.
pub fn synthetic_brain(size: usize, seed: u64) -> Result<ScalarImage> {
    if size < 16 {
        return Err(Error::invalid(format!("phantom size must be at least 16, got {size}")));
    }
    let mut rng = SeededRng::new(seed);
    let waves: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            let k = 4.0 + 8.0 * rng.uniform();
            let dir = std::f64::consts::TAU * rng.uniform();
            [k * dir.cos(), k * dir.sin(), std::f64::consts::TAU * rng.uniform(), 0.5 + 0.5 * rng.uniform()]
        })
        .collect();
    let wsum: f64 = waves.iter().map(|w| w[3]).sum();
    let lesions: Vec<Ellipse> = (0..4)
        .map(|_| {
            let r = 0.35 * rng.uniform().sqrt();
            let t = std::f64::consts::TAU * rng.uniform();
            let s = 0.03 + 0.04 * rng.uniform();
            (0.95, s, s * (0.6 + 0.4 * rng.uniform()), r * t.cos(), r * t.sin(), 180.0 * rng.uniform())
        })
        .collect();
    let skull: Ellipse = (0.0, 0.72, 0.9, 0.0, 0.0, 0.0);
    let brain: Ellipse = (0.0, 0.66, 0.84, 0.0, -0.01, 0.0);
    let white: Ellipse = (0.0, 0.5, 0.66, 0.0, -0.02, 0.0);
    let ventricles: [Ellipse; 2] = [(0.0, 0.07, 0.22, 0.1, 0.08, -15.0), (0.0, 0.07, 0.22, -0.1, 0.08, 15.0)];
    Ok(rasterise(size, |u, v| {
        if !inside(&skull, u, v) {
            return 0.0;
        }
        if !inside(&brain, u, v) {
            return 0.3;
        }
        if lesions.iter().any(|e| inside(e, u, v)) {
            return 0.95;
        }
        if ventricles.iter().any(|e| inside(e, u, v)) {
            return 0.05;
        }
        if inside(&white, u, v) {
            let tex: f64 = waves.iter().map(|w| w[3] * (w[0] * u + w[1] * v + w[2]).sin()).sum();
            return 0.45 + 0.12 * tex / wsum;
        }
        0.75
    }))
}

/// Textured natural-scene substitute for the stabilisation experiment:
/// a shaded sky, flat buildings, a striped tower, a disk and a band of
/// smooth random texture.
pub fn synthetic_scene(size: usize, seed: u64) -> Result<ScalarImage> {
    if size < 16 {
        return Err(Error::invalid(format!("scene size must be at least 16, got {size}")));
    }
    let mut rng = SeededRng::new(seed);
    let waves: Vec<[f64; 4]> = (0..12)
        .map(|_| {
            let k = 6.0 + 30.0 * rng.uniform();
            let dir = std::f64::consts::TAU * rng.uniform();
            [k * dir.cos(), k * dir.sin(), std::f64::consts::TAU * rng.uniform(), rng.uniform()]
        })
        .collect();
    let wsum: f64 = waves.iter().map(|w| w[3]).sum();
    let blocks: Vec<[f64; 5]> = (0..10)
        .map(|_| {
            let x0 = -1.0 + 2.0 * rng.uniform();
            let w = 0.08 + 0.25 * rng.uniform();
            let top = -0.6 + 0.9 * rng.uniform();
            [x0, x0 + w, top, 0.15 + 0.7 * rng.uniform(), 0.0]
        })
        .collect();
    Ok(rasterise(size, |u, v| {
        // Lower band: textured ground.
        if v < -0.55 {
            let tex: f64 = waves.iter().map(|w| w[3] * (w[0] * u + w[1] * v + w[2]).sin()).sum();
            return 0.35 + 0.3 * tex / wsum;
        }
        // Striped tower.
        if (0.3..0.42).contains(&u) && v < 0.75 {
            return if ((v + 1.0) * 10.0).floor() as i64 % 2 == 0 { 0.95 } else { 0.1 };
        }
        for b in &blocks {
            if u >= b[0] && u < b[1] && v < b[2] {
                return b[3];
            }
        }
        let (du, dv) = (u + 0.55, v - 0.55);
        if du * du + dv * dv < 0.04 {
            return 1.0;
        }
        0.55 + 0.35 * (v + 0.55) / 1.55
    }))
}
