//! Linear operators with matched adjoints.

pub mod grad;
pub mod radon;
pub mod warp;

pub use grad::{Boundary, GradOp};
pub use radon::RadonOp;
pub use warp::{jacobian_of_displacement, Displacement, Mat2, Motion, WarpOp};

use crate::rng::SeededRng;

/// Power iteration on `A* A` from a fixed start vector.
///
/// Returns the square root of the largest Rayleigh quotient seen, which is a
/// lower bound on `|A|` and nondecreasing in `iters`.
pub fn op_norm_estimate(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    adjoint: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    iters: usize,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut rng = SeededRng::new(0x6e6f726d);
    let mut v: Vec<f64> = (0..n).map(|_| 0.5 + rng.uniform()).collect();
    let mut best: f64 = 0.0;
    for _ in 0..iters.max(1) {
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|e| *e /= nv);
        let av = apply(&v);
        best = best.max(crate::field::dot(&av, &av));
        v = adjoint(&av);
    }
    best.sqrt()
}

fn norm(v: &[f64]) -> f64 {
    crate::field::dot(v, v).sqrt()
}
