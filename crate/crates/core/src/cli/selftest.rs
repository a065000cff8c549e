//! Small-size property checks run by `popd selftest`.

use crate::field::{inner, norm_21, Shape, ScalarImage, VectorField2};
use crate::operators::{GradOp, Motion, RadonOp, WarpOp};
use crate::popd::{make_unaccelerated_params, Gammas};
use crate::predictors::{PredictContext, PredictorKind, PreserveMode};
use crate::prox::{grad_poisson, prox_l2_data, prox_nonneg, prox_tv_conjugate, prox_tv_conjugate_strong, DataTermL2, DataTermPoisson, TVRegulariser};
use crate::diagnostics::tv_preservation_residual;
use crate::rng::SeededRng;

/// Outcome of one named property.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed error.
    pub detail: String,
}

impl Check {
    fn new(name: &str, worst: f64, tol: f64) -> Check {
        Check { name: name.into(), passed: worst <= tol && worst.is_finite(), detail: format!("max error {worst:.3e} (tol {tol:.0e})") }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// `<A x, y> = <x, A* y>` over random pairs, as a relative error.
pub fn check_adjoint(
    name: &str,
    n_in: usize,
    n_out: usize,
    forward: impl Fn(&[f64]) -> Vec<f64>,
    adjoint: impl Fn(&[f64]) -> Vec<f64>,
    trials: usize,
    seed: u64,
) -> Check {
    let mut rng = SeededRng::new(seed);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = random_vec(&mut rng, n_in);
        let y = random_vec(&mut rng, n_out);
        worst = worst.max(rel(dot(&forward(&x), &y), dot(&x, &adjoint(&y))));
    }
    Check::new(name, worst, 1e-10)
}

fn grad_adjoint(name: &str, d: GradOp, shape: Shape) -> Check {
    let img = |v: &[f64]| ScalarImage::from_vec(shape, v.to_vec()).expect("image size");
    let fld = |v: &[f64]| VectorField2::from_flat(shape, v).expect("field size");
    check_adjoint(
        name,
        shape.len(),
        2 * shape.len(),
        |v| d.apply(&img(v)).as_flat().to_vec(),
        |v| d.adjoint(&fld(v)).into_vec(),
        20,
        1,
    )
}

fn radon_adjoint() -> Check {
    let shape = Shape::square(12);
    let full = RadonOp::new(shape, 9, 14, 0.7).expect("radon geometry");
    let mut rng = SeededRng::new(2);
    let a = full.with_mask((0..full.n_rows()).map(|_| rng.bernoulli(0.6)).collect()).expect("mask size");
    let img = |v: &[f64]| ScalarImage::from_vec(shape, v.to_vec()).expect("image size");
    check_adjoint(
        "adjoint/radon",
        shape.len(),
        a.n_rows(),
        |v| a.apply(&img(v)).expect("radon apply"),
        |v| a.adjoint(v).expect("radon adjoint").into_vec(),
        20,
        3,
    )
}

fn warp_adjoint(name: &str, motion: Motion) -> Check {
    let shape = Shape::new(11, 9);
    let w = WarpOp::new(motion);
    let img = |v: &[f64]| ScalarImage::from_vec(shape, v.to_vec()).expect("image size");
    check_adjoint(name, shape.len(), shape.len(), |v| w.apply(&img(v)).into_vec(), |v| w.adjoint(&img(v)).into_vec(), 20, 4)
}

/// Root of a nondecreasing function on `[lo, hi]` by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 { hi = mid } else { lo = mid }
    }
    0.5 * (lo + hi)
}

fn prox_checks() -> Vec<Check> {
    let mut rng = SeededRng::new(5);
    let s = Shape::new(1, 1);
    let (mut l2, mut nn, mut tv, mut strong) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let z = 3.0 * rng.standard_normal();
        let v = 3.0 * rng.standard_normal();
        let tau = 0.01 + 2.0 * rng.uniform();
        // argmin tau (x - z)^2 / 2 + (x - v)^2 / 2
        let oracle = bisect(|x| tau * (x - z) + (x - v), -100.0, 100.0);
        let got = prox_l2_data(&DataTermL2::new(ScalarImage::constant(s, z)), tau, &ScalarImage::constant(s, v)).expect("prox");
        l2 = l2.max((got.get(0, 0) - oracle).abs());
        let oracle = bisect(|x| x - v, 0.0, 100.0);
        nn = nn.max((prox_nonneg(tau, &ScalarImage::constant(s, v)).get(0, 0) - oracle).abs());

        let alpha = 0.05 + rng.uniform();
        let w = [2.0 * rng.standard_normal(), 2.0 * rng.standard_normal()];
        let r = TVRegulariser::new(alpha).expect("alpha");
        let nw = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let dir = [w[0] / nw, w[1] / nw];
        let t = bisect(|t| t - nw, 0.0, alpha);
        let got = prox_tv_conjugate(&r, tau, &VectorField2::constant(s, w)).get(0, 0);
        tv = tv.max((got[0] - t * dir[0]).abs().max((got[1] - t * dir[1]).abs()));
        let rho = 10.0 * rng.uniform();
        let t = bisect(|t| tau * rho * t + t - nw, 0.0, alpha);
        let got = prox_tv_conjugate_strong(&r, rho, tau, &VectorField2::constant(s, w)).expect("prox").get(0, 0);
        strong = strong.max((got[0] - t * dir[0]).abs().max((got[1] - t * dir[1]).abs()));
    }
    vec![
        Check::new("prox/l2_data", l2, 1e-8),
        Check::new("prox/nonneg", nn, 1e-8),
        Check::new("prox/tv_conjugate", tv, 1e-8),
        Check::new("prox/tv_conjugate_strong", strong, 1e-8),
    ]
}

/// Blocky image and a dual attaining its total variation.
pub fn attaining_pair(n: usize, alpha: f64, seed: u64) -> (ScalarImage, VectorField2) {
    let mut rng = SeededRng::new(seed);
    let levels: Vec<f64> = (0..16).map(|_| rng.uniform()).collect();
    let b = n / 4;
    let x = ScalarImage::from_fn(Shape::square(n), |i, j| levels[(i / b).min(3) * 4 + (j / b).min(3)]);
    let dx = GradOp::neumann().apply(&x);
    let y = dx.map_pixels(|g| {
        let m = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if m > 0.0 { [alpha * g[0] / m, alpha * g[1] / m] } else { [0.0, 0.0] }
    });
    (x, y)
}

/// TV attainment of the prediction, measured with `d`; dual feasibility is
/// only required of strictly preserving predictors.
fn preservation_check(name: &str, kind: PredictorKind, motion: Motion, d: GradOp, strict: bool) -> Check {
    let alpha = 0.25;
    let (x, y) = attaining_pair(32, alpha, 6);
    let ctx = PredictContext { motion, grad: GradOp::neumann(), alpha, sigma: 12.5 };
    let Ok((xp, yp)) = kind.predict(&ctx, &x, &y) else {
        return Check { name: name.into(), passed: false, detail: "predictor failed".into() };
    };
    let (attain, excess) = tv_preservation_residual(&d, alpha, &xp, &yp).expect("shapes agree");
    let scale = alpha * norm_21(&d.apply(&xp)).max(1.0);
    let mut c = Check::new(name, attain.abs() / scale, 1e-8);
    if strict && excess > 1e-12 {
        c.passed = false;
        c.detail = format!("dual infeasible by {excess:.3e}");
    }
    c
}

fn greedy_products() -> Check {
    let alpha = 0.25;
    let (x, y) = attaining_pair(32, alpha, 7);
    let d = GradOp::neumann();
    let ctx = PredictContext { motion: Motion::Translation([0.4, -0.7]), grad: d, alpha, sigma: 12.5 };
    let eps = 1e-12;
    let (xp, yp) = PredictorKind::Greedy { eps }.predict(&ctx, &x, &y).expect("greedy");
    let (dx, dxp) = (d.apply(&x), d.apply(&xp));
    let mut worst = 0.0f64;
    for ((&a, &b), (&yv, &ypv)) in dx.as_flat().iter().zip(dxp.as_flat()).zip(y.as_flat().iter().zip(yp.as_flat())) {
        if b.abs() > eps {
            worst = worst.max((b * ypv - a * yv).abs());
        }
    }
    Check::new("preservation/greedy_products", worst, 1e-10)
}

fn poisson_gradient() -> Check {
    let shape = Shape::square(8);
    let a = RadonOp::new(shape, 4, 8, 1.0).expect("radon geometry");
    let mut rng = SeededRng::new(8);
    let counts: Vec<u64> = (0..a.n_rows()).map(|_| rng.poisson(3.0).expect("mean")).collect();
    let t = DataTermPoisson::new(a, &counts, vec![0.5; 32], 1.0).expect("data term");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = ScalarImage::from_fn(shape, |_, _| 0.2 + rng.uniform());
        let dir = ScalarImage::from_fn(shape, |_, _| rng.standard_normal());
        let h = 1e-5;
        let mut xp = x.clone();
        xp.add_scaled(h, &dir).expect("shape");
        let mut xm = x.clone();
        xm.add_scaled(-h, &dir).expect("shape");
        let fd = (t.value(&xp).expect("domain") - t.value(&xm).expect("domain")) / (2.0 * h);
        let an = inner(&grad_poisson(&t, &x).expect("domain"), &dir).expect("shape");
        worst = worst.max(rel(fd, an));
    }
    Check::new("gradient/poisson", worst, 1e-5)
}

fn step_rule() -> Check {
    let k = 8f64.sqrt();
    let a = make_unaccelerated_params(0.01, 0.0, 1.0, k, 0.25, Gammas::default(), 0.0).map(|p| p.sigma);
    let b = make_unaccelerated_params(0.003, 300.0, 1.0, k, 0.25, Gammas::default(), 0.0).map(|p| p.sigma);
    let rejected = make_unaccelerated_params(0.004, 300.0, 1.0, k, 0.25, Gammas::default(), 0.0).is_err();
    match (a, b) {
        (Ok(a), Ok(b)) if rejected => {
            Check::new("steps/sigma_rule", (a - 12.5).abs().max((b - 0.1 / 0.024).abs()), 1e-12)
        }
        _ => Check { name: "steps/sigma_rule".into(), passed: false, detail: "feasibility decision wrong".into() },
    }
}

/// Every built-in check.
pub fn run_checks() -> Vec<Check> {
    let mut out = vec![
        grad_adjoint("adjoint/grad_neumann", GradOp::neumann(), Shape::new(13, 8)),
        grad_adjoint("adjoint/grad_dirichlet", GradOp::dirichlet(), Shape::new(13, 8)),
        radon_adjoint(),
        warp_adjoint("adjoint/warp_translation", Motion::Translation([0.3, -1.6])),
        warp_adjoint("adjoint/warp_rotation", Motion::Rotation { angle: 0.4, center: [4.0, 5.0] }),
    ];
    out.extend(prox_checks());
    let rot = Motion::Rotation { angle: 0.3, center: [15.5, 15.5] };
    let shift = Motion::Translation([2.0, -3.0]);
    let n = GradOp::neumann();
    out.push(preservation_check("preservation/rotation", PredictorKind::Rotation { mode: PreserveMode::Tv }, rot, n, true));
    out.push(preservation_check("preservation/strict_greedy", PredictorKind::StrictGreedy, shift, n, true));
    out.push(preservation_check(
        "preservation/pointwise_l2_integer_shift",
        PredictorKind::PointwiseL2 { mode: PreserveMode::Tv },
        shift,
        n,
        false,
    ));
    out.push(preservation_check(
        "preservation/global_tv",
        PredictorKind::GlobalTV { mode: PreserveMode::Tv, cg: Default::default() },
        shift,
        GradOp::dirichlet(),
        false,
    ));
    out.push(greedy_products());
    out.push(poisson_gradient());
    out.push(step_rule());
    out
}

/// Prints one line per check; returns whether all passed.
pub fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{} {:<42} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}
