use std::f64::consts::PI;

use popd::cli::{parse_config, Experiment, RunConfig, Scale};
use popd::experiments::io::{decode_pgm, encode_pgm, metrics_csv, parse_metrics_csv};
use popd::experiments::{mean_ci, psnr, ssim, FrameRecord};
use popd::operators::{GradOp, Motion, RadonOp, WarpOp};
use popd::popd::{make_unaccelerated_params, Gammas};
use popd::predictors::{circular_shift, greedy_component, rotation_pixel, PreserveMode};
use popd::prox::{prox_l2_data, prox_nonneg, prox_tv_conjugate, prox_tv_conjugate_strong, DataTermL2, TVRegulariser};
use popd::{ScalarImage, SeededRng, Shape, VectorField2};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn image(shape: Shape, seed: u64) -> ScalarImage {
    let mut rng = SeededRng::new(seed);
    ScalarImage::from_fn(shape, |_, _| rng.standard_normal())
}

fn field(shape: Shape, seed: u64, scale: f64) -> VectorField2 {
    let mut rng = SeededRng::new(seed);
    VectorField2::from_fn(shape, |_, _| [scale * rng.standard_normal(), scale * rng.standard_normal()])
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_adjoint(w in 1usize..14, h in 1usize..14, seed: u64, dirichlet: bool) {
        let s = Shape::new(w, h);
        let d = if dirichlet { GradOp::dirichlet() } else { GradOp::neumann() };
        let (x, y) = (image(s, seed), field(s, seed ^ 1, 1.0));
        prop_assert!(close(dot(d.apply(&x).as_flat(), y.as_flat()), dot(x.as_slice(), d.adjoint(&y).as_slice()), 1e-12));
    }

    #[test]
    fn gradient_norm_bound(n in 2usize..16, seed: u64) {
        let d = GradOp::neumann();
        let x = image(Shape::square(n), seed);
        prop_assert!(d.apply(&x).norm() <= d.norm_bound() * x.norm() + 1e-12);
    }

    #[test]
    fn warp_adjoint(n in 3usize..16, seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0, angle in -1.0f64..1.0, rotate: bool) {
        let s = Shape::square(n);
        let motion = if rotate { Motion::Rotation { angle, center: [a + n as f64 / 2.0, b + n as f64 / 2.0] } } else { Motion::Translation([a, b]) };
        let w = WarpOp::new(motion);
        let (x, r) = (image(s, seed), image(s, seed ^ 7));
        prop_assert!(close(dot(w.apply(&x).as_slice(), r.as_slice()), dot(x.as_slice(), w.adjoint(&r).as_slice()), 1e-12));
    }

    #[test]
    fn radon_adjoint(n in 2usize..12, angles in 1usize..7, bins in 1usize..16, seed: u64) {
        let s = Shape::square(n);
        let a = RadonOp::new(s, angles, bins, 1.0).unwrap();
        let x = image(s, seed);
        let mut rng = SeededRng::new(seed ^ 3);
        let r: Vec<f64> = (0..a.n_rows()).map(|_| rng.standard_normal()).collect();
        prop_assert!(close(dot(&a.apply(&x).unwrap(), &r), dot(x.as_slice(), a.adjoint(&r).unwrap().as_slice()), 1e-11));
    }

    #[test]
    fn radon_of_nonnegative_is_nonnegative(n in 2usize..12, seed: u64) {
        let s = Shape::square(n);
        let a = RadonOp::new(s, 5, n + 2, 1.0).unwrap();
        let x = image(s, seed).map(f64::abs);
        prop_assert!(a.apply(&x).unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tv_conjugate_prox_is_feasible_nonexpansive_idempotent(seed: u64, alpha in 0.01f64..3.0, scale in 0.01f64..10.0) {
        let s = Shape::new(7, 5);
        let r = TVRegulariser::new(alpha).unwrap();
        let (u, v) = (field(s, seed, scale), field(s, seed ^ 5, scale));
        let (pu, pv) = (prox_tv_conjugate(&r, 1.0, &u), prox_tv_conjugate(&r, 1.0, &v));
        prop_assert!(pu.pixels().iter().all(|p| p[0].hypot(p[1]) <= alpha * (1.0 + 1e-12)));
        let mut d = pu.clone();
        d.add_scaled(-1.0, &pv).unwrap();
        let mut e = u.clone();
        e.add_scaled(-1.0, &v).unwrap();
        prop_assert!(d.norm() <= e.norm() + 1e-12);
        let again = prox_tv_conjugate(&r, 1.0, &pu);
        prop_assert!(again.as_flat().iter().zip(pu.as_flat()).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + alpha)));
    }

    #[test]
    fn strong_tv_conjugate_prox_shrinks(seed: u64, alpha in 0.01f64..3.0, rho in 0.0f64..100.0, sigma in 0.01f64..20.0) {
        let s = Shape::new(4, 6);
        let r = TVRegulariser::new(alpha).unwrap();
        let u = field(s, seed, 2.0);
        let p = prox_tv_conjugate_strong(&r, rho, sigma, &u).unwrap();
        let plain = prox_tv_conjugate(&r, sigma, &u);
        for (a, b) in p.pixels().iter().zip(plain.pixels()) {
            prop_assert!(a[0].hypot(a[1]) <= b[0].hypot(b[1]) + 1e-12);
            prop_assert!(a[0] * b[1] - a[1] * b[0] <= 1e-12);
        }
    }

    #[test]
    fn l2_prox_is_contractive(seed: u64, tau in 0.0f64..10.0) {
        let s = Shape::new(5, 5);
        let t = DataTermL2::new(image(s, seed));
        let (u, v) = (image(s, seed ^ 11), image(s, seed ^ 13));
        let d = prox_l2_data(&t, tau, &u).unwrap().zip_map(&prox_l2_data(&t, tau, &v).unwrap(), |a, b| a - b).unwrap();
        prop_assert!(d.norm() * (1.0 + tau) <= u.zip_map(&v, |a, b| a - b).unwrap().norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn nonneg_prox_projects(seed: u64) {
        let x = image(Shape::new(6, 3), seed);
        let p = prox_nonneg(1.0, &x);
        for (a, b) in p.as_slice().iter().zip(x.as_slice()) {
            prop_assert!(*a >= 0.0 && (*a == *b || *b < 0.0 && *a == 0.0));
        }
    }

    #[test]
    fn greedy_component_keeps_products(dx in -5.0f64..5.0, dxp in -5.0f64..5.0, y in -1.0f64..1.0) {
        let eps = 1e-12;
        let out = greedy_component(dx, dxp, y, eps);
        if dxp.abs() > eps {
            prop_assert!(close(dxp * out, dx * y, 1e-12));
        }
    }

    #[test]
    fn rotation_pixel_maps_attaining_duals_to_attaining_duals(a in -PI..PI, b in -PI..PI, r in 0.1f64..4.0, alpha in 0.01f64..2.0) {
        let g = [a.cos(), a.sin()];
        let gp = [r * b.cos(), r * b.sin()];
        let out = rotation_pixel(g, gp, [alpha * g[0], alpha * g[1]], alpha, PreserveMode::Tv);
        prop_assert!(close(out[0].hypot(out[1]), alpha, 1e-12));
        prop_assert!(close(out[0] * gp[0] + out[1] * gp[1], alpha * r, 1e-12));
    }

    #[test]
    fn circular_shift_inverts(w in 1usize..9, h in 1usize..9, d0 in -20i64..20, d1 in -20i64..20, seed: u64) {
        let x = image(Shape::new(w, h), seed);
        let back = circular_shift(&circular_shift(&x, [d0, d1]), [-d0, -d1]);
        prop_assert_eq!(back.as_slice(), x.as_slice());
    }

    #[test]
    fn sigma_rule(tau in 1e-4f64..0.1, lip in 0.0f64..500.0, kappa in 0.05f64..1.0, k in 0.5f64..4.0) {
        let res = make_unaccelerated_params(tau, lip, kappa, k, 0.25, Gammas::default(), 0.0);
        if tau * lip / kappa >= 1.0 {
            prop_assert!(res.is_err());
        } else {
            let p = res.unwrap();
            prop_assert!(close(p.sigma, (1.0 - tau * lip / kappa) / (tau * k * k), 1e-12));
            prop_assert!(close(p.psi, tau / p.sigma, 1e-12));
            prop_assert_eq!(p.eta, tau);
        }
    }

    #[test]
    fn mean_ci_brackets_mean(values in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let (m, lo, hi) = mean_ci(&values).unwrap();
        prop_assert!(lo <= m && m <= hi);
        prop_assert!(close(m, values.iter().sum::<f64>() / values.len() as f64, 1e-12));
        prop_assert!(close(m - lo, hi - m, 1e-9));
    }

    #[test]
    fn psnr_falls_as_error_grows(seed: u64, e in 0.001f64..0.3) {
        let s = Shape::square(8);
        let x = image(s, seed).map(|v| 0.5 + 0.1 * v);
        let noise = image(s, seed ^ 9);
        let near = x.zip_map(&noise, |a, b| a + e * b).unwrap();
        let far = x.zip_map(&noise, |a, b| a + 2.0 * e * b).unwrap();
        prop_assert!(psnr(&near, &x, 1.0).unwrap() > psnr(&far, &x, 1.0).unwrap());
        prop_assert!(close(psnr(&near, &x, 1.0).unwrap() - psnr(&far, &x, 1.0).unwrap(), 20.0 * 2f64.log10(), 1e-9));
        prop_assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_is_one_only_on_identity(seed: u64, e in 0.01f64..0.5) {
        let s = Shape::square(12);
        let x = image(s, seed).map(|v| 0.5 + 0.2 * v);
        prop_assert!(close(ssim(&x, &x).unwrap(), 1.0, 1e-12));
        let y = x.zip_map(&image(s, seed ^ 4), |a, b| a + e * b).unwrap();
        let v = ssim(&y, &x).unwrap();
        prop_assert!(v < 1.0 && v >= -1.0);
        prop_assert!(close(v, ssim(&x, &y).unwrap(), 1e-12));
    }

    #[test]
    fn pgm_round_trip_within_quantisation(w in 1usize..20, h in 1usize..20, seed: u64) {
        let x = image(Shape::new(w, h), seed).map(|v| (0.5 + 0.2 * v).clamp(0.0, 1.0));
        let back = decode_pgm(&encode_pgm(&x)).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn metrics_csv_round_trip(rows in prop::collection::vec((-50.0f64..100.0, -1.0f64..1.0, prop::option::of(0.0f64..10.0), prop::option::of(0.0f64..1.0)), 0..20)) {
        let records: Vec<FrameRecord> = rows.iter().enumerate()
            .map(|(k, &(psnr, ssim, gap, wall_time))| FrameRecord { frame: k, psnr, ssim, gap, wall_time })
            .collect();
        prop_assert_eq!(parse_metrics_csv(&metrics_csv(&records)).unwrap(), records);
    }

    #[test]
    fn config_render_round_trips(pet: bool, paper: bool, seed: u64, tau in 1e-4f64..0.003, burn in 0usize..50, chi in 0.01f64..1.0) {
        let mut c = RunConfig::defaults(if pet { Experiment::Pet } else { Experiment::Stabilise }, if paper { Scale::Paper } else { Scale::Desk });
        c.run.seed = seed;
        c.run.burn_in = burn;
        c.step.tau = tau;
        c.predictor.chi = chi;
        prop_assert_eq!(parse_config(&c.render()).unwrap(), c);
    }

    #[test]
    fn substreams_are_reproducible(seed: u64, stream in 0u64..1000) {
        let mut a = SeededRng::substream(seed, stream);
        let mut b = SeededRng::substream(seed, stream);
        let mut c = SeededRng::substream(seed, stream + 1);
        let va: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let vb: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        let vc: Vec<f64> = (0..8).map(|_| c.uniform()).collect();
        prop_assert_eq!(&va, &vb);
        prop_assert_ne!(&va, &vc);
    }
}


