mod common;

use std::f64::consts::PI;

use common::oracles::{self, frame, ks_spec, ns_spec, periodic_1d, spec, wave_spec};
use ncwno::pde::{solve, Equation, GrfKernel, GrfSampler, GrfSpec, Reaction, TorusSpectral};
use ncwno::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn grf_ic(grid: &[usize], seed: u64) -> Tensor<f64> {
    let s = GrfSampler::new(&GrfSpec {
        kernel: GrfKernel::Rbf {
            sigma: 0.5,
            length: 0.1,
        },
        grid: grid.to_vec(),
    })
    .unwrap();
    s.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn advection_at_rest_is_constant() {
    let u0 = grf_ic(&[64], 1);
    let t = solve(
        &spec(Equation::Advection { velocity: 0.0 }, &[64], 1e-3, 0.01, 5),
        &u0,
    )
    .unwrap();
    for f in 0..5 {
        assert_eq!(frame(&t, f), u0.data());
    }
}

#[test]
fn advection_follows_characteristics() {
    let err = oracles::advection_error();
    assert!(err < 1e-2, "relative error {err}");
}

#[test]
fn advection_conserves_mean_in_2d() {
    let u0 = grf_ic(&[32, 32], 2);
    let t = solve(
        &spec(
            Equation::Advection { velocity: 0.05 },
            &[32, 32],
            1e-3,
            0.05,
            5,
        ),
        &u0,
    )
    .unwrap();
    let m0 = mean(u0.data());
    for f in 1..5 {
        assert!((mean(&frame(&t, f)) - m0).abs() < 1e-10);
    }
}

#[test]
fn advection_rejects_large_courant_number() {
    let u0 = grf_ic(&[64], 3);
    let r = solve(
        &spec(
            Equation::Advection { velocity: 100.0 },
            &[64],
            1e-3,
            0.01,
            2,
        ),
        &u0,
    );
    assert!(matches!(r, Err(Error::Stability(_))), "{r:?}");
}

#[test]
fn heat_mode_decays_exponentially() {
    let [e1, e2] = oracles::heat_decay_errors();
    assert!(e1 < 1e-2 && e2 < 1e-2, "1D {e1}, 2D {e2}");
}

#[test]
fn heat_keeps_constants_and_means() {
    for grid in [vec![64], vec![16, 16]] {
        let c = Tensor::full(&grid, 0.7);
        let t = solve(
            &spec(Equation::Heat { diffusivity: 1e-3 }, &grid, 1e-3, 0.1, 3),
            &c,
        )
        .unwrap();
        for f in 0..3 {
            assert!(max_abs_diff(&frame(&t, f), c.data()) < 1e-12);
        }
        let u0 = grf_ic(&grid, 4);
        let t = solve(
            &spec(Equation::Heat { diffusivity: 1e-3 }, &grid, 1e-3, 0.1, 3),
            &u0,
        )
        .unwrap();
        for f in 1..3 {
            assert!((mean(&frame(&t, f)) - mean(u0.data())).abs() < 1e-10);
        }
    }
}

#[test]
fn wave_from_rest_at_zero_stays_zero() {
    let t = solve(&wave_spec(64, 5, 0.01), &Tensor::zeros(&[64])).unwrap();
    assert!(t.data().iter().all(|&v| v == 0.0));
}

#[test]
fn wave_neumann_eigenmode() {
    let (err, drift) = oracles::wave_eigenmode_errors();
    assert!(err < 2e-2, "mode error {err}");
    assert!(drift < 1e-2, "energy drift {drift}");
}

#[test]
fn wave_requires_reflective_walls() {
    let s = spec(Equation::Wave { speed: 0.1 }, &[64], 1e-3, 0.01, 2);
    assert!(solve(&s, &Tensor::zeros(&[64])).is_err());
}

#[test]
fn burgers_zero_and_mean() {
    let s = spec(Equation::Burgers { viscosity: 1e-3 }, &[128], 1e-3, 0.05, 5);
    let t = solve(&s, &Tensor::zeros(&[128])).unwrap();
    assert!(t.data().iter().all(|&v| v == 0.0));
    let u0 = grf_ic(&[128], 5);
    let t = solve(&s, &u0).unwrap();
    for f in 1..5 {
        assert!((mean(&frame(&t, f)) - mean(u0.data())).abs() < 1e-8);
    }
    let s2 = spec(
        Equation::Burgers { viscosity: 1e-3 },
        &[32, 32],
        1e-3,
        0.05,
        3,
    );
    let u0 = grf_ic(&[32, 32], 6);
    let t = solve(&s2, &u0).unwrap();
    assert!((mean(&frame(&t, 2)) - mean(u0.data())).abs() < 1e-8);
}

#[test]
fn burgers_is_first_order_in_time() {
    let (slope, errs) = oracles::burgers_time_order();
    assert!((slope - 1.0).abs() < 0.2, "errors {errs:?}, slope {slope}");
}

#[test]
fn burgers_blow_up_is_reported() {
    let u0 = periodic_1d(64, |x| 5e3 * (2.0 * PI * x).sin());
    let s = spec(Equation::Burgers { viscosity: 1e-3 }, &[64], 1e-6, 1e-5, 2);
    assert!(solve(&s, &u0).is_err());
}

#[test]
fn reaction_fixed_points() {
    let drift = oracles::fixed_point_drift();
    assert!(drift < 1e-10, "drift {drift:e}");
}

#[test]
fn allen_cahn_respects_bounds() {
    let u0 = grf_ic(&[128], 7).map(|v| v.clamp(-1.0, 1.0));
    let eq = Equation::ReactionDiffusion {
        diffusion: 1e-3,
        reaction: Reaction::AllenCahn,
    };
    let t = solve(&spec(eq, &[128], 1e-3, 0.1, 21), &u0).unwrap();
    assert!(t.data().iter().all(|v| v.abs() <= 1.0 + 1e-3));
}

#[test]
fn navier_stokes_zero_stays_zero() {
    let t = solve(&ns_spec(false, 3), &Tensor::zeros(&[32, 32])).unwrap();
    assert!(t.data().iter().all(|&v| v == 0.0));
}

#[test]
fn taylor_green_decay_and_divergence() {
    let err = oracles::taylor_green_error();
    assert!(err < 1e-2, "{err}");

    let n = 32;
    let forced = solve(&ns_spec(true, 3), &grf_ic(&[n, n], 8)).unwrap();
    let ops = TorusSpectral::new(n);
    for f in 0..3 {
        let (u, v) = ops.velocity(&frame(&forced, f));
        assert!(ops.divergence(&u, &v) < 1e-8);
    }
}

#[test]
fn kuramoto_sivashinsky_zero_and_mean() {
    let t = solve(&ks_spec(0.01, 3), &Tensor::zeros(&[128])).unwrap();
    assert!(t.data().iter().all(|&v| v == 0.0));
    let u0 = grf_ic(&[128], 9);
    let t = solve(&ks_spec(0.01, 11), &u0).unwrap();
    for f in 1..11 {
        assert!((mean(&frame(&t, f)) - mean(u0.data())).abs() < 1e-8);
    }
}

#[test]
fn kuramoto_sivashinsky_refinement() {
    let err = oracles::ks_refinement_error();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn record_interval_must_divide_steps() {
    let s = spec(Equation::Heat { diffusivity: 1e-3 }, &[64], 3e-3, 0.01, 2);
    assert!(matches!(
        solve(&s, &Tensor::zeros(&[64])),
        Err(Error::InvalidArgument(_))
    ));
}
