//! Solver runs against closed-form or refined references. Each function
//! returns the measured discrepancy; callers compare it to a tolerance.

use std::f64::consts::PI;

use ncwno::pde::{solve, solve_wave_with_energy, BoundaryCondition, Equation, PdeSpec, Reaction};
use ncwno::Tensor;

pub const NAGUMO_ALPHA: f64 = 0.3;

pub fn spec(equation: Equation, grid: &[usize], dt: f64, record: f64, frames: usize) -> PdeSpec {
    PdeSpec {
        equation,
        grid: grid.to_vec(),
        length: 1.0,
        boundary: BoundaryCondition::Periodic,
        dt,
        record_every: record,
        frames,
    }
}

pub fn periodic_1d(n: usize, f: impl Fn(f64) -> f64) -> Tensor<f64> {
    Tensor::from_fn(&[n], |i| f(i as f64 / n as f64))
}

pub fn periodic_2d(n: usize, f: impl Fn(f64, f64) -> f64) -> Tensor<f64> {
    Tensor::from_fn(&[n, n], |p| {
        f((p / n) as f64 / n as f64, (p % n) as f64 / n as f64)
    })
}

pub fn frame(traj: &Tensor<f64>, i: usize) -> Vec<f64> {
    traj.index_axis0(i).into_data()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative L2 error against the shifted sine at t = 1.
pub fn advection_error() -> f64 {
    let n = 256;
    let alpha = 0.25;
    let u0 = periodic_1d(n, |x| (2.0 * PI * x).sin());
    let t = solve(
        &spec(Equation::Advection { velocity: alpha }, &[n], 1e-3, 1.0, 2),
        &u0,
    )
    .unwrap();
    let exact: Vec<f64> = (0..n)
        .map(|i| (2.0 * PI * ((i as f64 / n as f64 - alpha).rem_euclid(1.0))).sin())
        .collect();
    rel_l2(&frame(&t, 1), &exact)
}

/// `|measured / exact - 1|` of the amplitude decay of a Fourier mode over
/// t = 1, for 1D and 2D.
pub fn heat_decay_errors() -> [f64; 2] {
    let alpha = 1e-3;
    let k = 2.0;
    let u0 = periodic_1d(256, |x| (2.0 * PI * k * x).sin());
    let t = solve(
        &spec(Equation::Heat { diffusivity: alpha }, &[256], 1e-3, 1.0, 2),
        &u0,
    )
    .unwrap();
    let rate = (-alpha * (2.0 * PI * k).powi(2)).exp();
    let e1 = (norm(&frame(&t, 1)) / u0.norm() / rate - 1.0).abs();

    let u0 = periodic_2d(32, |x, y| (2.0 * PI * k * x).sin() * (2.0 * PI * y).cos());
    let t = solve(
        &spec(
            Equation::Heat { diffusivity: alpha },
            &[32, 32],
            1e-3,
            1.0,
            2,
        ),
        &u0,
    )
    .unwrap();
    let rate = (-alpha * 4.0 * PI * PI * (k * k + 1.0)).exp();
    let e2 = (norm(&frame(&t, 1)) / u0.norm() / rate - 1.0).abs();
    [e1, e2]
}

pub fn wave_spec(n: usize, frames: usize, record: f64) -> PdeSpec {
    PdeSpec {
        boundary: BoundaryCondition::Reflective,
        ..spec(Equation::Wave { speed: 0.1 }, &[n], 1e-3, record, frames)
    }
}

/// Worst relative L2 error of the standing cosine mode over t in (0, 1], and
/// the worst relative energy drift.
pub fn wave_eigenmode_errors() -> (f64, f64) {
    let n = 256;
    let s = wave_spec(n, 11, 0.1);
    let x = s.axis(n);
    let u0 = Tensor::from_fn(&[n], |i| (PI * x[i]).cos());
    let (t, energy) = solve_wave_with_energy(&s, &u0).unwrap();
    let omega = PI * 0.1f64.sqrt();
    let mut worst = 0.0f64;
    for f in 1..11 {
        let time = f as f64 * 0.1;
        let exact: Vec<f64> = x
            .iter()
            .map(|xi| (PI * xi).cos() * (omega * time).cos())
            .collect();
        worst = worst.max(rel_l2(&frame(&t, f), &exact));
    }
    let e0 = energy[0];
    let drift = energy
        .iter()
        .map(|e| ((e - e0) / e0).abs())
        .fold(0.0, f64::max);
    (worst, drift)
}

pub fn ns_spec(forcing: bool, frames: usize) -> PdeSpec {
    spec(
        Equation::NavierStokes {
            viscosity: 1e-3,
            forcing,
        },
        &[32, 32],
        1e-3,
        0.5,
        frames,
    )
}

/// `|measured / exact - 1|` for the Taylor–Green vorticity decay at t = 1.
pub fn taylor_green_error() -> f64 {
    let w0 = periodic_2d(32, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
    let t = solve(&ns_spec(false, 3), &w0).unwrap();
    let rate = (-8.0 * PI * PI * 1e-3 * 1.0f64).exp();
    (norm(&frame(&t, 2)) / w0.norm() / rate - 1.0).abs()
}

/// Largest drift of any Allen–Cahn or Nagumo constant fixed point, 1D and 2D.
pub fn fixed_point_drift() -> f64 {
    let ac = Equation::ReactionDiffusion {
        diffusion: 1e-3,
        reaction: Reaction::AllenCahn,
    };
    let ng = Equation::ReactionDiffusion {
        diffusion: 1e-3,
        reaction: Reaction::Nagumo {
            alpha: NAGUMO_ALPHA,
        },
    };
    let mut worst = 0.0f64;
    for (eq, points) in [
        (ac, vec![1.0, -1.0, 0.0]),
        (ng, vec![0.0, 1.0, NAGUMO_ALPHA]),
    ] {
        for grid in [vec![64], vec![16, 16]] {
            for &c in &points {
                let u0 = Tensor::full(&grid, c);
                let t = solve(&spec(eq, &grid, 1e-3, 0.1, 4), &u0).unwrap();
                for v in t.data() {
                    worst = worst.max((v - c).abs());
                }
            }
        }
    }
    worst
}

pub fn ks_spec(dt: f64, frames: usize) -> PdeSpec {
    PdeSpec {
        length: 22.0 * PI,
        ..spec(
            Equation::KuramotoSivashinsky {
                hyperviscosity: 1.0,
            },
            &[128],
            dt,
            0.1,
            frames,
        )
    }
}

/// Worst relative L2 gap between dt = 0.01 and dt = 0.0025 for t <= 1.
pub fn ks_refinement_error() -> f64 {
    let u0 = periodic_1d(128, |x| (2.0 * PI * x).cos() * (1.0 + (2.0 * PI * x).sin()));
    let coarse = solve(&ks_spec(0.01, 11), &u0).unwrap();
    let fine = solve(&ks_spec(0.0025, 11), &u0).unwrap();
    (1..11)
        .map(|f| rel_l2(&frame(&coarse, f), &frame(&fine, f)))
        .fold(0.0, f64::max)
}

/// Observed order of the Burgers time stepper from three halvings of dt
/// against a dt/32 reference, together with the errors.
pub fn burgers_time_order() -> (f64, Vec<f64>) {
    let n = 128;
    let u0 = periodic_1d(n, |x| 0.5 * (2.0 * PI * x).sin() + 0.2);
    let run = |dt: f64| {
        let s = spec(Equation::Burgers { viscosity: 1e-2 }, &[n], dt, 0.2, 2);
        frame(&solve(&s, &u0).unwrap(), 1)
    };
    let base = 2e-3;
    let reference = run(base / 32.0);
    let errs: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|d| rel_l2(&run(base / d), &reference))
        .collect();
    ((errs[0] / errs[2]).log2() / 2.0, errs)
}
