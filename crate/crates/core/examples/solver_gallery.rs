//! Runs every 1D recipe from one random initial condition and prints how the
//! field evolves, plus the closed-form heat decay as a sanity check.
//!
//! ```text
//! cargo run --release --example solver_gallery [grid]
//! ```

use std::f64::consts::PI;
use std::time::Instant;

use ncwno::pde::{
    recipe_on_grid, solve, square_wave_ic, Equation, GrfSampler, InitialCondition, RECIPE_NAMES,
};
use ncwno::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l2(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn main() -> ncwno::Result<()> {
    let grid: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(128);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    println!(
        "{:<26} {:>7} {:>9} {:>9} {:>8}",
        "recipe", "frames", "rms(t0)", "rms(end)", "ms"
    );
    // burgers_benchmark is skipped: its dt is tuned for 1024 points and slow.
    let one_d = RECIPE_NAMES
        .iter()
        .filter(|n| !n.contains("2d") && **n != "burgers_benchmark");
    for name in one_d {
        let r = recipe_on_grid(name, Some(grid))?;
        let u0 = match &r.initial {
            InitialCondition::Grf { field } => GrfSampler::new(field)?.sample(&mut rng),
            InitialCondition::SquareWave {
                center,
                width,
                height,
            } => square_wave_ic(
                rng.random_range(center[0]..=center[1]),
                rng.random_range(width[0]..=width[1]),
                rng.random_range(height[0]..=height[1]),
                r.pde.grid[0],
            ),
        };
        let start = Instant::now();
        let traj = solve(&r.pde, &u0)?;
        let last = traj.shape()[0] - 1;
        println!(
            "{name:<26} {:>7} {:>9.4} {:>9.4} {:>8.2}",
            last + 1,
            l2(u0.data()),
            l2(traj.index_axis0(last).data()),
            start.elapsed().as_secs_f64() * 1e3
        );
    }

    let r = recipe_on_grid("heat_1d", Some(grid))?;
    let Equation::Heat { diffusivity: alpha } = r.pde.equation else {
        unreachable!("heat_1d is a heat recipe")
    };
    let u0 = Tensor::from_fn(&[grid], |i| (4.0 * PI * i as f64 / grid as f64).sin());
    let traj = solve(&r.pde, &u0)?;
    let last = traj.shape()[0] - 1;
    let t = last as f64 * r.pde.record_every;
    let measured = l2(traj.index_axis0(last).data()) / l2(u0.data());
    let exact = (-alpha * (4.0 * PI).powi(2) * t).exp();
    println!("\nheat mode k=2 after t={t:.2}: decay {measured:.6}, exact {exact:.6}");
    Ok(())
}
