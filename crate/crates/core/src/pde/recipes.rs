use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grf::{GrfKernel, GrfSpec};
use super::spec::{BoundaryCondition, Equation, PdeSpec, Reaction};
use crate::error::{Error, Result};

/// How initial conditions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Grf {
        field: GrfSpec,
    },
    /// Square pulse with half-ellipse cap; each parameter uniform on `[lo, hi]`.
    SquareWave {
        center: [f64; 2],
        width: [f64; 2],
        height: [f64; 2],
    },
}

/// What a stored sample pairs up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetKind {
    /// First `window` frames as input channels, next `horizon` frames as target.
    Trajectory { window: usize, horizon: usize },
    /// Initial condition to the final recorded frame.
    Operator,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub pde: PdeSpec,
    pub initial: InitialCondition,
    pub kind: DatasetKind,
}

pub const RECIPE_NAMES: &[&str] = &[
    "burgers_1d",
    "wave_1d",
    "advection_1d",
    "heat_1d",
    "allen_cahn_1d",
    "nagumo_1d",
    "kuramoto_sivashinsky_1d",
    "advection_square_wave",
    "burgers_benchmark",
    "advection_2d",
    "heat_2d",
    "allen_cahn_2d",
    "nagumo_2d",
    "nagumo_2d_matern",
    "navier_stokes_2d",
    "burgers_2d",
];

pub const NAGUMO_ALPHA: f64 = 0.3;

fn rbf(sigma: f64, length: f64) -> GrfKernel {
    GrfKernel::Rbf { sigma, length }
}

/// A named recipe at its standard resolution.
pub fn recipe(name: &str) -> Result<Recipe> {
    recipe_on_grid(name, None)
}

/// A named recipe, optionally on a different grid (points per axis).
pub fn recipe_on_grid(name: &str, grid: Option<usize>) -> Result<Recipe> {
    let two_d = name.ends_with("_2d") || name == "nagumo_2d_matern";
    let traj = if two_d {
        DatasetKind::Trajectory {
            window: 10,
            horizon: 10,
        }
    } else {
        DatasetKind::Trajectory {
            window: 10,
            horizon: 30,
        }
    };
    let (default_n, kernel, equation, dt, record, kind, length, boundary) = match name {
        "burgers_1d" => (
            256,
            rbf(0.1, 0.1),
            Equation::Burgers { viscosity: 1e-3 },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "wave_1d" => (
            256,
            rbf(0.1, 0.1),
            Equation::Wave { speed: 0.1 },
            1e-3,
            0.01,
            traj,
            1.0,
            Some(BoundaryCondition::Reflective),
        ),
        "advection_1d" => (
            256,
            rbf(0.1, 0.25),
            Equation::Advection { velocity: 0.01 },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "heat_1d" => (
            256,
            rbf(0.1, 0.1),
            Equation::Heat { diffusivity: 1e-3 },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "allen_cahn_1d" => (
            256,
            rbf(0.1, 0.1),
            Equation::ReactionDiffusion {
                diffusion: 1e-3,
                reaction: Reaction::AllenCahn,
            },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "nagumo_1d" => (
            256,
            rbf(0.1f64.sqrt(), 0.1),
            Equation::ReactionDiffusion {
                diffusion: 1e-3,
                reaction: Reaction::Nagumo {
                    alpha: NAGUMO_ALPHA,
                },
            },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "kuramoto_sivashinsky_1d" => (
            256,
            rbf(0.1, 0.1),
            Equation::KuramotoSivashinsky {
                hyperviscosity: 1.0,
            },
            0.01,
            0.01,
            traj,
            22.0 * PI,
            None,
        ),
        "advection_square_wave" => (
            40,
            rbf(1.0, 1.0),
            Equation::Advection { velocity: 1.0 },
            1e-3,
            0.025,
            DatasetKind::Operator,
            1.0,
            None,
        ),
        "burgers_benchmark" => (
            1024,
            GrfKernel::SpectralPower {
                amplitude: 625.0,
                shift: 25.0,
                exponent: 2.0,
            },
            Equation::Burgers { viscosity: 0.1 },
            4e-6,
            1.0,
            DatasetKind::Operator,
            1.0,
            None,
        ),
        "advection_2d" => (
            64,
            rbf(0.1, 0.3),
            Equation::Advection { velocity: 0.05 },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "heat_2d" => (
            64,
            rbf(0.1, 0.25),
            Equation::Heat { diffusivity: 1e-3 },
            1e-3,
            0.1,
            traj,
            1.0,
            None,
        ),
        "allen_cahn_2d" => (
            64,
            rbf(0.1, 0.1),
            Equation::ReactionDiffusion {
                diffusion: 1e-3,
                reaction: Reaction::AllenCahn,
            },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "nagumo_2d" => (
            64,
            rbf(0.1f64.sqrt(), 0.3),
            Equation::ReactionDiffusion {
                diffusion: 1e-3,
                reaction: Reaction::Nagumo {
                    alpha: NAGUMO_ALPHA,
                },
            },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        "nagumo_2d_matern" => (
            64,
            GrfKernel::Matern {
                variance: 0.1,
                length: 0.3,
                eta: 10.0,
            },
            Equation::ReactionDiffusion {
                diffusion: 1e-3,
                reaction: Reaction::Nagumo {
                    alpha: NAGUMO_ALPHA,
                },
            },
            1e-3,
            0.1,
            traj,
            1.0,
            None,
        ),
        "navier_stokes_2d" => (
            64,
            GrfKernel::SpectralPower {
                amplitude: 7f64.powf(1.5),
                shift: 49.0,
                exponent: 2.5,
            },
            Equation::NavierStokes {
                viscosity: 1e-3,
                forcing: true,
            },
            1e-4,
            1.0,
            traj,
            1.0,
            None,
        ),
        "burgers_2d" => (
            64,
            rbf(0.1, 0.3),
            Equation::Burgers { viscosity: 1e-3 },
            1e-3,
            0.01,
            traj,
            1.0,
            None,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown recipe {other:?}; known: {}",
                RECIPE_NAMES.join(", ")
            )))
        }
    };
    let n = grid.unwrap_or(default_n);
    let grid = if two_d { vec![n, n] } else { vec![n] };
    let frames = match kind {
        DatasetKind::Trajectory { window, horizon } => window + horizon,
        DatasetKind::Operator => (1.0f64 / record).round() as usize + 1,
    };
    let initial = if name == "advection_square_wave" {
        InitialCondition::SquareWave {
            center: [0.3, 0.7],
            width: [0.3, 0.6],
            height: [1.0, 2.0],
        }
    } else {
        InitialCondition::Grf {
            field: GrfSpec {
                kernel,
                grid: grid.clone(),
            },
        }
    };
    Ok(Recipe {
        name: name.to_string(),
        pde: PdeSpec {
            equation,
            grid,
            length,
            boundary: boundary.unwrap_or_default(),
            dt,
            record_every: record,
            frames,
        },
        initial,
        kind,
    })
}
