//! PDE solvers, random initial conditions and dataset containers.

mod dataset;
mod grf;
mod recipes;
mod solvers;
mod spec;
pub mod spectral;

pub use dataset::{
    build_dataset, load_dataset, sample_seed, save_dataset, Provenance, TaskDataset,
};
pub use grf::{
    bessel_k, ln_bessel_k, matern_covariance, square_wave, square_wave_ic, GrfKernel, GrfSampler,
    GrfSpec,
};
pub use recipes::{
    recipe, recipe_on_grid, DatasetKind, InitialCondition, Recipe, NAGUMO_ALPHA, RECIPE_NAMES,
};
pub use solvers::{solve, solve_wave_with_energy, TorusSpectral};
pub use spec::{BoundaryCondition, Equation, PdeSpec, Reaction};
