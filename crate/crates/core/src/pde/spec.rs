use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reaction {
    /// `u - u^3`.
    AllenCahn,
    /// `u (1 - u) (u - alpha)`.
    Nagumo { alpha: f64 },
}

impl Reaction {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Reaction::AllenCahn => u - u * u * u,
            Reaction::Nagumo { alpha } => u * (1.0 - u) * (u - alpha),
        }
    }
}

/// The governing equation and its coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Equation {
    /// `u_t + velocity u_x = 0`; in 2D the transport is along x only.
    Advection { velocity: f64 },
    /// `u_t = diffusivity lap u`.
    Heat { diffusivity: f64 },
    /// `u_tt = speed u_xx`, zero initial velocity.
    Wave { speed: f64 },
    /// `u_t + 0.5 div(u^2) = viscosity lap u`.
    Burgers { viscosity: f64 },
    /// `u_t = diffusion lap u + reaction(u)`.
    ReactionDiffusion { diffusion: f64, reaction: Reaction },
    /// Vorticity form on the unit torus, optionally with the constant forcing
    /// `0.1 (sin 2pi(x+y) + cos 2pi(x+y))`.
    NavierStokes { viscosity: f64, forcing: bool },
    /// `u_t = -u u_x - u_xx - hyperviscosity u_xxxx`.
    KuramotoSivashinsky { hyperviscosity: f64 },
}

impl Equation {
    pub fn family(&self) -> &'static str {
        match self {
            Equation::Advection { .. } => "advection",
            Equation::Heat { .. } => "heat",
            Equation::Wave { .. } => "wave",
            Equation::Burgers { .. } => "burgers",
            Equation::ReactionDiffusion { .. } => "reaction_diffusion",
            Equation::NavierStokes { .. } => "navier_stokes",
            Equation::KuramotoSivashinsky { .. } => "kuramoto_sivashinsky",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    #[default]
    Periodic,
    /// Homogeneous Neumann.
    Reflective,
}

/// One PDE setup: equation, discretization and recording schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    pub equation: Equation,
    pub grid: Vec<usize>,
    /// Side length of the (square) domain.
    pub length: f64,
    pub boundary: BoundaryCondition,
    /// Solver step.
    pub dt: f64,
    /// Time between recorded frames; a whole multiple of `dt`.
    pub record_every: f64,
    /// Number of recorded frames, including the initial condition.
    pub frames: usize,
}

impl PdeSpec {
    pub fn rank(&self) -> usize {
        self.grid.len()
    }

    pub fn points(&self) -> usize {
        self.grid.iter().product()
    }

    /// Grid spacing. Periodic grids use `length / n`; reflective grids put
    /// nodes on both walls and use `length / (n - 1)`.
    pub fn dx(&self) -> f64 {
        match self.boundary {
            BoundaryCondition::Periodic => self.length / self.grid[0] as f64,
            BoundaryCondition::Reflective => self.length / (self.grid[0] - 1) as f64,
        }
    }

    /// Node coordinates along one axis.
    pub fn axis(&self, n: usize) -> Vec<f64> {
        let h = match self.boundary {
            BoundaryCondition::Periodic => self.length / n as f64,
            BoundaryCondition::Reflective => self.length / (n - 1) as f64,
        };
        (0..n).map(|i| i as f64 * h).collect()
    }

    /// Solver steps between recorded frames.
    pub fn steps_per_record(&self) -> Result<usize> {
        let ratio = self.record_every / self.dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "record interval {} is not a whole multiple of dt {}",
                self.record_every, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.record_every * self.frames.saturating_sub(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.len() > 2 || self.grid.iter().any(|&n| n < 4) {
            return Err(Error::InvalidArgument(format!(
                "solver grid {:?}",
                self.grid
            )));
        }
        if self.grid.len() == 2 && self.grid[0] != self.grid[1] {
            return Err(Error::InvalidArgument(
                "2D solvers need a square grid".into(),
            ));
        }
        if !(self.dt > 0.0) || !(self.length > 0.0) || self.frames == 0 {
            return Err(Error::InvalidArgument(
                "dt and length must be positive and at least one frame recorded".into(),
            ));
        }
        self.steps_per_record()?;
        let needs = match self.equation {
            Equation::Wave { .. } => BoundaryCondition::Reflective,
            _ => BoundaryCondition::Periodic,
        };
        if self.boundary != needs {
            return Err(Error::InvalidArgument(format!(
                "{} solver requires {needs:?} boundaries",
                self.equation.family()
            )));
        }
        let rank_ok = match self.equation {
            Equation::Wave { .. } | Equation::KuramotoSivashinsky { .. } => self.rank() == 1,
            Equation::NavierStokes { .. } => self.rank() == 2,
            _ => true,
        };
        if !rank_ok {
            return Err(Error::InvalidArgument(format!(
                "{} solver does not support {} spatial dimensions",
                self.equation.family(),
                self.rank()
            )));
        }
        Ok(())
    }
}
