use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{daubechies_filters, Boundary, LevelPlan};

/// How gate probabilities are shared across lifted channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// One probability per expert and channel.
    #[default]
    PerChannel,
    /// One probability per expert, replicated over channels.
    Broadcast,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of expert blocks `h`.
    pub blocks: usize,
    /// Experts per block `d_e`.
    pub experts: usize,
    /// Lifted channel width `d_v`.
    pub width: usize,
    /// Wavelet compression level `s`.
    pub levels: usize,
    /// Spatial extents; one entry for 1D, two for 2D.
    pub grid: Vec<usize>,
    /// Input channels before the coordinate channels are appended.
    pub in_channels: usize,
    pub out_channels: usize,
    pub gate_mode: GateMode,
    /// Daubechies order per expert (`N` in dbN).
    pub bases: Vec<usize>,
    /// Size of the one-hot task code.
    pub max_tasks: usize,
    /// Width of the label embedding fed to the gates.
    pub label_dim: usize,
    /// Hidden widths of the gate's dense stack.
    pub gate_hidden: Vec<usize>,
    /// Channels of the 2D gate's convolutional stack.
    pub gate_conv_channels: usize,
    pub gate_conv_kernel: usize,
    /// Hidden width of the projection Q.
    pub projection_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            experts: 10,
            width: 64,
            levels: 4,
            grid: vec![256],
            in_channels: 10,
            out_channels: 1,
            gate_mode: GateMode::PerChannel,
            bases: (1..=10).collect(),
            max_tasks: 6,
            label_dim: 6,
            gate_hidden: vec![512, 256, 128, 64, 32],
            gate_conv_channels: 64,
            gate_conv_kernel: 5,
            projection_width: 128,
        }
    }
}

impl ModelConfig {
    /// Paper-scale 2D layout on a 64x64 grid.
    pub fn default_2d() -> Self {
        Self {
            grid: vec![64, 64],
            gate_hidden: vec![128, 64],
            ..Self::default()
        }
    }

    /// A small configuration for quick runs on one core.
    pub fn desk(grid: usize, experts: usize) -> Self {
        Self {
            blocks: 2,
            experts,
            width: 16,
            levels: 3,
            grid: vec![grid],
            bases: (1..=experts).collect(),
            gate_hidden: vec![64, 32],
            projection_width: 32,
            ..Self::default()
        }
    }

    pub fn rank(&self) -> usize {
        self.grid.len()
    }

    pub fn grid_points(&self) -> usize {
        self.grid.iter().product()
    }

    /// Channels entering the lift: inputs plus one coordinate per axis.
    pub fn lift_inputs(&self) -> usize {
        self.in_channels + self.rank()
    }

    /// Width of each gate's output layer.
    pub fn gate_outputs(&self) -> usize {
        match self.gate_mode {
            GateMode::PerChannel => self.experts * self.width,
            GateMode::Broadcast => self.experts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks == 0 || self.experts == 0 || self.width == 0 {
            return bad("blocks, experts and width must be at least 1".into());
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.grid.is_empty() || self.grid.len() > 2 || self.grid.contains(&0) {
            return bad(format!(
                "grid must have 1 or 2 positive extents, got {:?}",
                self.grid
            ));
        }
        if self.bases.len() != self.experts {
            return bad(format!(
                "{} bases listed for {} experts",
                self.bases.len(),
                self.experts
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("in_channels and out_channels must be at least 1".into());
        }
        if self.max_tasks == 0 || self.label_dim == 0 || self.projection_width == 0 {
            return bad("max_tasks, label_dim and projection_width must be at least 1".into());
        }
        if self.rank() == 2 {
            let k = self.gate_conv_kernel;
            if k == 0 || self.gate_conv_channels == 0 {
                return bad("gate convolution needs a positive kernel and channel count".into());
            }
            let side = self.grid.iter().min().copied().unwrap_or(0);
            let after = side
                .checked_sub(k)
                .map(|r| r / 2 + 1)
                .and_then(|n| n.checked_sub(2 * (k - 1)));
            if !matches!(after, Some(n) if n >= 2) {
                return bad(format!(
                    "grid {:?} too small for the gate's convolution stack",
                    self.grid
                ));
            }
        }
        for &n in &self.bases {
            let bank = daubechies_filters(n).map_err(|e| Error::Config(e.to_string()))?;
            LevelPlan::new(&self.grid, &bank, self.levels, Boundary::Zero)
                .map_err(|e| Error::Config(format!("basis db{n}: {e}")))?;
        }
        Ok(())
    }
}
