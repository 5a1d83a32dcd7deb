use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft as FftPlan, FftPlanner};

/// In-place FFT over a row-major 1D or 2D grid. `inverse` includes the
/// `1/n` normalization.
#[derive(Clone)]
pub struct Fft {
    grid: Vec<usize>,
    forward: Vec<Arc<dyn FftPlan<f64>>>,
    inverse: Vec<Arc<dyn FftPlan<f64>>>,
}

impl Fft {
    pub fn new(grid: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: grid.to_vec(),
            forward: grid.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: grid.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply(&self.forward, buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.apply(&self.inverse, buf);
        let s = 1.0 / self.len() as f64;
        for c in buf.iter_mut() {
            *c *= s;
        }
    }

    fn apply(&self, plans: &[Arc<dyn FftPlan<f64>>], buf: &mut [Complex64]) {
        let last = self.grid.len() - 1;
        // contiguous axis: every row at once
        plans[last].process(buf);
        if self.grid.len() == 2 {
            let (rows, cols) = (self.grid[0], self.grid[1]);
            let mut col = vec![Complex64::default(); rows];
            for j in 0..cols {
                for i in 0..rows {
                    col[i] = buf[i * cols + j];
                }
                plans[0].process(&mut col);
                for i in 0..rows {
                    buf[i * cols + j] = col[i];
                }
            }
        }
    }
}

/// Angular wavenumbers `2 pi k / length` in FFT order.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            2.0 * PI * k / length
        })
        .collect()
}

/// Integer frequency index in FFT order, with the Nyquist mode positive.
pub fn frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}
