use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::spectral::Fft;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Covariance of a zero-mean Gaussian random field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrfKernel {
    /// `sigma^2 exp(-r^2 / (2 length^2))`.
    Rbf { sigma: f64, length: f64 },
    /// Matern covariance with smoothness `eta`.
    Matern {
        variance: f64,
        length: f64,
        eta: f64,
    },
    /// Periodic field with Fourier variances `amplitude (4 pi^2 |k|^2 + shift)^-exponent`.
    SpectralPower {
        amplitude: f64,
        shift: f64,
        exponent: f64,
    },
}

/// A kernel together with the grid it is sampled on. Coordinates are
/// `i / n` along each axis of the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrfSpec {
    pub kernel: GrfKernel,
    pub grid: Vec<usize>,
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "random field {name} must be positive, got {v}"
                )))
            }
        };
        match self.kernel {
            GrfKernel::Rbf { sigma, length } => {
                positive("sigma", sigma)?;
                positive("length", length)?;
            }
            GrfKernel::Matern {
                variance,
                length,
                eta,
            } => {
                positive("variance", variance)?;
                positive("length", length)?;
                positive("eta", eta)?;
            }
            GrfKernel::SpectralPower {
                amplitude,
                shift,
                exponent,
            } => {
                positive("amplitude", amplitude)?;
                positive("shift", shift)?;
                if !exponent.is_finite() {
                    return Err(Error::InvalidArgument(
                        "random field exponent must be finite".into(),
                    ));
                }
            }
        }
        if self.grid.is_empty() || self.grid.len() > 2 || self.grid.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "random field grid {:?}",
                self.grid
            )));
        }
        Ok(())
    }
}

/// Modified Bessel function of the second kind, computed from
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` with the trapezoid rule
/// in the log domain. Requires `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}

/// Natural logarithm of [`bessel_k`]; finite where `K_nu(x)` itself overflows.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    let nu = nu.abs();
    let log_f = |t: f64| -x * t.cosh() + ln_cosh(nu * t);
    // the integrand peaks where x sinh t = nu tanh(nu t) ~ nu
    let peak = (nu / x).asinh();
    let top = log_f(peak).max(log_f(0.0));
    let mut end = peak + 1.0;
    while log_f(end) > top - 60.0 {
        end *= 1.5;
    }
    let n = 4000;
    let h = end / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * (log_f(i as f64 * h) - top).exp();
    }
    top + (acc * h).ln()
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Matern covariance at distance `r`.
pub fn matern_covariance(variance: f64, length: f64, eta: f64, r: f64) -> f64 {
    if r == 0.0 {
        return variance;
    }
    let z = (2.0 * eta).sqrt() * r / length;
    let ln =
        (1.0 - eta) * std::f64::consts::LN_2 - ln_gamma(eta) + eta * z.ln() + ln_bessel_k(eta, z);
    variance * ln.exp()
}

fn rbf(sigma: f64, length: f64, r2: f64) -> f64 {
    sigma * sigma * (-r2 / (2.0 * length * length)).exp()
}

fn cholesky(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let jittered = cov + DMatrix::identity(n, n) * 1e-10;
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

fn points(grid: &[usize]) -> Vec<Vec<f64>> {
    let axis = |n: usize| (0..n).map(move |i| i as f64 / n as f64);
    if grid.len() == 1 {
        axis(grid[0]).map(|x| vec![x]).collect()
    } else {
        axis(grid[0])
            .flat_map(|x| axis(grid[1]).map(move |y| vec![x, y]))
            .collect()
    }
}

enum Factor {
    /// `field = L z`.
    Dense(DMatrix<f64>),
    /// 2D separable: `field = Lx Z Ly^T`.
    Separable(DMatrix<f64>, DMatrix<f64>),
    /// Standard deviation of each Fourier coefficient.
    Spectral(Vec<f64>, Fft),
}

/// Draws fields for one [`GrfSpec`]; the covariance factor is computed once.
pub struct GrfSampler {
    grid: Vec<usize>,
    factor: Factor,
}

impl GrfSampler {
    pub fn new(spec: &GrfSpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid.clone();
        let factor = match spec.kernel {
            GrfKernel::Rbf { sigma, length } => {
                let axis = |n: usize, s: f64| {
                    DMatrix::from_fn(n, n, |i, j| {
                        let d = (i as f64 - j as f64) / n as f64;
                        rbf(s, length, d * d)
                    })
                };
                if grid.len() == 1 {
                    Factor::Dense(cholesky(axis(grid[0], sigma))?)
                } else {
                    Factor::Separable(
                        cholesky(axis(grid[0], sigma))?,
                        cholesky(axis(grid[1], 1.0))?,
                    )
                }
            }
            GrfKernel::Matern {
                variance,
                length,
                eta,
            } => {
                let pts = points(&grid);
                let n = pts.len();
                let cov = DMatrix::from_fn(n, n, |i, j| {
                    let r = pts[i]
                        .iter()
                        .zip(&pts[j])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    matern_covariance(variance, length, eta, r)
                });
                Factor::Dense(cholesky(cov)?)
            }
            GrfKernel::SpectralPower {
                amplitude,
                shift,
                exponent,
            } => {
                let wave = |i: usize, n: usize| {
                    let k = if i <= n / 2 {
                        i as f64
                    } else {
                        i as f64 - n as f64
                    };
                    k * k
                };
                let n: usize = grid.iter().product();
                let sd = (0..n)
                    .map(|p| {
                        let k2 = if grid.len() == 1 {
                            wave(p, grid[0])
                        } else {
                            wave(p / grid[1], grid[0]) + wave(p % grid[1], grid[1])
                        };
                        (amplitude * (4.0 * PI * PI * k2 + shift).powf(-exponent)).sqrt()
                    })
                    .collect();
                Factor::Spectral(sd, Fft::new(&grid))
            }
        };
        Ok(Self { grid, factor })
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    /// One field, shaped like the grid.
    pub fn sample(&self, rng: &mut impl Rng) -> Tensor<f64> {
        let n: usize = self.grid.iter().product();
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let data: Vec<f64> = match &self.factor {
            Factor::Dense(l) => {
                let z = nalgebra::DVector::from_fn(n, |_, _| normal());
                (l * z).iter().copied().collect()
            }
            Factor::Separable(lx, ly) => {
                let z = DMatrix::from_fn(self.grid[0], self.grid[1], |_, _| normal());
                let f = lx * z * ly.transpose();
                // row-major: x is the slow axis
                (0..n)
                    .map(|p| f[(p / self.grid[1], p % self.grid[1])])
                    .collect()
            }
            Factor::Spectral(sd, fft) => {
                // white noise has Fourier coefficients of variance n with
                // Hermitian symmetry; rescale to variance sd^2
                let mut buf: Vec<Complex64> =
                    (0..n).map(|_| Complex64::new(normal(), 0.0)).collect();
                fft.forward(&mut buf);
                let scale = 1.0 / (n as f64).sqrt();
                for (c, s) in buf.iter_mut().zip(sd) {
                    *c *= s * scale;
                }
                // unnormalized inverse
                fft.inverse(&mut buf);
                buf.iter().map(|c| c.re * n as f64).collect()
            }
        };
        Tensor::new(self.grid.clone(), data).expect("grid shape")
    }
}

/// Square pulse plus half-ellipse cap on `(0, 1)`:
/// `h 1[c - w/2, c + w/2](x) + sqrt(max(h^2 - (a (x - c))^2, 0))` with `a = 2h / w`.
pub fn square_wave(center: f64, width: f64, height: f64, x: f64) -> f64 {
    let a = 2.0 * height / width;
    let pulse = if (x - center).abs() <= width / 2.0 {
        height
    } else {
        0.0
    };
    pulse
        + (height * height - (a * (x - center)).powi(2))
            .max(0.0)
            .sqrt()
}

/// [`square_wave`] evaluated at `x_i = i / n`.
pub fn square_wave_ic(center: f64, width: f64, height: f64, n: usize) -> Tensor<f64> {
    Tensor::from_fn(&[n], |i| {
        square_wave(center, width, height, i as f64 / n as f64)
    })
}
