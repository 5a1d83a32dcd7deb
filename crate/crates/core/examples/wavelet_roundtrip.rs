//! Multilevel Daubechies analysis and synthesis of a noisy 1D signal and a
//! 2D field, with band lengths and reconstruction errors.
//!
//! ```text
//! cargo run --release --example wavelet_roundtrip
//! ```

use std::f64::consts::PI;

use ncwno::wavelet::{coeff_length, daubechies_filters, dwt_multilevel, idwt_multilevel, Boundary};
use ncwno::Tensor;

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn main() -> ncwno::Result<()> {
    let n = 256;
    let signal = Tensor::from_fn(&[1, n, 1], |i| {
        let x = i as f64 / n as f64;
        (2.0 * PI * x).sin() + 0.1 * (40.0 * PI * x).sin()
    });

    println!("1D, n = {n}");
    for order in [1, 2, 4, 6, 10] {
        let bank = daubechies_filters(order)?;
        let levels = 4;
        let coeffs = dwt_multilevel(&signal, &bank, levels, 1, Boundary::Zero)?;
        let back = idwt_multilevel(&coeffs, &bank)?;
        let band_lengths: Vec<usize> = coeffs.details.iter().map(|d| d[0].shape()[1]).collect();
        println!(
            "  db{order:<2} taps {:>2}  detail lengths {band_lengths:?}  coarse {}  round-trip {:.1e}",
            bank.taps(),
            coeff_length(n, levels as u32, order),
            max_abs_diff(&signal, &back)
        );
    }

    // Dropping every detail band keeps the slow component only.
    let bank = daubechies_filters(4)?;
    let mut coeffs = dwt_multilevel(&signal, &bank, 3, 1, Boundary::Zero)?;
    for level in &mut coeffs.details {
        for band in level {
            *band = Tensor::zeros(band.shape());
        }
    }
    let smooth = idwt_multilevel(&coeffs, &bank)?;
    let slow = Tensor::from_fn(&[1, n, 1], |i| (2.0 * PI * i as f64 / n as f64).sin());
    let interior = 16..n - 16;
    let err = interior
        .map(|i| (smooth.data()[i] - slow.data()[i]).abs())
        .fold(0.0, f64::max);
    println!("  db4, details dropped: max interior distance to the slow sine {err:.3}");

    let m = 128;
    let field = Tensor::from_fn(&[1, m, m, 1], |p| {
        let (x, y) = ((p / m) as f64 / m as f64, (p % m) as f64 / m as f64);
        (2.0 * PI * x).sin() * (4.0 * PI * y).cos()
    });
    let bank = daubechies_filters(6)?;
    let coeffs = dwt_multilevel(&field, &bank, 3, 2, Boundary::Zero)?;
    let back = idwt_multilevel(&coeffs, &bank)?;
    println!(
        "2D, {m}x{m}, db6, 3 levels: approx {:?}, {} bands per level, round-trip {:.1e}",
        coeffs.approx.shape(),
        coeffs.details[0].len(),
        max_abs_diff(&field, &back)
    );
    Ok(())
}
