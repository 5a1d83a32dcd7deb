use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b} values")));
    }
    Ok(())
}

/// `||truth - pred|| / ||truth||` over all entries.
pub fn relative_l2<T: Element>(truth: &[T], pred: &[T]) -> Result<f64> {
    same_len(truth.len(), pred.len(), "relative L2")?;
    let (mut num, mut den) = (0.0, 0.0);
    for (u, v) in truth.iter().zip(pred) {
        let (u, v) = (u.to_f64c(), v.to_f64c());
        num += (u - v) * (u - v);
        den += u * u;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("ground truth has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// `1 - relative_l2(truth, pred)`.
pub fn accuracy<T: Element>(truth: &[T], pred: &[T]) -> Result<f64> {
    Ok(1.0 - relative_l2(truth, pred)?)
}

/// Frobenius inner product over the product of Frobenius norms.
pub fn cosine_similarity<T: Element>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "cosine similarity of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let dot: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| a.to_f64c() * b.to_f64c())
        .sum();
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero tensor".into(),
        ));
    }
    Ok(dot / (nx * ny))
}

/// Sample mean with a normal-approximation 95% interval, `mean +- 1.96 sd / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "confidence interval of no samples".into(),
            ));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            low: mean - half,
            high: mean + half,
            n,
        })
    }
}
