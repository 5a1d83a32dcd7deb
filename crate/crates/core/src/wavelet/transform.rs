use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

use super::FilterBank;

/// Signal extension used at the borders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Zero padding; bands grow by `taps - 1` per level before decimation.
    #[default]
    Zero,
    /// Periodic wrap; bands are exactly half the input length.
    Periodic,
}

/// Support width of the level-`s` bands: `d / 2^s + 2 (d_psi - 1)`.
///
/// When `d` is not divisible by `2^s` the quotient is rounded up; the extra
/// coefficients are zero after analysis.
pub fn coeff_length(d: usize, s: u32, moments: usize) -> usize {
    let div = 1usize << s;
    d.div_ceil(div) + 2 * moments.saturating_sub(1)
}

/// One analysis/synthesis stage with the filters cast to the working precision.
#[derive(Debug, Clone)]
pub(crate) struct Stage<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    boundary: Boundary,
}

impl<T: Element> Stage<T> {
    pub(crate) fn new(bank: &FilterBank, boundary: Boundary) -> Self {
        let cast = |v: &[f64]| v.iter().map(|&c| T::from_f64c(c)).collect::<Vec<_>>();
        Self {
            lo: cast(bank.analysis_lowpass()),
            hi: cast(bank.analysis_highpass()),
            boundary,
        }
    }

    pub(crate) fn taps(&self) -> usize {
        self.lo.len()
    }

    /// `a[k] = sum_j lo[j] x[2k+1-j]`, likewise for `d`, for `k < a.len()`.
    pub(crate) fn analyze(&self, x: &[T], a: &mut [T], d: &mut [T]) {
        let n = x.len() as isize;
        let taps = self.taps() as isize;
        match self.boundary {
            Boundary::Zero => {
                for k in 0..a.len() {
                    let base = 2 * k as isize + 1;
                    let j0 = (base - (n - 1)).max(0);
                    let j1 = base.min(taps - 1);
                    let (mut sa, mut sd) = (T::zero(), T::zero());
                    let mut j = j0;
                    while j <= j1 {
                        let v = x[(base - j) as usize];
                        sa += self.lo[j as usize] * v;
                        sd += self.hi[j as usize] * v;
                        j += 1;
                    }
                    a[k] = sa;
                    d[k] = sd;
                }
            }
            Boundary::Periodic => {
                for k in 0..a.len() {
                    let base = 2 * k as isize + 1;
                    let (mut sa, mut sd) = (T::zero(), T::zero());
                    for j in 0..taps {
                        let v = x[(base - j).rem_euclid(n) as usize];
                        sa += self.lo[j as usize] * v;
                        sd += self.hi[j as usize] * v;
                    }
                    a[k] = sa;
                    d[k] = sd;
                }
            }
        }
    }

    /// Exact adjoint of [`Stage::analyze`]; for orthonormal filters it is also
    /// the inverse on the input length. Overwrites `x`.
    pub(crate) fn synthesize(&self, a: &[T], d: &[T], x: &mut [T]) {
        x.iter_mut().for_each(|v| *v = T::zero());
        let n = x.len() as isize;
        let taps = self.taps() as isize;
        match self.boundary {
            Boundary::Zero => {
                for k in 0..a.len() {
                    let base = 2 * k as isize + 1;
                    let j0 = (base - (n - 1)).max(0);
                    let j1 = base.min(taps - 1);
                    let (ak, dk) = (a[k], d[k]);
                    let mut j = j0;
                    while j <= j1 {
                        x[(base - j) as usize] +=
                            self.lo[j as usize] * ak + self.hi[j as usize] * dk;
                        j += 1;
                    }
                }
            }
            Boundary::Periodic => {
                for k in 0..a.len() {
                    let base = 2 * k as isize + 1;
                    let (ak, dk) = (a[k], d[k]);
                    for j in 0..taps {
                        x[(base - j).rem_euclid(n) as usize] +=
                            self.lo[j as usize] * ak + self.hi[j as usize] * dk;
                    }
                }
            }
        }
    }

    /// Separable analysis of an `h x w` plane into `[LL, HL, LH, HH]` bands of
    /// shape `out.0 x out.1`. The first letter is the filter along axis 0.
    pub(crate) fn analyze_2d(
        &self,
        plane: &[T],
        (h, w): (usize, usize),
        (oh, ow): (usize, usize),
        bands: &mut [Vec<T>; 4],
    ) {
        let mut lo_rows = vec![T::zero(); h * ow];
        let mut hi_rows = vec![T::zero(); h * ow];
        for r in 0..h {
            self.analyze(
                &plane[r * w..(r + 1) * w],
                &mut lo_rows[r * ow..(r + 1) * ow],
                &mut hi_rows[r * ow..(r + 1) * ow],
            );
        }
        for b in bands.iter_mut() {
            b.clear();
            b.resize(oh * ow, T::zero());
        }
        let mut col = vec![T::zero(); h];
        let mut ca = vec![T::zero(); oh];
        let mut cd = vec![T::zero(); oh];
        for (src, (ia, id)) in [(&lo_rows, (0, 1)), (&hi_rows, (2, 3))] {
            for c in 0..ow {
                for r in 0..h {
                    col[r] = src[r * ow + c];
                }
                self.analyze(&col, &mut ca, &mut cd);
                for r in 0..oh {
                    bands[ia][r * ow + c] = ca[r];
                    bands[id][r * ow + c] = cd[r];
                }
            }
        }
    }

    /// Adjoint of [`Stage::analyze_2d`].
    pub(crate) fn synthesize_2d(
        &self,
        bands: &[Vec<T>; 4],
        (oh, ow): (usize, usize),
        (h, w): (usize, usize),
        plane: &mut [T],
    ) {
        let mut lo_rows = vec![T::zero(); h * ow];
        let mut hi_rows = vec![T::zero(); h * ow];
        let mut col = vec![T::zero(); h];
        let mut ca = vec![T::zero(); oh];
        let mut cd = vec![T::zero(); oh];
        for (dst, (ia, id)) in [(&mut lo_rows, (0, 1)), (&mut hi_rows, (2, 3))] {
            for c in 0..ow {
                for r in 0..oh {
                    ca[r] = bands[ia][r * ow + c];
                    cd[r] = bands[id][r * ow + c];
                }
                self.synthesize(&ca, &cd, &mut col);
                for r in 0..h {
                    dst[r * ow + c] = col[r];
                }
            }
        }
        for r in 0..h {
            self.synthesize(
                &lo_rows[r * ow..(r + 1) * ow],
                &hi_rows[r * ow..(r + 1) * ow],
                &mut plane[r * w..(r + 1) * w],
            );
        }
    }
}

/// Per-level geometry of a multilevel transform over one or two spatial axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelPlan {
    /// `shapes[k]` is the approximation shape after `k` levels; `shapes[0]`
    /// is the signal. The last entry is the (possibly extended) level-s shape.
    pub shapes: Vec<Vec<usize>>,
}

impl LevelPlan {
    pub fn new(
        signal: &[usize],
        bank: &FilterBank,
        levels: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidArgument("wavelet level must be >= 1".into()));
        }
        if signal.is_empty() || signal.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "wavelet transform supports 1 or 2 spatial axes, got {}",
                signal.len()
            )));
        }
        let taps = bank.taps();
        let mut shapes = vec![signal.to_vec()];
        for k in 1..=levels {
            let prev = &shapes[k - 1];
            let next: Vec<usize> = match boundary {
                Boundary::Zero => prev.iter().map(|&n| (n + taps - 1) / 2).collect(),
                Boundary::Periodic => {
                    if prev.iter().any(|&n| n % 2 != 0 || n == 0) {
                        return Err(Error::SignalTooShort {
                            len: signal[0],
                            levels,
                            taps,
                        });
                    }
                    prev.iter().map(|&n| n / 2).collect()
                }
            };
            shapes.push(next);
        }
        if boundary == Boundary::Zero {
            let last = shapes.last_mut().expect("levels >= 1");
            for (axis, n) in last.iter_mut().enumerate() {
                if *n < taps {
                    return Err(Error::SignalTooShort {
                        len: signal[axis],
                        levels,
                        taps,
                    });
                }
                let width = coeff_length(signal[axis], levels as u32, bank.moments());
                *n = (*n).max(width);
            }
        }
        Ok(Self { shapes })
    }

    pub fn levels(&self) -> usize {
        self.shapes.len() - 1
    }

    pub fn rank(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn coarse_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty plan")
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse_shape().iter().product()
    }

    pub fn signal_len(&self) -> usize {
        self.shapes[0].iter().product()
    }
}

/// Multilevel coefficients of a `[batch, spatial.., channels]` tensor.
///
/// Band tensors keep the batch and channel axes of the input. In 1D each
/// level has one detail band; in 2D it has `[horizontal, vertical, diagonal]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs<T> {
    pub approx: Tensor<T>,
    /// `details[k]` holds the bands of level `k + 1`.
    pub details: Vec<Vec<Tensor<T>>>,
    pub plan: LevelPlan,
    pub boundary: Boundary,
}

fn band_count(rank: usize) -> usize {
    if rank == 1 {
        1
    } else {
        3
    }
}

fn layout(x: &Tensor<impl Element>, rank: usize) -> Result<(usize, Vec<usize>, usize)> {
    let shape = x.shape();
    if shape.len() != rank + 2 {
        return Err(Error::Shape(format!(
            "expected [batch, {rank} spatial axes, channels], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1..=rank].to_vec(), shape[rank + 1]))
}

fn gather_lane<T: Element>(x: &[T], b: usize, c: usize, n: usize, ch: usize, out: &mut [T]) {
    let base = b * n * ch;
    for i in 0..n {
        out[i] = x[base + i * ch + c];
    }
}

fn scatter_lane<T: Element>(y: &mut [T], b: usize, c: usize, n: usize, ch: usize, src: &[T]) {
    let base = b * n * ch;
    for i in 0..n {
        y[base + i * ch + c] = src[i];
    }
}

/// Multilevel forward transform over the spatial axes of `[batch, spatial.., channels]`.
pub fn dwt_multilevel<T: Element>(
    x: &Tensor<T>,
    bank: &FilterBank,
    levels: usize,
    spatial_rank: usize,
    boundary: Boundary,
) -> Result<WaveletCoeffs<T>> {
    let (batch, spatial, ch) = layout(x, spatial_rank)?;
    let plan = LevelPlan::new(&spatial, bank, levels, boundary)?;
    let stage = Stage::<T>::new(bank, boundary);
    let nb = band_count(spatial_rank);

    let mut details: Vec<Vec<Tensor<T>>> = (1..=levels)
        .map(|k| {
            let mut shape = vec![batch];
            shape.extend_from_slice(&plan.shapes[k]);
            shape.push(ch);
            (0..nb).map(|_| Tensor::zeros(&shape)).collect()
        })
        .collect();
    let mut approx_shape = vec![batch];
    approx_shape.extend_from_slice(plan.coarse_shape());
    approx_shape.push(ch);
    let mut approx = Tensor::zeros(&approx_shape);

    let n0 = plan.signal_len();
    let mut cur = vec![T::zero(); n0];
    for b in 0..batch {
        for c in 0..ch {
            gather_lane(x.data(), b, c, n0, ch, &mut cur);
            for k in 1..=levels {
                let inp = &plan.shapes[k - 1];
                let out = &plan.shapes[k];
                let nout: usize = out.iter().product();
                if spatial_rank == 1 {
                    let mut a = vec![T::zero(); nout];
                    let mut d = vec![T::zero(); nout];
                    stage.analyze(&cur, &mut a, &mut d);
                    scatter_lane(details[k - 1][0].data_mut(), b, c, nout, ch, &d);
                    cur = a;
                } else {
                    let mut bands: [Vec<T>; 4] = Default::default();
                    stage.analyze_2d(&cur, (inp[0], inp[1]), (out[0], out[1]), &mut bands);
                    for i in 0..3 {
                        scatter_lane(details[k - 1][i].data_mut(), b, c, nout, ch, &bands[i + 1]);
                    }
                    cur = std::mem::take(&mut bands[0]);
                }
            }
            let nout = plan.coarse_len();
            scatter_lane(approx.data_mut(), b, c, nout, ch, &cur);
            cur.resize(n0, T::zero());
        }
    }
    Ok(WaveletCoeffs {
        approx,
        details: std::mem::take(&mut details),
        plan,
        boundary,
    })
}

/// Inverse of [`dwt_multilevel`], reconstructing the original spatial extent.
pub fn idwt_multilevel<T: Element>(c: &WaveletCoeffs<T>, bank: &FilterBank) -> Result<Tensor<T>> {
    let plan = &c.plan;
    let rank = plan.rank();
    let levels = plan.levels();
    let nb = band_count(rank);
    let (batch, coarse, ch) = layout(&c.approx, rank)?;
    if coarse != plan.coarse_shape() {
        return Err(Error::Shape(format!(
            "approximation band {:?} does not match plan {:?}",
            coarse,
            plan.coarse_shape()
        )));
    }
    if c.details.len() != levels {
        return Err(Error::Shape(format!(
            "{} detail levels for a {levels}-level plan",
            c.details.len()
        )));
    }
    for (k, level) in c.details.iter().enumerate() {
        let mut expect = vec![batch];
        expect.extend_from_slice(&plan.shapes[k + 1]);
        expect.push(ch);
        if level.len() != nb || level.iter().any(|t| t.shape() != expect.as_slice()) {
            return Err(Error::Shape(format!(
                "level {} detail bands inconsistent with {expect:?}",
                k + 1
            )));
        }
    }
    let stage = Stage::<T>::new(bank, c.boundary);
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(&plan.shapes[0]);
    out_shape.push(ch);
    let mut out = Tensor::zeros(&out_shape);

    for b in 0..batch {
        for cc in 0..ch {
            let ncoarse = plan.coarse_len();
            let mut cur = vec![T::zero(); ncoarse];
            gather_lane(c.approx.data(), b, cc, ncoarse, ch, &mut cur);
            for k in (1..=levels).rev() {
                let band = &plan.shapes[k];
                let target = &plan.shapes[k - 1];
                let nband: usize = band.iter().product();
                let ntarget: usize = target.iter().product();
                let mut next = vec![T::zero(); ntarget];
                if rank == 1 {
                    let mut d = vec![T::zero(); nband];
                    gather_lane(c.details[k - 1][0].data(), b, cc, nband, ch, &mut d);
                    stage.synthesize(&cur, &d, &mut next);
                } else {
                    let mut bands: [Vec<T>; 4] = Default::default();
                    bands[0] = cur;
                    for i in 0..3 {
                        bands[i + 1] = vec![T::zero(); nband];
                        gather_lane(
                            c.details[k - 1][i].data(),
                            b,
                            cc,
                            nband,
                            ch,
                            &mut bands[i + 1],
                        );
                    }
                    stage.synthesize_2d(
                        &bands,
                        (band[0], band[1]),
                        (target[0], target[1]),
                        &mut next,
                    );
                }
                cur = next;
            }
            scatter_lane(out.data_mut(), b, cc, plan.signal_len(), ch, &cur);
        }
    }
    Ok(out)
}

/// Linear map `F` from a signal to its level-s approximation and detail
/// bands (finer detail bands dropped), together with its adjoint `F^T`.
///
/// `F^T` is synthesis from the level-s bands with all finer details zero,
/// which is exactly what a wavelet-domain expert reconstructs from.
#[derive(Debug, Clone)]
pub struct CoarseBands<T> {
    stage: Stage<T>,
    plan: LevelPlan,
}

impl<T: Element> CoarseBands<T> {
    pub fn new(spatial: &[usize], bank: &FilterBank, levels: usize) -> Result<Self> {
        let plan = LevelPlan::new(spatial, bank, levels, Boundary::Zero)?;
        Ok(Self {
            stage: Stage::new(bank, Boundary::Zero),
            plan,
        })
    }

    pub fn plan(&self) -> &LevelPlan {
        &self.plan
    }

    /// Number of level-s bands: 2 in 1D (A, D), 4 in 2D (LL, HL, LH, HH).
    pub fn band_count(&self) -> usize {
        if self.plan.rank() == 1 {
            2
        } else {
            4
        }
    }

    /// Applies `F` to one spatial signal; `bands[i]` gets `coarse_len` values.
    pub fn forward(&self, signal: &[T], bands: &mut [Vec<T>]) {
        let levels = self.plan.levels();
        let mut cur = signal.to_vec();
        for k in 1..=levels {
            let inp = &self.plan.shapes[k - 1];
            let out = &self.plan.shapes[k];
            let nout: usize = out.iter().product();
            if self.plan.rank() == 1 {
                let mut a = vec![T::zero(); nout];
                let mut d = vec![T::zero(); nout];
                self.stage.analyze(&cur, &mut a, &mut d);
                if k == levels {
                    bands[0] = a;
                    bands[1] = d;
                    return;
                }
                cur = a;
            } else {
                let mut quad: [Vec<T>; 4] = Default::default();
                self.stage
                    .analyze_2d(&cur, (inp[0], inp[1]), (out[0], out[1]), &mut quad);
                if k == levels {
                    for (dst, src) in bands.iter_mut().zip(quad) {
                        *dst = src;
                    }
                    return;
                }
                cur = std::mem::take(&mut quad[0]);
            }
        }
    }

    /// Applies `F^T`, writing a full-length spatial signal.
    pub fn adjoint(&self, bands: &[Vec<T>], signal: &mut [T]) {
        let levels = self.plan.levels();
        let mut cur: Vec<T> = Vec::new();
        for k in (1..=levels).rev() {
            let band = &self.plan.shapes[k];
            let target = &self.plan.shapes[k - 1];
            let nband: usize = band.iter().product();
            let ntarget: usize = target.iter().product();
            let mut next = vec![T::zero(); ntarget];
            if self.plan.rank() == 1 {
                if k == levels {
                    self.stage.synthesize(&bands[0], &bands[1], &mut next);
                } else {
                    let zero = vec![T::zero(); nband];
                    self.stage.synthesize(&cur, &zero, &mut next);
                }
            } else {
                let quad: [Vec<T>; 4] = if k == levels {
                    [
                        bands[0].clone(),
                        bands[1].clone(),
                        bands[2].clone(),
                        bands[3].clone(),
                    ]
                } else {
                    let zero = vec![T::zero(); nband];
                    [std::mem::take(&mut cur), zero.clone(), zero.clone(), zero]
                };
                self.stage.synthesize_2d(
                    &quad,
                    (band[0], band[1]),
                    (target[0], target[1]),
                    &mut next,
                );
            }
            cur = next;
        }
        signal.copy_from_slice(&cur);
    }
}
