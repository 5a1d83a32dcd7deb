use std::sync::Arc;

use crate::error::{Error, Result};
use crate::wavelet::CoarseBands;

use super::{mish_grad, mish_scalar, split_axis, Element, Tensor, Var};

pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sum(usize),
    Mish(usize),
    Softmax {
        x: usize,
        axis: usize,
    },
    ChannelMix {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    ConcatLast(usize, usize),
    MeanLast(usize),
    Reshape(usize),
    Tile {
        x: usize,
        n: usize,
    },
    GatedSum {
        beta: usize,
        experts: Vec<usize>,
    },
    WaveletExpert {
        x: usize,
        kernels: Vec<usize>,
        bands: Arc<CoarseBands<T>>,
        /// Level-s coefficients of the input, `[batch, position, band, channel]`.
        coeffs: Tensor<T>,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
    },
    AvgPool2d {
        x: usize,
    },
    RelL2 {
        pred: usize,
        target: Arc<Tensor<T>>,
    },
}

impl<T> Op<T> {
    pub(crate) fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ConcatLast(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Mish(a)
            | Op::Softmax { x: a, .. }
            | Op::MeanLast(a)
            | Op::Reshape(a)
            | Op::Tile { x: a, .. }
            | Op::AvgPool2d { x: a }
            | Op::RelL2 { pred: a, .. } => vec![*a],
            Op::ChannelMix { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::GatedSum { beta, experts } => {
                let mut v = vec![*beta];
                v.extend(experts);
                v
            }
            Op::WaveletExpert { x, kernels, .. } => {
                let mut v = vec![*x];
                v.extend(kernels);
                v
            }
            Op::Conv2d { x, w, b, .. } => vec![*x, *w, *b],
        }
    }
}

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
    .expect("shapes checked")
}

impl<'t, T: Element> Var<'t, T> {
    fn check_tape(&self, other: &Var<'t, T>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables from different tapes"
        );
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_tape(other);
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "add")?;
        Ok(self
            .tape
            .push(zip_map(&a, &b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_tape(other);
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "sub")?;
        Ok(self
            .tape
            .push(zip_map(&a, &b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_tape(other);
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "mul")?;
        Ok(self
            .tape
            .push(zip_map(&a, &b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        let v = self.value().map(|x| x * c);
        self.tape.push(v, Op::Scale(self.id, c))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Var<'t, T> {
        let s = self.value().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mish(&self) -> Var<'t, T> {
        let v = self.value().map(mish_scalar);
        self.tape.push(v, Op::Mish(self.id))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let out = softmax_forward(&x, axis)?;
        Ok(self.tape.push(out, Op::Softmax { x: self.id, axis }))
    }

    /// Per-point affine map over the trailing channel axis:
    /// `y[.., o] = sum_i x[.., i] w[i, o] + b[o]`.
    pub fn channel_mix(&self, w: &Var<'t, T>, b: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
        self.check_tape(w);
        let (x, wv) = (self.value(), w.value());
        let xs = x.shape();
        if xs.is_empty() || wv.rank() != 2 || wv.shape()[0] != xs[xs.len() - 1] {
            return Err(Error::Shape(format!(
                "channel mix of {:?} with weight {:?}",
                xs,
                wv.shape()
            )));
        }
        let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
        let bias = match b {
            Some(b) => {
                self.check_tape(b);
                let bv = b.value();
                if bv.shape() != [cout] {
                    return Err(Error::Shape(format!(
                        "bias {:?} for {cout} output channels",
                        bv.shape()
                    )));
                }
                Some(bv)
            }
            None => None,
        };
        let rows = x.len() / cin.max(1);
        let mut out = vec![T::zero(); rows * cout];
        let (xd, wd) = (x.data(), wv.data());
        for r in 0..rows {
            let yr = &mut out[r * cout..(r + 1) * cout];
            if let Some(bv) = &bias {
                yr.copy_from_slice(bv.data());
            }
            for i in 0..cin {
                let xv = xd[r * cin + i];
                let wr = &wd[i * cout..(i + 1) * cout];
                for (y, &wv) in yr.iter_mut().zip(wr) {
                    *y += xv * wv;
                }
            }
        }
        let mut shape = xs.to_vec();
        *shape.last_mut().expect("rank >= 1") = cout;
        Ok(self.tape.push(
            Tensor::new(shape, out)?,
            Op::ChannelMix {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
            },
        ))
    }

    /// Concatenates along the trailing axis; leading axes must agree.
    pub fn concat_last(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_tape(other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::Shape(format!("concat of {sa:?} and {sb:?}")));
        }
        let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = a.len() / ca.max(1);
        let rows = if ca == 0 { b.len() / cb.max(1) } else { rows };
        let mut out = Vec::with_capacity(a.len() + b.len());
        for r in 0..rows {
            out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().expect("rank >= 1") = ca + cb;
        Ok(self
            .tape
            .push(Tensor::new(shape, out)?, Op::ConcatLast(self.id, other.id)))
    }

    /// Mean over the trailing axis, which is removed.
    pub fn mean_last(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape();
        if s.is_empty() || s[s.len() - 1] == 0 {
            return Err(Error::Shape(format!("mean over trailing axis of {s:?}")));
        }
        let c = s[s.len() - 1];
        let inv = T::one() / T::from_f64c(c as f64);
        let out: Vec<T> = x
            .data()
            .chunks(c)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.tape.push(
            Tensor::new(s[..s.len() - 1].to_vec(), out)?,
            Op::MeanLast(self.id),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self.tape.push(v, Op::Reshape(self.id)))
    }

    /// Repeats every element `n` times along a new trailing axis.
    pub fn tile(&self, n: usize) -> Var<'t, T> {
        let x = self.value();
        let mut out = Vec::with_capacity(x.len() * n);
        for &v in x.data() {
            out.extend(std::iter::repeat_n(v, n));
        }
        let mut shape = x.shape().to_vec();
        shape.push(n);
        self.tape.push(
            Tensor::new(shape, out).expect("tile shape"),
            Op::Tile { x: self.id, n },
        )
    }

    /// Mean over the batch of per-sample relative L2 errors
    /// `||pred_b - target_b|| / ||target_b||`.
    pub fn relative_l2_loss(&self, target: Arc<Tensor<T>>) -> Result<Var<'t, T>> {
        let p = self.value();
        same_shape(&p, &target, "relative L2 loss")?;
        let batch = p.shape().first().copied().unwrap_or(1).max(1);
        let per = p.len() / batch;
        let mut total = T::zero();
        for b in 0..batch {
            let (mut num, mut den) = (T::zero(), T::zero());
            for i in b * per..(b + 1) * per {
                let d = p.data()[i] - target.data()[i];
                num += d * d;
                den += target.data()[i] * target.data()[i];
            }
            if den <= T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "sample {b} has a zero-norm target"
                )));
            }
            total += num.sqrt() / den.sqrt();
        }
        let loss = total / T::from_f64c(batch as f64);
        Ok(self.tape.push(
            Tensor::scalar(loss),
            Op::RelL2 {
                pred: self.id,
                target,
            },
        ))
    }

    /// Adaptive average pooling of `[batch, h, w, c]` to `[batch, oh, ow, c]`.
    pub fn adaptive_avg_pool2d(&self, out: (usize, usize)) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape();
        if s.len() != 4 || out.0 == 0 || out.1 == 0 || s[1] < out.0 || s[2] < out.1 {
            return Err(Error::Shape(format!("adaptive pool of {s:?} to {out:?}")));
        }
        let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
        let mut y = vec![T::zero(); b * out.0 * out.1 * c];
        for bi in 0..b {
            for oy in 0..out.0 {
                let (y0, y1) = pool_bin(oy, h, out.0);
                for ox in 0..out.1 {
                    let (x0, x1) = pool_bin(ox, w, out.1);
                    let inv = T::one() / T::from_f64c(((y1 - y0) * (x1 - x0)) as f64);
                    let dst = ((bi * out.0 + oy) * out.1 + ox) * c;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            let src = ((bi * h + iy) * w + ix) * c;
                            for ch in 0..c {
                                y[dst + ch] += x.data()[src + ch] * inv;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.tape.push(
            Tensor::new(vec![b, out.0, out.1, c], y)?,
            Op::AvgPool2d { x: self.id },
        ))
    }

    /// Valid (unpadded) 2D convolution, `x: [batch, h, w, cin]`,
    /// `w: [k, k, cin, cout]`, `b: [cout]`.
    pub fn conv2d(&self, w: &Var<'t, T>, b: &Var<'t, T>, stride: usize) -> Result<Var<'t, T>> {
        self.check_tape(w);
        self.check_tape(b);
        let (x, wv, bv) = (self.value(), w.value(), b.value());
        let (xs, ws) = (x.shape(), wv.shape());
        if xs.len() != 4
            || ws.len() != 4
            || ws[0] != ws[1]
            || ws[2] != xs[3]
            || bv.shape() != [ws[3]]
            || stride == 0
            || xs[1] < ws[0]
            || xs[2] < ws[0]
        {
            return Err(Error::Shape(format!(
                "conv2d of {xs:?} with kernel {ws:?}, bias {:?}",
                bv.shape()
            )));
        }
        let (batch, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, cout) = (ws[0], ws[3]);
        let (oh, ow) = ((h - k) / stride + 1, (wd - k) / stride + 1);
        let mut y = vec![T::zero(); batch * oh * ow * cout];
        for bi in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let dst = &mut y[((bi * oh + oy) * ow + ox) * cout..][..cout];
                    dst.copy_from_slice(bv.data());
                    for ky in 0..k {
                        for kx in 0..k {
                            let src = ((bi * h + oy * stride + ky) * wd + ox * stride + kx) * cin;
                            for ci in 0..cin {
                                let xv = x.data()[src + ci];
                                let wrow = &wv.data()[((ky * k + kx) * cin + ci) * cout..][..cout];
                                for (d, &wv) in dst.iter_mut().zip(wrow) {
                                    *d += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.tape.push(
            Tensor::new(vec![batch, oh, ow, cout], y)?,
            Op::Conv2d {
                x: self.id,
                w: w.id,
                b: b.id,
                stride,
            },
        ))
    }
}

/// Gate-weighted sum of expert outputs:
/// `y[b, .., c] = sum_e beta[b, e, c] * expert_e[b, .., c]`.
pub fn gated_sum<'t, T: Element>(beta: &Var<'t, T>, experts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let bv = beta.value();
    let first = experts
        .first()
        .ok_or_else(|| Error::Shape("gated sum over zero experts".into()))?
        .value();
    let fs = first.shape();
    let bs = bv.shape();
    if bs.len() != 3
        || bs[1] != experts.len()
        || fs.len() < 2
        || bs[0] != fs[0]
        || bs[2] != fs[fs.len() - 1]
    {
        return Err(Error::Shape(format!(
            "gate {bs:?} for {} experts of shape {fs:?}",
            experts.len()
        )));
    }
    let (batch, ne, ch) = (bs[0], bs[1], bs[2]);
    let points = first.len() / (batch * ch);
    let mut out = vec![T::zero(); first.len()];
    for (e, ex) in experts.iter().enumerate() {
        beta.check_tape(ex);
        let ev = ex.value();
        same_shape(&first, &ev, "gated sum expert")?;
        for b in 0..batch {
            let wrow = &bv.data()[(b * ne + e) * ch..][..ch];
            for p in 0..points {
                let off = (b * points + p) * ch;
                for c in 0..ch {
                    out[off + c] += wrow[c] * ev.data()[off + c];
                }
            }
        }
    }
    Ok(beta.tape.push(
        Tensor::new(fs.to_vec(), out)?,
        Op::GatedSum {
            beta: beta.id,
            experts: experts.iter().map(|v| v.id).collect(),
        },
    ))
}

/// Local wavelet expert: transform each channel of `x: [batch, spatial.., c]`
/// to its level-s bands, contract every band position over input channels
/// with `kernels[band]: [positions, c, c]`, and synthesize back.
pub fn wavelet_expert<'t, T: Element>(
    x: &Var<'t, T>,
    kernels: &[Var<'t, T>],
    bands: Arc<CoarseBands<T>>,
) -> Result<Var<'t, T>> {
    let xv = x.value();
    let plan = bands.plan();
    let rank = plan.rank();
    let xs = xv.shape();
    if xs.len() != rank + 2 || xs[1..=rank] != plan.shapes[0][..] {
        return Err(Error::Shape(format!(
            "expert input {xs:?} does not match grid {:?}",
            plan.shapes[0]
        )));
    }
    let nb = bands.band_count();
    let (batch, ch) = (xs[0], xs[rank + 1]);
    let npos = plan.coarse_len();
    let npts = plan.signal_len();
    if kernels.len() != nb {
        return Err(Error::Shape(format!(
            "{} kernels for {nb} bands",
            kernels.len()
        )));
    }
    let kvals: Vec<Arc<Tensor<T>>> = kernels.iter().map(|k| k.value()).collect();
    for k in &kvals {
        if k.shape() != [npos, ch, ch] {
            return Err(Error::Shape(format!(
                "expert kernel {:?}, expected [{npos}, {ch}, {ch}]",
                k.shape()
            )));
        }
    }

    // coefficients [batch, position, band, channel]
    let mut coeffs = vec![T::zero(); batch * npos * nb * ch];
    let mut lane = vec![T::zero(); npts];
    let mut bandbuf: Vec<Vec<T>> = vec![Vec::new(); nb];
    for b in 0..batch {
        for c in 0..ch {
            for (i, v) in lane.iter_mut().enumerate() {
                *v = xv.data()[(b * npts + i) * ch + c];
            }
            bands.forward(&lane, &mut bandbuf);
            for (bi, band) in bandbuf.iter().enumerate() {
                for p in 0..npos {
                    coeffs[((b * npos + p) * nb + bi) * ch + c] = band[p];
                }
            }
        }
    }
    let mixed = contract(&coeffs, &kvals, batch, npos, nb, ch);
    let mut out = vec![T::zero(); xv.len()];
    for b in 0..batch {
        for o in 0..ch {
            for (bi, band) in bandbuf.iter_mut().enumerate() {
                band.clear();
                band.extend((0..npos).map(|p| mixed[((b * npos + p) * nb + bi) * ch + o]));
            }
            bands.adjoint(&bandbuf, &mut lane);
            for (i, v) in lane.iter().enumerate() {
                out[(b * npts + i) * ch + o] = *v;
            }
        }
    }
    let coeffs = Tensor::new(vec![batch, npos, nb, ch], coeffs)?;
    Ok(x.tape.push(
        Tensor::new(xs.to_vec(), out)?,
        Op::WaveletExpert {
            x: x.id,
            kernels: kernels.iter().map(|k| k.id).collect(),
            bands,
            coeffs,
        },
    ))
}

/// `out[b, p, band, o] = sum_i kernel_band[p, i, o] * coeffs[b, p, band, i]`.
fn contract<T: Element>(
    coeffs: &[T],
    kernels: &[Arc<Tensor<T>>],
    batch: usize,
    npos: usize,
    nb: usize,
    ch: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); coeffs.len()];
    for b in 0..batch {
        for p in 0..npos {
            for (bi, k) in kernels.iter().enumerate() {
                let off = ((b * npos + p) * nb + bi) * ch;
                let kp = &k.data()[p * ch * ch..(p + 1) * ch * ch];
                let dst = &mut out[off..off + ch];
                for i in 0..ch {
                    let cv = coeffs[off + i];
                    for (d, &kv) in dst.iter_mut().zip(&kp[i * ch..(i + 1) * ch]) {
                        *d += cv * kv;
                    }
                }
            }
        }
    }
    out
}

fn pool_bin(i: usize, n: usize, out: usize) -> (usize, usize) {
    let start = i * n / out;
    let end = ((i + 1) * n).div_ceil(out);
    (start, end)
}

pub(crate) fn softmax_forward<T: Element>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(Error::Axis {
            axis,
            rank: x.rank(),
        });
    }
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let mut m = T::neg_infinity();
            for k in 0..n {
                m = m.max(d[idx(k)]);
            }
            let mut s = T::zero();
            for k in 0..n {
                let e = (d[idx(k)] - m).exp();
                d[idx(k)] = e;
                s += e;
            }
            for k in 0..n {
                d[idx(k)] = d[idx(k)] / s;
            }
        }
    }
    Ok(out)
}

pub(crate) fn backward_op<T: Element>(
    op: &Op<T>,
    out: &Tensor<T>,
    g: &Tensor<T>,
    val: impl Fn(usize) -> Arc<Tensor<T>>,
    needs: impl Fn(usize) -> bool,
) -> Vec<(usize, Tensor<T>)> {
    let mut res = Vec::new();
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for p in [*a, *b] {
                if needs(p) {
                    res.push((p, g.clone()));
                }
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                res.push((*a, g.clone()));
            }
            if needs(*b) {
                res.push((*b, g.map(|v| -v)));
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            if needs(*a) {
                res.push((*a, zip_map(g, &bv, |x, y| x * y)));
            }
            if needs(*b) {
                res.push((*b, zip_map(g, &av, |x, y| x * y)));
            }
        }
        Op::Scale(a, c) => {
            if needs(*a) {
                res.push((*a, g.map(|v| v * *c)));
            }
        }
        Op::Sum(a) => {
            if needs(*a) {
                let av = val(*a);
                res.push((*a, Tensor::full(av.shape(), g.data()[0])));
            }
        }
        Op::Mish(a) => {
            if needs(*a) {
                let av = val(*a);
                res.push((*a, zip_map(g, &av, |gv, x| gv * mish_grad(x))));
            }
        }
        Op::Softmax { x, axis } => {
            if needs(*x) {
                let (outer, n, inner) = split_axis(out.shape(), *axis);
                let mut gx = Tensor::zeros(out.shape());
                let (y, gd) = (out.data(), g.data());
                let gxd = gx.data_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * n + k) * inner + i;
                        let dot: T = (0..n).map(|k| y[idx(k)] * gd[idx(k)]).sum();
                        for k in 0..n {
                            gxd[idx(k)] = y[idx(k)] * (gd[idx(k)] - dot);
                        }
                    }
                }
                res.push((*x, gx));
            }
        }
        Op::ChannelMix { x, w, b } => {
            let (xv, wv) = (val(*x), val(*w));
            let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
            let rows = g.len() / cout.max(1);
            let gd = g.data();
            if needs(*x) {
                let mut gx = Tensor::zeros(xv.shape());
                let gxd = gx.data_mut();
                for r in 0..rows {
                    let gr = &gd[r * cout..(r + 1) * cout];
                    for i in 0..cin {
                        let wr = &wv.data()[i * cout..(i + 1) * cout];
                        gxd[r * cin + i] = gr.iter().zip(wr).map(|(&a, &b)| a * b).sum();
                    }
                }
                res.push((*x, gx));
            }
            if needs(*w) {
                let mut gw = Tensor::zeros(wv.shape());
                let gwd = gw.data_mut();
                for r in 0..rows {
                    let gr = &gd[r * cout..(r + 1) * cout];
                    for i in 0..cin {
                        let xv = xv.data()[r * cin + i];
                        for (dst, &gv) in gwd[i * cout..(i + 1) * cout].iter_mut().zip(gr) {
                            *dst += xv * gv;
                        }
                    }
                }
                res.push((*w, gw));
            }
            if let Some(b) = b {
                if needs(*b) {
                    let mut gb = Tensor::zeros(&[cout]);
                    for r in 0..rows {
                        for (dst, &gv) in
                            gb.data_mut().iter_mut().zip(&gd[r * cout..(r + 1) * cout])
                        {
                            *dst += gv;
                        }
                    }
                    res.push((*b, gb));
                }
            }
        }
        Op::ConcatLast(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let ca = *av.shape().last().expect("rank");
            let cb = *bv.shape().last().expect("rank");
            let rows = g.len() / (ca + cb).max(1);
            let mut ga = Vec::with_capacity(av.len());
            let mut gb = Vec::with_capacity(bv.len());
            for r in 0..rows {
                let row = &g.data()[r * (ca + cb)..(r + 1) * (ca + cb)];
                ga.extend_from_slice(&row[..ca]);
                gb.extend_from_slice(&row[ca..]);
            }
            if needs(*a) {
                res.push((
                    *a,
                    Tensor::new(av.shape().to_vec(), ga).expect("concat grad"),
                ));
            }
            if needs(*b) {
                res.push((
                    *b,
                    Tensor::new(bv.shape().to_vec(), gb).expect("concat grad"),
                ));
            }
        }
        Op::MeanLast(a) => {
            if needs(*a) {
                let av = val(*a);
                let c = *av.shape().last().expect("rank");
                let inv = T::one() / T::from_f64c(c as f64);
                let gd = g.data();
                res.push((*a, Tensor::from_fn(av.shape(), |i| gd[i / c] * inv)));
            }
        }
        Op::Reshape(a) => {
            if needs(*a) {
                let av = val(*a);
                res.push((*a, g.clone().reshape(av.shape()).expect("reshape grad")));
            }
        }
        Op::Tile { x, n } => {
            if needs(*x) {
                let xv = val(*x);
                let gd = g.data();
                res.push((
                    *x,
                    Tensor::from_fn(xv.shape(), |i| gd[i * n..(i + 1) * n].iter().copied().sum()),
                ));
            }
        }
        Op::GatedSum { beta, experts } => {
            let bv = val(*beta);
            let bs = bv.shape();
            let (batch, ne, ch) = (bs[0], bs[1], bs[2]);
            let points = g.len() / (batch * ch);
            let gd = g.data();
            let mut gbeta = Tensor::zeros(bs);
            for (e, &ex) in experts.iter().enumerate() {
                let ev = val(ex);
                if needs(*beta) {
                    let gbd = gbeta.data_mut();
                    for b in 0..batch {
                        for p in 0..points {
                            let off = (b * points + p) * ch;
                            for c in 0..ch {
                                gbd[(b * ne + e) * ch + c] += gd[off + c] * ev.data()[off + c];
                            }
                        }
                    }
                }
                if needs(ex) {
                    let mut ge = Tensor::zeros(ev.shape());
                    let ged = ge.data_mut();
                    for b in 0..batch {
                        let wrow = &bv.data()[(b * ne + e) * ch..][..ch];
                        for p in 0..points {
                            let off = (b * points + p) * ch;
                            for c in 0..ch {
                                ged[off + c] = wrow[c] * gd[off + c];
                            }
                        }
                    }
                    res.push((ex, ge));
                }
            }
            if needs(*beta) {
                res.push((*beta, gbeta));
            }
        }
        Op::WaveletExpert {
            x,
            kernels,
            bands,
            coeffs,
        } => {
            let xv = val(*x);
            let cs = coeffs.shape();
            let (batch, npos, nb, ch) = (cs[0], cs[1], cs[2], cs[3]);
            let npts = bands.plan().signal_len();
            // gradient in coefficient space: G = F(g) per (batch, out channel)
            let mut gmix = vec![T::zero(); coeffs.len()];
            let mut lane = vec![T::zero(); npts];
            let mut buf: Vec<Vec<T>> = vec![Vec::new(); nb];
            for b in 0..batch {
                for o in 0..ch {
                    for (i, v) in lane.iter_mut().enumerate() {
                        *v = g.data()[(b * npts + i) * ch + o];
                    }
                    bands.forward(&lane, &mut buf);
                    for (bi, band) in buf.iter().enumerate() {
                        for p in 0..npos {
                            gmix[((b * npos + p) * nb + bi) * ch + o] = band[p];
                        }
                    }
                }
            }
            for (bi, &kid) in kernels.iter().enumerate() {
                if !needs(kid) {
                    continue;
                }
                let mut gk = Tensor::zeros(&[npos, ch, ch]);
                let gkd = gk.data_mut();
                for b in 0..batch {
                    for p in 0..npos {
                        let off = ((b * npos + p) * nb + bi) * ch;
                        let gm = &gmix[off..off + ch];
                        for i in 0..ch {
                            let cv = coeffs.data()[off + i];
                            let dst = &mut gkd[(p * ch + i) * ch..(p * ch + i + 1) * ch];
                            for (d, &gv) in dst.iter_mut().zip(gm) {
                                *d += cv * gv;
                            }
                        }
                    }
                }
                res.push((kid, gk));
            }
            if needs(*x) {
                let kvals: Vec<Arc<Tensor<T>>> = kernels.iter().map(|&k| val(k)).collect();
                // g_coeffs[b,p,band,i] = sum_o k[p,i,o] * G[b,p,band,o]
                let mut gc = vec![T::zero(); coeffs.len()];
                for b in 0..batch {
                    for p in 0..npos {
                        for (bi, k) in kvals.iter().enumerate() {
                            let off = ((b * npos + p) * nb + bi) * ch;
                            let kp = &k.data()[p * ch * ch..(p + 1) * ch * ch];
                            let gm = &gmix[off..off + ch];
                            for i in 0..ch {
                                gc[off + i] = kp[i * ch..(i + 1) * ch]
                                    .iter()
                                    .zip(gm)
                                    .map(|(&a, &b)| a * b)
                                    .sum();
                            }
                        }
                    }
                }
                let mut gx = Tensor::zeros(xv.shape());
                for b in 0..batch {
                    for c in 0..ch {
                        for (bi, band) in buf.iter_mut().enumerate() {
                            band.clear();
                            band.extend((0..npos).map(|p| gc[((b * npos + p) * nb + bi) * ch + c]));
                        }
                        bands.adjoint(&buf, &mut lane);
                        let gxd = gx.data_mut();
                        for (i, v) in lane.iter().enumerate() {
                            gxd[(b * npts + i) * ch + c] = *v;
                        }
                    }
                }
                res.push((*x, gx));
            }
        }
        Op::Conv2d { x, w, b, stride } => {
            let (xv, wv) = (val(*x), val(*w));
            let (xs, ws, os) = (xv.shape(), wv.shape(), out.shape());
            let (batch, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3]);
            let (k, cout) = (ws[0], ws[3]);
            let (oh, ow) = (os[1], os[2]);
            let gd = g.data();
            let mut gx = needs(*x).then(|| Tensor::zeros(xs));
            let mut gw = needs(*w).then(|| Tensor::zeros(ws));
            for bi in 0..batch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let gr = &gd[((bi * oh + oy) * ow + ox) * cout..][..cout];
                        for ky in 0..k {
                            for kx in 0..k {
                                let src =
                                    ((bi * h + oy * stride + ky) * wd + ox * stride + kx) * cin;
                                for ci in 0..cin {
                                    let woff = ((ky * k + kx) * cin + ci) * cout;
                                    if let Some(gx) = gx.as_mut() {
                                        let wrow = &wv.data()[woff..woff + cout];
                                        gx.data_mut()[src + ci] +=
                                            wrow.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        let xv = xv.data()[src + ci];
                                        for (d, &gv) in
                                            gw.data_mut()[woff..woff + cout].iter_mut().zip(gr)
                                        {
                                            *d += xv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(gx) = gx {
                res.push((*x, gx));
            }
            if let Some(gw) = gw {
                res.push((*w, gw));
            }
            if needs(*b) {
                let mut gb = Tensor::zeros(&[cout]);
                for row in gd.chunks(cout) {
                    for (d, &v) in gb.data_mut().iter_mut().zip(row) {
                        *d += v;
                    }
                }
                res.push((*b, gb));
            }
        }
        Op::AvgPool2d { x } => {
            if needs(*x) {
                let xv = val(*x);
                let (s, os) = (xv.shape(), out.shape());
                let (batch, h, w, c) = (s[0], s[1], s[2], s[3]);
                let (oh, ow) = (os[1], os[2]);
                let mut gx = Tensor::zeros(s);
                for bi in 0..batch {
                    for oy in 0..oh {
                        let (y0, y1) = pool_bin(oy, h, oh);
                        for ox in 0..ow {
                            let (x0, x1) = pool_bin(ox, w, ow);
                            let inv = T::one() / T::from_f64c(((y1 - y0) * (x1 - x0)) as f64);
                            let src = ((bi * oh + oy) * ow + ox) * c;
                            for iy in y0..y1 {
                                for ix in x0..x1 {
                                    let dst = ((bi * h + iy) * w + ix) * c;
                                    for ch in 0..c {
                                        gx.data_mut()[dst + ch] += g.data()[src + ch] * inv;
                                    }
                                }
                            }
                        }
                    }
                }
                res.push((*x, gx));
            }
        }
        Op::RelL2 { pred, target } => {
            if needs(*pred) {
                let p = val(*pred);
                let batch = p.shape().first().copied().unwrap_or(1).max(1);
                let per = p.len() / batch;
                let scale = g.data()[0] / T::from_f64c(batch as f64);
                let mut gp = Tensor::zeros(p.shape());
                for b in 0..batch {
                    let range = b * per..(b + 1) * per;
                    let (mut num, mut den) = (T::zero(), T::zero());
                    for i in range.clone() {
                        let d = p.data()[i] - target.data()[i];
                        num += d * d;
                        den += target.data()[i] * target.data()[i];
                    }
                    let (num, den) = (num.sqrt(), den.sqrt());
                    if num > T::zero() {
                        let f = scale / (num * den);
                        for i in range {
                            gp.data_mut()[i] = f * (p.data()[i] - target.data()[i]);
                        }
                    }
                }
                res.push((*pred, gp));
            }
        }
    }
    res
}
