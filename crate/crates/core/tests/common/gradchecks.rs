//! Finite-difference checks grouped by layer family. Each returns
//! `(name, worst relative error)` pairs.

use std::sync::Arc;

use ncwno::model::{Bound, GateMode, ModelConfig, Ncwno};
use ncwno::tensor::ops::{gated_sum, wavelet_expert};
use ncwno::tensor::Tensor;
use ncwno::wavelet::{daubechies_filters, CoarseBands};

use super::{gradient_error, positive, random, rng};

pub type Check = (String, f64);

pub fn elementwise() -> Vec<Check> {
    let mut r = rng(1);
    let a = random(&[3, 4], &mut r);
    let b = random(&[3, 4], &mut r);
    let ins = [a, b];
    let wide = Tensor::from_fn(&[2, 5], |i| i as f64 * 1.7 - 8.0);
    vec![
        (
            "add".into(),
            gradient_error(&ins, |v| v[0].add(&v[1]).unwrap()),
        ),
        (
            "sub".into(),
            gradient_error(&ins, |v| v[0].sub(&v[1]).unwrap()),
        ),
        (
            "mul".into(),
            gradient_error(&ins, |v| v[0].mul(&v[1]).unwrap()),
        ),
        (
            "scale".into(),
            gradient_error(&ins[..1], |v| v[0].scale(-2.5)),
        ),
        ("sum".into(), gradient_error(&ins[..1], |v| v[0].sum())),
        ("mish".into(), gradient_error(&[wide], |v| v[0].mish())),
    ]
}

pub fn softmax() -> Vec<Check> {
    let x = random(&[2, 3, 4], &mut rng(2));
    (0..3)
        .map(|axis| {
            let err = gradient_error(std::slice::from_ref(&x), |v| v[0].softmax(axis).unwrap());
            (format!("softmax axis {axis}"), err)
        })
        .collect()
}

pub fn channel_mix() -> Vec<Check> {
    let mut r = rng(3);
    let ins = [
        random(&[2, 4, 3], &mut r),
        random(&[3, 5], &mut r),
        random(&[5], &mut r),
    ];
    vec![
        (
            "channel mix".into(),
            gradient_error(&ins, |v| v[0].channel_mix(&v[1], Some(&v[2])).unwrap()),
        ),
        (
            "channel mix without bias".into(),
            gradient_error(&ins[..2], |v| v[0].channel_mix(&v[1], None).unwrap()),
        ),
    ]
}

pub fn shape_ops() -> Vec<Check> {
    let mut r = rng(4);
    let ins = [random(&[2, 3, 2], &mut r), random(&[2, 3, 4], &mut r)];
    vec![
        (
            "concat".into(),
            gradient_error(&ins, |v| v[0].concat_last(&v[1]).unwrap()),
        ),
        (
            "mean".into(),
            gradient_error(&ins[..1], |v| v[0].mean_last().unwrap()),
        ),
        (
            "reshape".into(),
            gradient_error(&ins[..1], |v| v[0].reshape(&[6, 2]).unwrap()),
        ),
        ("tile".into(), gradient_error(&ins[..1], |v| v[0].tile(3))),
    ]
}

pub fn gated() -> Vec<Check> {
    let mut r = rng(5);
    let ins = [
        random(&[2, 3, 4], &mut r),
        random(&[2, 5, 4], &mut r),
        random(&[2, 5, 4], &mut r),
        random(&[2, 5, 4], &mut r),
    ];
    vec![(
        "gated sum".into(),
        gradient_error(&ins, |v| gated_sum(&v[0], &v[1..]).unwrap()),
    )]
}

pub fn wavelet_experts() -> Vec<Check> {
    let mut r = rng(6);
    [(vec![32], 2, 2), (vec![16], 3, 1), (vec![16, 16], 2, 2)]
        .into_iter()
        .map(|(grid, basis, levels)| {
            let bank = daubechies_filters(basis).unwrap();
            let bands = Arc::new(CoarseBands::<f64>::new(&grid, &bank, levels).unwrap());
            let npos = bands.plan().coarse_len();
            let mut shape = vec![2];
            shape.extend(&grid);
            shape.push(3);
            let mut ins = vec![random(&shape, &mut r)];
            for _ in 0..bands.band_count() {
                ins.push(random(&[npos, 3, 3], &mut r));
            }
            let err = gradient_error(&ins, |v| {
                wavelet_expert(&v[0], &v[1..], bands.clone()).unwrap()
            });
            (format!("wavelet expert {grid:?} db{basis} s={levels}"), err)
        })
        .collect()
}

pub fn convolution() -> Vec<Check> {
    let mut r = rng(7);
    let ins = [
        random(&[2, 9, 9, 2], &mut r),
        random(&[3, 3, 2, 4], &mut r),
        random(&[4], &mut r),
    ];
    let mut out: Vec<Check> = [1, 2]
        .into_iter()
        .map(|stride| {
            let err = gradient_error(&ins, |v| v[0].conv2d(&v[1], &v[2], stride).unwrap());
            (format!("conv2d stride {stride}"), err)
        })
        .collect();
    let x = random(&[2, 7, 5, 3], &mut r);
    out.push((
        "adaptive pool".into(),
        gradient_error(&[x], |v| v[0].adaptive_avg_pool2d((2, 2)).unwrap()),
    ));
    out
}

pub fn loss() -> Vec<Check> {
    let mut r = rng(8);
    let target = Arc::new(positive(&[3, 10], &mut r));
    let pred = random(&[3, 10], &mut r);
    vec![(
        "relative L2 loss".into(),
        gradient_error(&[pred], |v| v[0].relative_l2_loss(target.clone()).unwrap()),
    )]
}

/// One block, two experts, width 4.
pub fn tiny_model(mode: GateMode, grid: Vec<usize>) -> ModelConfig {
    ModelConfig {
        blocks: 1,
        experts: 2,
        width: 4,
        levels: 2,
        grid,
        in_channels: 2,
        out_channels: 1,
        gate_mode: mode,
        bases: vec![1, 2],
        max_tasks: 3,
        label_dim: 3,
        gate_hidden: vec![6],
        gate_conv_channels: 2,
        gate_conv_kernel: 3,
        projection_width: 5,
    }
}

pub fn model_gradient_error(config: ModelConfig) -> f64 {
    let model = Ncwno::<f64>::new(config.clone(), 11).unwrap();
    let mut shape = vec![2];
    shape.extend(&config.grid);
    shape.push(config.in_channels);
    let input = random(&shape, &mut rng(9));
    let params: Vec<Tensor<f64>> = model.params().iter().map(|p| (*p.value).clone()).collect();
    gradient_error(&params, |v| {
        let bound = Bound { vars: v.to_vec() };
        model.forward(&bound, &input, &[0, 2]).unwrap()
    })
}

pub fn full_model_1d() -> Vec<Check> {
    vec![
        (
            "model 1D per-channel".into(),
            model_gradient_error(tiny_model(GateMode::PerChannel, vec![32])),
        ),
        (
            "model 1D broadcast".into(),
            model_gradient_error(tiny_model(GateMode::Broadcast, vec![32])),
        ),
    ]
}

pub fn full_model_2d() -> Vec<Check> {
    vec![(
        "model 2D".into(),
        model_gradient_error(tiny_model(GateMode::PerChannel, vec![16, 16])),
    )]
}

pub fn all() -> Vec<Check> {
    [
        elementwise,
        softmax,
        channel_mix,
        shape_ops,
        gated,
        wavelet_experts,
        convolution,
        loss,
        full_model_1d,
        full_model_2d,
    ]
    .iter()
    .flat_map(|f| f())
    .collect()
}
