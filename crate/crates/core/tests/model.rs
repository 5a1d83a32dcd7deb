use std::time::Instant;

use ncwno::model::{GateMode, ModelConfig, Ncwno};
use ncwno::tensor::ops::wavelet_expert;
use ncwno::tensor::{mish_scalar, Tape};
use ncwno::wavelet::{daubechies_filters, dwt_multilevel, idwt_multilevel, Boundary, CoarseBands};
use ncwno::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn small(experts: usize, width: usize, grid: Vec<usize>) -> ModelConfig {
    ModelConfig {
        blocks: 1,
        experts,
        width,
        levels: 2,
        grid,
        in_channels: 2,
        out_channels: 1,
        gate_mode: GateMode::PerChannel,
        bases: (1..=experts).collect(),
        max_tasks: 4,
        label_dim: 4,
        gate_hidden: vec![8, 6],
        gate_conv_channels: 3,
        gate_conv_kernel: 3,
        projection_width: 8,
    }
}

fn zero_param(model: &mut Ncwno<f64>, name: &str) {
    let shape = model.param(name).unwrap().shape().to_vec();
    model.set_param(name, Tensor::zeros(&shape)).unwrap();
}

fn last_gate_layer(model: &Ncwno<f64>, block: usize) -> String {
    let n = model.config().gate_hidden.len();
    format!("block{block}.gate.dense{n}")
}

/// Makes block `block` route every channel to `expert` with probability one.
fn force_expert(model: &mut Ncwno<f64>, block: usize, expert: usize) {
    let layer = last_gate_layer(model, block);
    zero_param(model, &format!("{layer}.w"));
    let c = model.config().clone();
    let bias = Tensor::from_fn(&[c.gate_outputs()], |i| {
        let e = match c.gate_mode {
            GateMode::PerChannel => i / c.width,
            GateMode::Broadcast => i,
        };
        if e == expert {
            1e3
        } else {
            0.0
        }
    });
    model.set_param(&format!("{layer}.b"), bias).unwrap();
}

fn block_output(model: &Ncwno<f64>, v: &Tensor<f64>, labels: &[usize]) -> Tensor<f64> {
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    let emb = model.encode_labels(&bound, labels).unwrap();
    let out = model
        .expert_block_forward(&bound, 0, tape.constant(v.clone()), emb)
        .unwrap();
    (*out.value()).clone()
}

fn gate(model: &Ncwno<f64>, block: usize, v: &Tensor<f64>, labels: &[usize]) -> Tensor<f64> {
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    let emb = model.encode_labels(&bound, labels).unwrap();
    let beta = model
        .gate_probabilities(&bound, block, tape.constant(v.clone()), emb)
        .unwrap();
    (*beta.value()).clone()
}

fn expert(model: &Ncwno<f64>, e: usize, v: &Tensor<f64>) -> Tensor<f64> {
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    let out = model
        .local_wavelet_expert(&bound, 0, e, tape.constant(v.clone()))
        .unwrap();
    (*out.value()).clone()
}

fn embedding(model: &Ncwno<f64>, labels: &[usize]) -> Tensor<f64> {
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    (*model.encode_labels(&bound, labels).unwrap().value()).clone()
}

/// `x W + b` over the last axis of a `[rows, fan_in]` matrix.
fn dense(x: &[f64], rows: usize, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (fi, fo) = (w.shape()[0], w.shape()[1]);
    let mut y = vec![0.0; rows * fo];
    for r in 0..rows {
        for o in 0..fo {
            let mut s = b.data()[o];
            for i in 0..fi {
                s += x[r * fi + i] * w.data()[i * fo + o];
            }
            y[r * fo + o] = s;
        }
    }
    y
}

#[test]
fn label_encoding_is_deterministic() {
    let model = Ncwno::<f64>::new(small(2, 4, vec![32]), 1).unwrap();
    let a = embedding(&model, &[0, 3, 3]);
    let b = embedding(&model, &[0, 3, 3]);
    assert_eq!(a, b);
    assert_eq!(a.shape(), &[3, 4]);
    assert_eq!(a.index_axis0(1), a.index_axis0(2));
    assert_ne!(a.index_axis0(0), a.index_axis0(1));
}

#[test]
fn zeroed_encoder_gives_zero_embedding() {
    let mut model = Ncwno::<f64>::new(small(2, 4, vec![32]), 2).unwrap();
    for i in 0..3 {
        zero_param(&mut model, &format!("encoder.dense{i}.w"));
        zero_param(&mut model, &format!("encoder.dense{i}.b"));
    }
    let e = embedding(&model, &[0, 1, 2, 3]);
    assert!(e.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_encoder_gives_one_hot() {
    let mut model = Ncwno::<f64>::new(small(2, 4, vec![32]), 3).unwrap();
    let eye = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
    for i in 0..3 {
        model
            .set_param(&format!("encoder.dense{i}.w"), eye.clone())
            .unwrap();
        zero_param(&mut model, &format!("encoder.dense{i}.b"));
    }
    let e = embedding(&model, &[0, 1, 2, 3]);
    assert_eq!(e, eye);
}

#[test]
fn label_out_of_range_is_rejected() {
    let model = Ncwno::<f64>::new(small(2, 4, vec![32]), 4).unwrap();
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    assert!(matches!(
        model.encode_labels(&bound, &[4]),
        Err(Error::LabelOutOfRange { label: 4, max: 4 })
    ));
    let input = random(&[1, 32, 2], 0);
    assert!(matches!(
        model.predict(&input, &[9]),
        Err(Error::LabelOutOfRange { .. })
    ));
}

#[test]
fn zeroed_gate_head_is_uniform() {
    for mode in [GateMode::PerChannel, GateMode::Broadcast] {
        for grid in [vec![32], vec![16, 16]] {
            let mut cfg = small(3, 4, grid.clone());
            cfg.gate_mode = mode;
            let mut model = Ncwno::<f64>::new(cfg, 5).unwrap();
            let layer = last_gate_layer(&model, 0);
            zero_param(&mut model, &format!("{layer}.w"));
            zero_param(&mut model, &format!("{layer}.b"));
            let mut shape = vec![2];
            shape.extend(&grid);
            shape.push(4);
            let beta = gate(&model, 0, &random(&shape, 6), &[0, 1]);
            assert_eq!(beta.shape(), &[2, 3, 4]);
            assert!(beta.data().iter().all(|&b| (b - 1.0 / 3.0).abs() < 1e-15));
        }
    }
}

#[test]
fn gate_columns_sum_to_one() {
    for mode in [GateMode::PerChannel, GateMode::Broadcast] {
        for grid in [vec![32], vec![16, 16]] {
            let mut cfg = small(4, 5, grid.clone());
            cfg.blocks = 2;
            cfg.gate_mode = mode;
            let model = Ncwno::<f64>::new(cfg, 7).unwrap();
            let mut shape = vec![3];
            shape.extend(&grid);
            shape.push(5);
            for block in 0..2 {
                let v = random(&shape, 8 + block as u64).map(|x| 4.0 * x);
                let beta = gate(&model, block, &v, &[0, 2, 3]);
                for b in 0..3 {
                    for c in 0..5 {
                        let s: f64 = (0..4).map(|e| beta.data()[(b * 4 + e) * 5 + c]).sum();
                        assert!((s - 1.0).abs() < 1e-6);
                    }
                }
            }
        }
    }
}

#[test]
fn gate_matches_hand_rolled_network() {
    let (de, dv, grid) = (3, 4, 32);
    let model = Ncwno::<f64>::new(small(de, dv, vec![grid]), 9).unwrap();
    let v = random(&[2, grid, dv], 10);
    let labels = [1, 3];
    let beta = gate(&model, 0, &v, &labels);

    let emb = embedding(&model, &labels);
    let ld = emb.shape()[1];
    // Channel mean at each grid point, then the label embedding.
    let mut x = Vec::new();
    for b in 0..2 {
        for p in 0..grid {
            let s: f64 = (0..dv).map(|c| v.data()[(b * grid + p) * dv + c]).sum();
            x.push(s / dv as f64);
        }
        x.extend_from_slice(&emb.data()[b * ld..(b + 1) * ld]);
    }
    let layers = model.config().gate_hidden.len() + 1;
    for i in 0..layers {
        let w = model.param(&format!("block0.gate.dense{i}.w")).unwrap();
        let bias = model.param(&format!("block0.gate.dense{i}.b")).unwrap();
        x = dense(&x, 2, w, bias);
        if i + 1 < layers {
            x.iter_mut().for_each(|t| *t *= t.exp().ln_1p().tanh());
        }
    }
    for b in 0..2 {
        for c in 0..dv {
            let logits: Vec<f64> = (0..de).map(|e| x[b * de * dv + e * dv + c]).collect();
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for (e, logit) in logits.iter().enumerate() {
                let want = (logit - m).exp() / z;
                let got = beta.data()[(b * de + e) * dv + c];
                assert!((got - want).abs() < 1e-6, "b {b} e {e} c {c}");
            }
        }
    }
}

#[test]
fn zero_kernels_give_zero_expert_output() {
    for grid in [vec![64], vec![16, 16]] {
        let mut model = Ncwno::<f64>::new(small(2, 3, grid.clone()), 11).unwrap();
        let bands = if grid.len() == 1 { 2 } else { 4 };
        for k in 0..bands {
            zero_param(&mut model, &format!("block0.expert1.kappa{k}"));
        }
        let mut shape = vec![2];
        shape.extend(&grid);
        shape.push(3);
        let out = expert(&model, 1, &random(&shape, 12));
        assert_eq!(out.shape(), shape.as_slice());
        assert!(out.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn single_level_identity_kernels_reproduce_input() {
    for grid in [vec![64], vec![16, 16]] {
        let mut cfg = small(3, 3, grid.clone());
        cfg.levels = 1;
        let mut model = Ncwno::<f64>::new(cfg, 13).unwrap();
        let bands = if grid.len() == 1 { 2 } else { 4 };
        for e in 0..3 {
            for k in 0..bands {
                let name = format!("block0.expert{e}.kappa{k}");
                let npos = model.param(&name).unwrap().shape()[0];
                let eye =
                    Tensor::from_fn(
                        &[npos, 3, 3],
                        |i| {
                            if (i % 9) / 3 == i % 3 {
                                1.0
                            } else {
                                0.0
                            }
                        },
                    );
                model.set_param(&name, eye).unwrap();
            }
            let mut shape = vec![2];
            shape.extend(&grid);
            shape.push(3);
            let v = random(&shape, 14 + e as u64);
            assert!(
                max_abs_diff(&v, &expert(&model, e, &v)) < 1e-5,
                "expert {e}"
            );
        }
    }
}

#[test]
fn expert_matches_loop_oracle() {
    let (grid, dv) = (64, 2);
    let mut cfg = small(1, dv, vec![grid]);
    cfg.bases = vec![2];
    let model = Ncwno::<f64>::new(cfg, 15).unwrap();
    let v = random(&[1, grid, dv], 16);
    let got = expert(&model, 0, &v);

    let bank = daubechies_filters(2).unwrap();
    let mut c = dwt_multilevel(&v, &bank, 2, 1, Boundary::Zero).unwrap();
    let ka = model.param("block0.expert0.kappa0").unwrap();
    let kd = model.param("block0.expert0.kappa1").unwrap();
    let npos = ka.shape()[0];
    assert_eq!(c.approx.shape()[1], npos);
    let mix = |band: &Tensor<f64>, k: &Tensor<f64>| {
        let mut out = Tensor::zeros(band.shape());
        for i0 in 0..npos {
            for i1 in 0..dv {
                for i2 in 0..dv {
                    out.data_mut()[i0 * dv + i2] +=
                        band.data()[i0 * dv + i1] * k.data()[(i0 * dv + i1) * dv + i2];
                }
            }
        }
        out
    };
    c.approx = mix(&c.approx, ka);
    c.details[1][0] = mix(&c.details[1][0], kd);
    c.details[0][0] = Tensor::zeros(c.details[0][0].shape());
    let want = idwt_multilevel(&c, &bank).unwrap();
    assert!(max_abs_diff(&got, &want) < 1e-6);
}

#[test]
fn one_hot_gate_selects_single_expert() {
    for mode in [GateMode::PerChannel, GateMode::Broadcast] {
        let mut cfg = small(3, 4, vec![32]);
        cfg.gate_mode = mode;
        let mut model = Ncwno::<f64>::new(cfg, 17).unwrap();
        force_expert(&mut model, 0, 2);
        let v = random(&[2, 32, 4], 18);
        let got = block_output(&model, &v, &[0, 1]);

        let e = expert(&model, 2, &v);
        let w = model.param("block0.skip.w").unwrap();
        let b = model.param("block0.skip.b").unwrap();
        let skip = dense(v.data(), 64, w, b);
        let want = Tensor::from_fn(v.shape(), |i| mish_scalar(e.data()[i] + skip[i]));
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }
}

#[test]
fn permuting_experts_with_their_gates_is_exact() {
    let cfg = small(2, 4, vec![32]);
    let model = Ncwno::<f64>::new(cfg.clone(), 19).unwrap();
    let mut swapped_cfg = cfg.clone();
    swapped_cfg.bases.reverse();
    let mut swapped = Ncwno::<f64>::new(swapped_cfg, 20).unwrap();
    for p in model.params() {
        let name = p.name.clone();
        let target = if name.contains(".expert0.") {
            name.replace(".expert0.", ".expert1.")
        } else if name.contains(".expert1.") {
            name.replace(".expert1.", ".expert0.")
        } else {
            name.clone()
        };
        swapped.set_param(&target, (*p.value).clone()).unwrap();
    }
    // Swap the two expert halves of the gate head.
    let layer = last_gate_layer(&model, 0);
    let w = model.param(&format!("{layer}.w")).unwrap();
    let b = model.param(&format!("{layer}.b")).unwrap();
    let (fi, dv) = (w.shape()[0], 4);
    let perm = |o: usize| (o + dv) % (2 * dv);
    let pw = Tensor::from_fn(w.shape(), |i| {
        w.data()[(i / (2 * dv)) * 2 * dv + perm(i % (2 * dv))]
    });
    let pb = Tensor::from_fn(b.shape(), |o| b.data()[perm(o)]);
    assert_eq!(pw.shape()[0], fi);
    swapped.set_param(&format!("{layer}.w"), pw).unwrap();
    swapped.set_param(&format!("{layer}.b"), pb).unwrap();

    let v = random(&[2, 32, 4], 21);
    assert_eq!(
        block_output(&model, &v, &[0, 3]),
        block_output(&swapped, &v, &[0, 3])
    );
    let input = random(&[2, 32, 2], 22);
    assert_eq!(
        model.predict(&input, &[1, 2]).unwrap(),
        swapped.predict(&input, &[1, 2]).unwrap()
    );
}

#[test]
fn two_identical_experts_collapse_to_one() {
    let mut pair_cfg = small(2, 4, vec![32]);
    pair_cfg.bases = vec![3, 3];
    let mut pair = Ncwno::<f64>::new(pair_cfg, 23).unwrap();
    let layer = last_gate_layer(&pair, 0);
    zero_param(&mut pair, &format!("{layer}.w"));
    zero_param(&mut pair, &format!("{layer}.b"));
    for k in 0..2 {
        let kappa = pair
            .param(&format!("block0.expert0.kappa{k}"))
            .unwrap()
            .clone();
        pair.set_param(&format!("block0.expert1.kappa{k}"), kappa)
            .unwrap();
    }

    let mut single_cfg = small(1, 4, vec![32]);
    single_cfg.bases = vec![3];
    let mut single = Ncwno::<f64>::new(single_cfg, 24).unwrap();
    for p in single.params().to_vec() {
        if !p.name.contains(".gate.") {
            single
                .set_param(&p.name, pair.param(&p.name).unwrap().clone())
                .unwrap();
        }
    }
    let v = random(&[2, 32, 4], 25);
    let a = block_output(&pair, &v, &[0, 1]);
    let b = block_output(&single, &v, &[0, 1]);
    assert!(max_abs_diff(&a, &b) < 1e-6);
}

#[test]
fn forward_shape_contract() {
    for (grid, batch) in [(vec![32], 3), (vec![16, 16], 2), (vec![16, 20], 1)] {
        let cfg = ModelConfig {
            out_channels: 2,
            ..small(2, 4, grid.clone())
        };
        let model = Ncwno::<f64>::new(cfg, 26).unwrap();
        let mut shape = vec![batch];
        shape.extend(&grid);
        shape.push(2);
        let out = model.predict(&random(&shape, 27), &vec![1; batch]).unwrap();
        let mut want = vec![batch];
        want.extend(&grid);
        want.push(2);
        assert_eq!(out.shape(), want.as_slice());
    }
    let model = Ncwno::<f64>::new(small(2, 4, vec![32]), 28).unwrap();
    assert!(matches!(
        model.predict(&random(&[1, 32, 3], 0), &[0]),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        model.predict(&random(&[2, 32, 2], 0), &[0]),
        Err(Error::Shape(_))
    ));
}

#[test]
fn zero_parameters_give_projection_bias() {
    for grid in [vec![32], vec![16, 16]] {
        let cfg = ModelConfig {
            out_channels: 2,
            ..small(2, 4, grid.clone())
        };
        let mut model = Ncwno::<f64>::new(cfg, 29).unwrap();
        let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
        for name in &names {
            zero_param(&mut model, name);
        }
        model
            .set_param("proj1.b", Tensor::from_f64(&[2], &[0.25, -1.5]).unwrap())
            .unwrap();
        let mut shape = vec![2];
        shape.extend(&grid);
        shape.push(2);
        for seed in [30, 31] {
            let out = model.predict(&random(&shape, seed), &[0, 3]).unwrap();
            for pair in out.data().chunks(2) {
                assert_eq!(pair, &[0.25, -1.5]);
            }
        }
    }
}

#[test]
fn kernel_gradient_matches_finite_differences() {
    let model = Ncwno::<f64>::new(small(2, 4, vec![32]), 32).unwrap();
    let input = random(&[2, 32, 2], 33);
    let labels = [0, 2];
    let probe = random(&[2, 32, 1], 34);
    let loss = |m: &Ncwno<f64>| -> f64 {
        let out = m.predict(&input, &labels).unwrap();
        out.data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let tape = Tape::new();
    let bound = model.bind(&tape);
    let out = model.forward(&bound, &input, &labels).unwrap();
    let l = out.mul(&tape.constant(probe.clone())).unwrap().sum();
    let grads = tape.backward(l).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for name in ["block0.expert0.kappa0", "block0.expert1.kappa1"] {
        let idx = model.params().iter().position(|p| p.name == name).unwrap();
        let analytic = grads.get_or_zeros(bound.vars[idx]);
        let kappa = model.param(name).unwrap().clone();
        for _ in 0..4 {
            let k = rng.random_range(0..kappa.len());
            let h = 1e-5;
            let mut plus = model.clone();
            let mut t = kappa.clone();
            t.data_mut()[k] += h;
            plus.set_param(name, t).unwrap();
            let mut minus = model.clone();
            let mut t = kappa.clone();
            t.data_mut()[k] -= h;
            minus.set_param(name, t).unwrap();
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6, "{name}[{k}]: {a:e} vs {numeric:e}");
        }
    }
}

#[test]
fn scaling_gate_logits_keeps_the_winning_expert() {
    let model = Ncwno::<f64>::new(small(4, 3, vec![32]), 36).unwrap();
    let v = random(&[2, 32, 3], 37);
    let before = gate(&model, 0, &v, &[0, 1]);
    let layer = last_gate_layer(&model, 0);
    for scale in [0.1, 3.0, 40.0] {
        let mut scaled = model.clone();
        for part in ["w", "b"] {
            let name = format!("{layer}.{part}");
            let t = scaled.param(&name).unwrap().map(|x| x * scale);
            scaled.set_param(&name, t).unwrap();
        }
        let after = gate(&scaled, 0, &v, &[0, 1]);
        for b in 0..2 {
            for c in 0..3 {
                let argmax = |t: &Tensor<f64>| {
                    (0..4)
                        .max_by(|&i, &j| {
                            t.data()[(b * 4 + i) * 3 + c].total_cmp(&t.data()[(b * 4 + j) * 3 + c])
                        })
                        .unwrap()
                };
                assert_eq!(argmax(&before), argmax(&after), "scale {scale}");
            }
        }
    }
}

#[test]
fn unselected_expert_kernels_do_not_matter() {
    for grid in [vec![32], vec![16, 16]] {
        let mut model = Ncwno::<f64>::new(small(3, 4, grid.clone()), 38).unwrap();
        force_expert(&mut model, 0, 0);
        let mut shape = vec![2];
        shape.extend(&grid);
        shape.push(4);
        let v = random(&shape, 39);
        let before = block_output(&model, &v, &[1, 2]);
        let name = "block0.expert2.kappa0";
        let noisy = random(model.param(name).unwrap().shape(), 40).map(|x| 100.0 * x);
        model.set_param(name, noisy).unwrap();
        assert_eq!(before, block_output(&model, &v, &[1, 2]));
    }
}

fn expert_path(len: usize, width: usize, batch: usize) -> (Tensor<f64>, f64) {
    let bank = daubechies_filters(4).unwrap();
    let bands = Arc::new(CoarseBands::<f64>::new(&[len], &bank, 3).unwrap());
    let npos = bands.plan().coarse_len();
    let kernels: Vec<Tensor<f64>> = (0..2).map(|k| random(&[npos, width, width], k)).collect();
    let x = random(&[batch, len, width], 41);
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..5 {
        let tape = Tape::new();
        let start = Instant::now();
        let ks: Vec<_> = kernels.iter().map(|k| tape.constant(k.clone())).collect();
        let y = wavelet_expert(&tape.constant(x.clone()), &ks, bands.clone()).unwrap();
        best = best.min(start.elapsed().as_secs_f64());
        out = Some((*y.value()).clone());
    }
    (out.unwrap(), best)
}

#[test]
fn expert_path_runs_at_any_admissible_resolution() {
    for len in [64, 96, 128, 512] {
        let (y, _) = expert_path(len, 3, 2);
        assert_eq!(y.shape(), &[2, len, 3]);
        assert!(y.is_finite());
    }
    // The gate's dense stack is sized for the training grid.
    let model = Ncwno::<f64>::new(small(2, 4, vec![32]), 42).unwrap();
    assert!(matches!(
        model.predict(&random(&[1, 64, 2], 0), &[0]),
        Err(Error::Shape(_))
    ));
}

#[test]
fn expert_path_cost_is_linear_in_grid_size() {
    let (_, t1) = expert_path(4096, 16, 4);
    let (_, t2) = expert_path(8192, 16, 4);
    assert!(t2 / t1 < 2.5, "doubling the grid took {:.2}x", t2 / t1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_gates_are_normalized(seed in any::<u64>(), label in 0usize..4, amp in 0.1f64..20.0, broadcast in any::<bool>()) {
        let mut cfg = small(3, 4, vec![32]);
        cfg.blocks = 2;
        if broadcast {
            cfg.gate_mode = GateMode::Broadcast;
        }
        let model = Ncwno::<f64>::new(cfg, seed).unwrap();
        let v = random(&[1, 32, 4], seed ^ 7).map(|x| amp * x);
        for block in 0..2 {
            let beta = gate(&model, block, &v, &[label]);
            for c in 0..4 {
                let s: f64 = (0..3).map(|e| beta.data()[e * 4 + c]).sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
            prop_assert!(beta.data().iter().all(|&b| (0.0..=1.0).contains(&b)));
        }
    }

    #[test]
    fn prop_predictions_are_finite_and_deterministic(seed in any::<u64>(), label in 0usize..4) {
        let model = Ncwno::<f64>::new(small(2, 4, vec![32]), seed).unwrap();
        let input = random(&[1, 32, 2], seed ^ 3);
        let a = model.predict(&input, &[label]).unwrap();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, model.predict(&input, &[label]).unwrap());
    }
}
