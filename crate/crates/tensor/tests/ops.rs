use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssan_tensor::gradcheck::{check_gradients, probe_loss, CheckConfig};
use ssan_tensor::{lstm_step, BnMode, Graph, LstmParams, Tensor, TensorError};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * k * oh * ow];
    for b in 0..n {
        for o in 0..k {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xo * stride + j) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += x.at(&[b, ci, iy as usize, ix as usize]) * w.at(&[o, ci, i, j]);
                                }
                            }
                        }
                    }
                    out[((b * k + o) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    Tensor::new(vec![n, k, oh, ow], out).unwrap()
}

fn bilinear_oracle(x: &Tensor<f64>, oh: usize, ow: usize) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let coord = |i: usize, len_in: usize, len_out: usize| {
        let s = (i as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5;
        s.max(0.0).min((len_in - 1) as f64)
    };
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let sy = coord(i, h, oh);
                    let sx = coord(j, w, ow);
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                    let v = (1.0 - fy) * (1.0 - fx) * x.at(&[b, ch, y0, x0])
                        + (1.0 - fy) * fx * x.at(&[b, ch, y0, x1])
                        + fy * (1.0 - fx) * x.at(&[b, ch, y1, x0])
                        + fy * fx * x.at(&[b, ch, y1, x1]);
                    out.push(v);
                }
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], rel: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!(
            (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0),
            "{} vs {}",
            x,
            y
        );
    }
}

#[test]
fn conv_ones_center_and_corners() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let w = g.constant(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let y = g.conv2d(x, w, 1, 1).unwrap();
    let out = g.value(y);
    assert_eq!(out.shape(), &[1, 1, 3, 3]);
    assert_eq!(out.at(&[0, 0, 1, 1]), 9.0);
    for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        assert_eq!(out.at(&[0, 0, i, j]), 4.0);
    }
}

#[test]
fn conv_identity_kernel_copies_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f64>::new();
    let input = random(&[2, 1, 5, 4], &mut rng);
    let x = g.constant(input.clone());
    let w = g.constant(Tensor::full(vec![1, 1, 1, 1], 1.0));
    let y = g.conv2d(x, w, 1, 0).unwrap();
    assert_eq!(g.value(y), &input);
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(vec![1, 2, 4, 4]));
    let w = g.constant(Tensor::zeros(vec![3, 1, 3, 3]));
    assert!(matches!(g.conv2d(x, w, 1, 1), Err(TensorError::Dimension(_))));
    let w2 = g.constant(Tensor::zeros(vec![3, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, w2, 2, 0), Err(TensorError::Dimension(_))));
    assert!(g.conv2d(x, w2, 2, 1).is_err());
    assert!(g.conv2d(x, w2, 1, 1).is_ok());
}

#[test]
fn conv_matches_loop_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..60 {
        let c = rng.gen_range(1..4);
        let k = rng.gen_range(1..4);
        let ks = [1, 3, 5][case % 3];
        let pad = rng.gen_range(0..=ks / 2);
        let h = rng.gen_range(ks..9);
        let w = rng.gen_range(ks..9);
        let x = random(&[2, c, h, w], &mut rng);
        let kern = random(&[k, c, ks, ks], &mut rng);
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(kern.clone());
        let y = g.conv2d(xv, kv, 1, pad).unwrap();
        let expected = naive_conv(&x, &kern, 1, pad);
        assert_eq!(g.value(y).shape(), expected.shape());
        assert_close(g.value(y).data(), expected.data(), 1e-5);
    }
}

#[test]
fn conv_strided_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[1, 2, 7, 9], &mut rng);
    let kern = random(&[3, 2, 3, 3], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.clone());
    let kv = g.constant(kern.clone());
    let y = g.conv2d(xv, kv, 2, 1).unwrap();
    assert_close(g.value(y).data(), naive_conv(&x, &kern, 2, 1).data(), 1e-12);
}

#[test]
fn maxpool_picks_window_max_and_halves_constants() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.maxpool2x2(x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    let c = g.constant(Tensor::full(vec![1, 2, 4, 6], 0.3));
    let p = g.maxpool2x2(c).unwrap();
    assert_eq!(g.value(p), &Tensor::full(vec![1, 2, 2, 3], 0.3));
    let odd = g.constant(Tensor::zeros(vec![1, 1, 3, 4]));
    assert!(matches!(g.maxpool2x2(odd), Err(TensorError::Dimension(_))));
}

#[test]
fn maxpool_ties_route_gradient_to_first_cell() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::full(vec![1, 1, 2, 2], 1.0));
    let y = g.maxpool2x2(x).unwrap();
    let loss = g.sum(y);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[1, 1, 4, 4], &mut rng);
    let report = check_gradients(&[x], CheckConfig::default(), |g, v| {
        let y = g.maxpool2x2(v[0])?;
        probe_loss(g, y, 7)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);
    assert_eq!(report.checked, 16);
}

#[test]
fn batch_norm_train_standardizes_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[3, 2, 4, 5], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x);
    let gamma = g.constant(Tensor::full(vec![2], 1.0));
    let beta = g.constant(Tensor::zeros(vec![2]));
    let (y, stats) = g.batch_norm(xv, gamma, beta, BnMode::Train).unwrap();
    assert!(stats.is_some());
    let out = g.value(y);
    for c in 0..2 {
        let vals: Vec<f64> = (0..3)
            .flat_map(|n| (0..20).map(move |p| (n, p)))
            .map(|(n, p)| out.data()[(n * 2 + c) * 20 + p])
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5);
        // epsilon shrinks the variance slightly below one
        assert!((var - 1.0).abs() < 1e-3, "{}", var);
    }
}

#[test]
fn batch_norm_eval_with_unit_stats_is_near_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[1, 3, 2, 2], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.clone());
    let gamma = g.constant(Tensor::full(vec![3], 1.0));
    let beta = g.constant(Tensor::zeros(vec![3]));
    let (mean, var) = (vec![0.0; 3], vec![1.0; 3]);
    let (y, stats) = g
        .batch_norm(xv, gamma, beta, BnMode::Eval { mean: &mean, var: &var })
        .unwrap();
    assert!(stats.is_none());
    assert_close(g.value(y).data(), x.data(), 1e-5);
}

#[test]
fn batch_norm_needs_two_values_per_channel() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(vec![1, 2, 1, 1]));
    let gamma = g.constant(Tensor::full(vec![2], 1.0));
    let beta = g.constant(Tensor::zeros(vec![2]));
    assert!(matches!(
        g.batch_norm(x, gamma, beta, BnMode::Train),
        Err(TensorError::Statistics(_))
    ));
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = vec![
        random(&[2, 3, 4, 4], &mut rng),
        random(&[3], &mut rng),
        random(&[3], &mut rng),
    ];
    for train in [true, false] {
        let report = check_gradients(&inputs, CheckConfig::default(), |g, v| {
            let (mean, var) = (vec![0.1, -0.2, 0.3], vec![0.5, 1.5, 2.0]);
            let mode = if train {
                BnMode::Train
            } else {
                BnMode::Eval { mean: &mean, var: &var }
            };
            let (y, _) = g.batch_norm(v[0], v[1], v[2], mode)?;
            probe_loss(g, y, 11)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-3, "train={} {:?}", train, report);
    }
}

#[test]
fn linear_identity_zero_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[5], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.param(x.clone());
    let eye = g.constant(Tensor::from_fn(vec![5, 5], |i| if i / 5 == i % 5 { 1.0 } else { 0.0 }));
    let y = g.linear(xv, eye).unwrap();
    assert_eq!(g.value(y), &x);

    let zero = g.constant(Tensor::zeros(vec![3, 5]));
    let z = g.linear(xv, zero).unwrap();
    assert!(g.value(z).data().iter().all(|&v| v == 0.0));
    let loss = g.sum(z);
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(xv).unwrap().data().iter().all(|&v| v == 0.0));

    for _ in 0..50 {
        let w = random(&[3, 5], &mut rng);
        let x = random(&[4, 5], &mut rng);
        let mut g = Graph::<f64>::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.linear(xv, wv).unwrap();
        let mut expected = vec![0.0; 12];
        for r in 0..4 {
            for e in 0..3 {
                for d in 0..5 {
                    expected[r * 3 + e] += w.at(&[e, d]) * x.at(&[r, d]);
                }
            }
        }
        assert_close(g.value(y).data(), &expected, 1e-5);
    }

    let mut g = Graph::<f64>::new();
    let (xv, wv) = (g.constant(Tensor::zeros(vec![4])), g.constant(Tensor::zeros(vec![3, 5])));
    assert!(matches!(g.linear(xv, wv), Err(TensorError::Dimension(_))));
}

#[test]
fn softmax_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(vec![4], 3.7));
    let y = g.softmax(x, 0).unwrap();
    assert_close(g.value(y).data(), &[0.25; 4], 1e-12);
    let x = g.constant(Tensor::new(vec![2], vec![0.0, 3f64.ln()]).unwrap());
    let y = g.softmax(x, 0).unwrap();
    assert_close(g.value(y).data(), &[0.25, 0.75], 1e-12);
    assert!(g.softmax(x, 1).is_err());
}

#[test]
fn elementwise_and_structural_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4], &mut rng);
    let report = check_gradients(&[a, b], CheckConfig::default(), |g, v| {
        let s = g.add(v[0], v[1])?;
        let m = g.mul(s, v[1])?;
        let d = g.sub(m, v[0])?;
        let t = g.tanh(d);
        let sg = g.sigmoid(t);
        let sm = g.softmax(sg, 1)?;
        let ls = g.log_softmax(sm, 0)?;
        let tr = g.transpose(ls)?;
        let r = g.reshape(tr, &[2, 6])?;
        let sl = g.slice(r, 1, 1, 4)?;
        let cat = g.concat(&[sl, r], 1)?;
        let sa = g.sum_axis(cat, 0)?;
        let sc = g.scale(sa, 0.7);
        let pick = g.gather(sc, 3)?;
        let rest = probe_loss(g, sc, 3)?;
        g.add(pick, rest)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);
}

#[test]
fn relu_gradient_matches_finite_differences_away_from_zero() {
    let x = Tensor::new(vec![6], vec![-1.5, -0.3, -0.01, 0.02, 0.4, 2.0]).unwrap();
    let report = check_gradients(&[x], CheckConfig { skip_branch_switches: false, ..Default::default() }, |g, v| {
        let y = g.relu(v[0]);
        probe_loss(g, y, 5)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);
}

#[test]
fn conv_and_linear_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs = vec![random(&[2, 2, 5, 6], &mut rng), random(&[3, 2, 3, 3], &mut rng)];
    let report = check_gradients(&inputs, CheckConfig::default(), |g, v| {
        let y = g.conv2d(v[0], v[1], 1, 1)?;
        probe_loss(g, y, 1)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);

    let inputs = vec![random(&[4, 5], &mut rng), random(&[3, 5], &mut rng)];
    let report = check_gradients(&inputs, CheckConfig::default(), |g, v| {
        let y = g.linear(v[0], v[1])?;
        probe_loss(g, y, 2)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);
}

#[test]
fn bilinear_identity_constant_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&[1, 2, 5, 7], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.clone());
    let same = g.bilinear_resize(xv, 5, 7).unwrap();
    assert_eq!(g.value(same), &x);

    let c = g.constant(Tensor::full(vec![1, 1, 8, 6], 0.37));
    for (h, w) in [(3, 2), (8, 24), (1, 1), (17, 5)] {
        let r = g.bilinear_resize(c, h, w).unwrap();
        assert!(g.value(r).data().iter().all(|&v| v == 0.37));
    }

    // 6×8 map (width 6, height 8) to 24×8.
    let m = random(&[1, 3, 8, 6], &mut rng);
    let mv = g.constant(m.clone());
    let up = g.bilinear_resize(mv, 8, 24).unwrap();
    assert_close(g.value(up).data(), bilinear_oracle(&m, 8, 24).data(), 1e-12);
    let down = g.bilinear_resize(mv, 3, 4).unwrap();
    assert_close(g.value(down).data(), bilinear_oracle(&m, 3, 4).data(), 1e-12);
}

#[test]
fn bilinear_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[1, 2, 4, 3], &mut rng);
    for (h, w) in [(8, 12), (2, 2), (5, 7)] {
        let report = check_gradients(std::slice::from_ref(&x), CheckConfig::default(), |g, v| {
            let y = g.bilinear_resize(v[0], h, w)?;
            probe_loss(g, y, 4)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{:?}", report);
    }
}

fn lstm_graph(g: &mut Graph<f64>, v: &[ssan_tensor::Var]) -> ssan_tensor::Result<(ssan_tensor::Var, ssan_tensor::Var)> {
    let params = LstmParams { w_input: v[3], w_hidden: v[4] };
    lstm_step(g, v[0], v[1], v[2], &params)
}

#[test]
fn lstm_zero_params_and_state_give_zero() {
    let mut g = Graph::<f64>::new();
    let vars: Vec<_> = [vec![3], vec![4], vec![4], vec![16, 3], vec![16, 4]]
        .into_iter()
        .map(|s| g.constant(Tensor::zeros(s)))
        .collect();
    let (h, c) = lstm_graph(&mut g, &vars).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c).data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_saturated_gates_keep_cell() {
    let hidden = 4;
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(vec![1], 1.0));
    let h = g.constant(Tensor::zeros(vec![hidden]));
    let c_prev_t = Tensor::new(vec![hidden], vec![0.5, -1.0, 2.0, 0.1]).unwrap();
    let c_prev = g.constant(c_prev_t.clone());
    // input gate rows → −100, forget gate rows → +100.
    let w_x = Tensor::from_fn(vec![4 * hidden, 1], |r| match r / hidden {
        0 => -100.0,
        1 => 100.0,
        _ => 0.3,
    });
    let wx = g.constant(w_x);
    let wh = g.constant(Tensor::zeros(vec![4 * hidden, hidden]));
    let (_, c) = lstm_step(&mut g, x, h, c_prev, &LstmParams { w_input: wx, w_hidden: wh }).unwrap();
    assert_close(g.value(c).data(), c_prev_t.data(), 1e-12);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let hidden = 4;
    let inputs = vec![
        random(&[3], &mut rng),
        random(&[hidden], &mut rng),
        random(&[hidden], &mut rng),
        random(&[4 * hidden, 3], &mut rng),
        random(&[4 * hidden, hidden], &mut rng),
    ];
    let report = check_gradients(&inputs, CheckConfig::default(), |g, v| {
        let (h, c) = lstm_graph(g, v)?;
        let a = probe_loss(g, h, 1)?;
        let b = probe_loss(g, c, 2)?;
        g.add(a, b)
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{:?}", report);
}

#[test]
fn backward_basics() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::full(vec![2, 3], 0.5));
    let unused = g.param(Tensor::full(vec![2], 1.0));
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    assert!(grads.get(unused).is_none());
    assert!(matches!(g.backward(x), Err(TensorError::Contract(_))));
}

#[test]
fn backward_accumulates_repeated_use() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![2], vec![1.5, -2.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let both = g.add(sq, x).unwrap();
    let loss = g.sum(both);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[4.0, -3.0]);
}

#[test]
fn backward_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::from_fn(vec![3, 2, 6, 6], |_| rng.gen_range(-1.0..1.0)));
        let w = g.param(Tensor::from_fn(vec![4, 2, 3, 3], |_| rng.gen_range(-1.0..1.0)));
        let y = g.conv2d(x, w, 1, 1).unwrap();
        let r = g.relu(y);
        let p = g.maxpool2x2(r).unwrap();
        let t = g.tanh(p);
        let loss = g.sum(t);
        let grads = g.backward(loss).unwrap();
        (grads.get(x).unwrap().clone(), grads.get(w).unwrap().clone())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn sign_fault_is_caught_by_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&[1, 1, 4, 4], &mut rng);
    let w = random(&[2, 1, 3, 3], &mut rng);
    let report = check_gradients(&[x, w], CheckConfig::default(), |g, v| {
        g.inject_sign_fault(ssan_tensor::OpKind::Conv2d);
        let y = g.conv2d(v[0], v[1], 1, 1)?;
        probe_loss(g, y, 1)
    })
    .unwrap();
    assert!(report.max_rel_error > 1.0);
}

#[test]
fn probe_does_not_undo_a_mul_fault() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (a, b) = (random(&[2, 3], &mut rng), random(&[2, 3], &mut rng));
    let report = check_gradients(&[a, b], CheckConfig::default(), |g, v| {
        g.inject_sign_fault(ssan_tensor::OpKind::Mul);
        let y = g.mul(v[0], v[1])?;
        probe_loss(g, y, 2)
    })
    .unwrap();
    assert!(report.max_rel_error > 1.0);
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_is_positive(values in proptest::collection::vec(-30.0f64..30.0, 1..24), rows in 1usize..4) {
        let cols = values.len();
        let data: Vec<f64> = (0..rows).flat_map(|r| values.iter().map(move |v| v + r as f64)).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![rows, cols], data).unwrap());
        let y = g.softmax(x, 1).unwrap();
        for r in 0..rows {
            let row = &g.value(y).data()[r * cols..(r + 1) * cols];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn conv_matches_loop_oracle_for_any_geometry(
        seed in any::<u64>(),
        ks in 1usize..5,
        stride in 1usize..4,
        pad in 0usize..4,
        h in 1usize..9,
        w in 1usize..9,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Grow the input until the kernel fits and the strides tile it.
        let fit = |d: usize| {
            let mut d = d.max(ks.saturating_sub(2 * pad));
            d += (stride - (d + 2 * pad - ks) % stride) % stride;
            d
        };
        let (h, w) = (fit(h), fit(w));
        let x = random(&[2, 2, h, w], &mut rng);
        let kern = random(&[3, 2, ks, ks], &mut rng);
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(kern.clone());
        let y = g.conv2d(xv, kv, stride, pad).unwrap();
        let expected = naive_conv(&x, &kern, stride, pad);
        prop_assert_eq!(g.value(y).shape(), expected.shape());
        for (a, b) in g.value(y).data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_mul_matches_indexed_product(seed in any::<u64>(), dims in proptest::collection::vec(1usize..4, 1..4), mask in any::<u8>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small: Vec<usize> = dims.iter().enumerate().map(|(i, &d)| if mask >> i & 1 == 1 { 1 } else { d }).collect();
        let a = random(&dims, &mut rng);
        let b = random(&small, &mut rng);
        let mut g = Graph::<f64>::new();
        let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
        let y = g.mul(av, bv).unwrap();
        let mut idx = vec![0; dims.len()];
        for &v in g.value(y).data() {
            let bidx: Vec<usize> = idx.iter().zip(&small).map(|(&i, &d)| if d == 1 { 0 } else { i }).collect();
            prop_assert_eq!(v, a.at(&idx) * b.at(&bidx));
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    #[test]
    fn bilinear_of_constant_is_constant(v in 0.0f32..1.0, h in 1usize..12, w in 1usize..12, oh in 1usize..20, ow in 1usize..20) {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::full(vec![1, 1, h, w], v));
        let y = g.bilinear_resize(x, oh, ow).unwrap();
        prop_assert!(g.value(y).data().iter().all(|&o| o == v));
    }
}
