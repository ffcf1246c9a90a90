use patchwork::nn::ops::*;
use patchwork::nn::*;
use patchwork::rng;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn randn(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(&mut r)).collect()).unwrap()
}

fn single_layer_check(input: &[usize], batch: usize, layer: LayerSpec, seed: u64) -> GradReport {
    let spec = NetSpec::new(input.to_vec()).push("layer", layer);
    let mut r = rng::seeded(seed);
    let net = Net::new(spec, &mut r).unwrap();
    let mut shape = vec![batch];
    shape.extend_from_slice(input);
    let x = randn(&shape, seed + 1);
    let head = LossHead::for_net(&net, batch, &mut r);
    let mut obj = NetObjective::new(net, x, head).unwrap();
    grad_check(&mut obj, &GradCheckOptions { seed, ..Default::default() }).unwrap()
}

#[test]
fn conv_of_ones_sums_window() {
    let x = Tensor::filled(&[1, 1, 3, 3], 1.0);
    let w = Tensor::filled(&[1, 1, 3, 3], 1.0);
    let b = Tensor::new(vec![1], vec![0.5]).unwrap();
    let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[9.5]);
}

#[test]
fn identity_kernel_with_padding() {
    let x = randn(&[2, 3, 5, 4], 1);
    let mut w = Tensor::zeros(&[3, 3, 3, 3]);
    for c in 0..3 {
        w.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    }
    let y = conv2d_forward(&x, &w, &Tensor::zeros(&[3]), 1, 1).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_output_extent_and_mismatch() {
    let x = randn(&[1, 2, 9, 7], 2);
    let w = randn(&[4, 2, 3, 3], 3);
    let y = conv2d_forward(&x, &w, &Tensor::zeros(&[4]), 2, 1).unwrap();
    // floor((9 + 2 - 3)/2) + 1 = 5, floor((7 + 2 - 3)/2) + 1 = 4
    assert_eq!(y.shape(), &[1, 4, 5, 4]);
    let bad = randn(&[4, 3, 3, 3], 4);
    assert!(conv2d_forward(&x, &bad, &Tensor::zeros(&[4]), 1, 0).is_err());
}

#[test]
fn conv_gradients_match_finite_differences() {
    let rep = single_layer_check(&[3, 8, 8], 2, LayerSpec::Conv { kernel: 3, out_channels: 4, stride: 1, pad: 0 }, 10);
    assert!(rep.max_rel_err() < 1e-4, "{rep:?}");
    assert!(rep.checked() >= 200);
}

#[test]
fn maxpool_cases() {
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (y, _) = maxpool_forward(&x, 2, 2).unwrap();
    assert_eq!(y.data(), &[4.0]);

    let c = Tensor::filled(&[1, 1, 4, 4], 0.7);
    let (y, arg) = maxpool_forward(&c, 2, 2).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.7));
    let dx = maxpool_backward(c.shape(), &arg, &Tensor::filled(&[1, 1, 2, 2], 1.0)).unwrap();
    let mut expect = vec![0.0; 16];
    for i in [0, 2, 8, 10] {
        expect[i] = 1.0;
    }
    assert_eq!(dx.data(), &expect[..]);

    assert!(maxpool_forward(&c, 5, 1).is_err());
    let rep = single_layer_check(&[2, 6, 6], 2, LayerSpec::Pool { kernel: 2, stride: 2 }, 11);
    assert!(rep.max_rel_err() < 1e-4, "{rep:?}");
}

#[test]
fn lrn_cases() {
    let z = Tensor::zeros(&[1, 4, 3, 3]);
    let (y, _) = lrn_forward(&z, 5, 1e-4, 0.75, 2.0).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));

    let x = randn(&[2, 1, 3, 3], 5).reshape(&[2, 1, 3, 3]).unwrap();
    let (alpha, beta, k) = (0.3, 0.75, 2.0);
    let (y, _) = lrn_forward(&x, 1, alpha, beta, k).unwrap();
    for (xv, yv) in x.data().iter().zip(y.data()) {
        let want = xv / (k + alpha * xv * xv).powf(beta);
        assert!((yv - want).abs() < 1e-15);
    }
    assert!(lrn_forward(&x, 2, alpha, beta, k).is_err());

    // large alpha exercises the cross-channel term
    let rep = single_layer_check(&[7, 3, 3], 2, LayerSpec::Lrn { size: 5, alpha: 0.5, beta: 0.75, k: 2.0 }, 12);
    assert!(rep.max_rel_err() < 1e-4, "{rep:?}");
}

#[test]
fn batchnorm_cases() {
    let mut x = randn(&[4, 3, 2, 2], 6);
    for i in 0..4 {
        for p in 0..4 {
            x.data_mut()[(i * 3 + 1) * 4 + p] = 2.5;
        }
    }
    let eps = 1e-5;
    let (y, cache) = batchnorm_na_forward_train(&x, eps).unwrap();
    for i in 0..4 {
        for p in 0..4 {
            assert_eq!(y.data()[(i * 3 + 1) * 4 + p], 0.0);
        }
    }
    for c in [0, 2] {
        let vals: Vec<f64> = (0..4).flat_map(|i| (0..4).map(move |p| (i * 3 + c) * 4 + p)).map(|j| y.data()[j]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let ideal = cache.var[c] / (cache.var[c] + eps);
        assert!(mean.abs() < 1e-10);
        assert!(var <= ideal * (1.0 + 1e-12) && var >= ideal * (1.0 - 1e-6), "{var} vs {ideal}");
    }
    assert!(batchnorm_na_forward_train(&randn(&[1, 3], 7), eps).is_err());

    let rep = single_layer_check(&[3, 2, 2], 4, LayerSpec::batchnorm(), 13);
    assert!(rep.max_rel_err() < 1e-4, "{rep:?}");
    let rep = single_layer_check(&[5], 3, LayerSpec::batchnorm(), 14);
    assert!(rep.max_rel_err() < 1e-4, "{rep:?}");
}

#[test]
fn batchnorm_inference_is_per_sample() {
    let spec = NetSpec::new(vec![4]).push("fc", LayerSpec::Fc { out_units: 3 }).push("bn", LayerSpec::batchnorm());
    let mut net = Net::new(spec, &mut rng::seeded(1)).unwrap();
    let (_, tape) = net.forward_train(&randn(&[8, 4], 2)).unwrap();
    net.commit_running_stats(&tape);
    let batch = randn(&[5, 4], 3);
    let all = net.forward_infer(&batch).unwrap();
    for i in 0..5 {
        let one = Tensor::new(vec![1, 4], batch.sample(i).to_vec()).unwrap();
        assert_eq!(net.forward_infer(&one).unwrap().data(), all.sample(i));
    }
}

#[test]
fn softmax_xent_cases() {
    let (loss, grad) = softmax_xent(&Tensor::zeros(&[3, 8]), &[0, 3, 7]).unwrap();
    assert!((loss - 8f64.ln()).abs() < 1e-12);
    assert!((loss - 2.0794).abs() < 1e-4);
    for i in 0..3 {
        assert!(grad.sample(i).iter().sum::<f64>().abs() < 1e-15);
    }
    let mut big = Tensor::zeros(&[1, 8]);
    big.data_mut()[2] = 1000.0;
    let (loss, grad) = softmax_xent(&big, &[2]).unwrap();
    assert!(loss.is_finite() && loss.abs() < 1e-12);
    assert!(grad.all_finite());
    assert!(softmax_xent(&big, &[8]).is_err());
}

#[test]
fn sgd_cases() {
    let mut p = Param::new(Tensor::new(vec![2], vec![1.0, -1.0]).unwrap());
    p.grad = Tensor::new(vec![2], vec![0.5, 2.0]).unwrap();
    sgd_momentum_step(&mut p, 0.1, 0.0);
    assert_eq!(p.value.data(), &[1.0 - 0.05, -1.0 - 0.2]);

    let (lr, m, g) = (0.01, 0.9, 3.0);
    let mut p = Param::new(Tensor::zeros(&[1]));
    p.grad = Tensor::filled(&[1], g);
    for n in 1..=50 {
        sgd_momentum_step(&mut p, lr, m);
        let closed = -lr * g * (1.0 - m.powi(n)) / (1.0 - m);
        assert!((p.velocity.data()[0] - closed).abs() < 1e-12);
    }

    let mut p = Param::new(Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap());
    sgd_momentum_step(&mut p, 0.5, 0.999);
    assert_eq!(p.value.data(), &[0.1, 0.2, 0.3]);
}

#[test]
fn linear_net_gradients_are_exact() {
    let rep = single_layer_check(&[6], 3, LayerSpec::Fc { out_units: 4 }, 15);
    assert!(rep.max_rel_err() < 1e-8, "{rep:?}");
}

struct SignFlip(NetObjective);

impl Objective for SignFlip {
    fn blocks(&self) -> Vec<gradcheck::Block> {
        self.0.blocks()
    }
    fn analytic(&mut self) -> patchwork::Result<Vec<Vec<f64>>> {
        let mut g = self.0.analytic()?;
        for v in g.iter_mut().flatten() {
            *v = -*v;
        }
        Ok(g)
    }
    fn perturbed(&mut self, b: usize, i: usize, d: f64) -> patchwork::Result<(f64, u64)> {
        self.0.perturbed(b, i, d)
    }
}

#[test]
fn corrupted_backward_is_caught() {
    let spec = NetSpec::new(vec![5]).push("fc", LayerSpec::Fc { out_units: 3 });
    let mut r = rng::seeded(3);
    let net = Net::new(spec, &mut r).unwrap();
    let head = LossHead::for_net(&net, 2, &mut r);
    let mut obj = SignFlip(NetObjective::new(net, randn(&[2, 5], 4), head).unwrap());
    let rep = grad_check(&mut obj, &GradCheckOptions::default()).unwrap();
    assert!(rep.max_rel_err() > 0.1);
}

#[test]
fn forward_is_bit_deterministic() {
    let spec = NetSpec::new(vec![3, 12, 12])
        .push("conv", LayerSpec::Conv { kernel: 3, out_channels: 5, stride: 1, pad: 1 })
        .push("bn", LayerSpec::batchnorm())
        .push("relu", LayerSpec::Relu)
        .push("pool", LayerSpec::Pool { kernel: 2, stride: 2 })
        .push("fc", LayerSpec::Fc { out_units: 8 });
    let a = Net::new(spec.clone(), &mut rng::seeded(9)).unwrap();
    let b = Net::new(spec, &mut rng::seeded(9)).unwrap();
    let x = randn(&[4, 3, 12, 12], 10);
    let ya = a.forward_train(&x).unwrap().0;
    let yb = b.forward_train(&x).unwrap().0;
    assert_eq!(
        ya.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        yb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn two_layer_net_separates_linear_data() {
    let mut r = rng::seeded(21);
    let n = 64;
    let dir = [0.6, -0.8];
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < n {
        let p: [f64; 2] = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let d = p[0] * dir[0] + p[1] * dir[1];
        if d.abs() < 0.1 {
            continue;
        }
        xs.extend_from_slice(&p);
        labels.push(usize::from(d > 0.0));
    }
    let x = Tensor::new(vec![n, 2], xs).unwrap();
    let spec = NetSpec::new(vec![2])
        .push("fc1", LayerSpec::Fc { out_units: 16 })
        .push("relu1", LayerSpec::Relu)
        .push("fc2", LayerSpec::Fc { out_units: 2 })
        .push("loss", LayerSpec::SoftmaxXent { classes: 2 });
    let mut net = Net::new(spec, &mut r).unwrap();
    let sgd = Sgd::new(0.1, 0.9);
    let mut acc = 0.0;
    for _ in 0..500 {
        net.zero_grad();
        let (y, tape) = net.forward_train(&x).unwrap();
        let (_, dy) = softmax_xent(&y, &labels).unwrap();
        net.backward(&tape, &dy).unwrap();
        sgd.step(net.params_mut().into_iter().map(|(_, p)| p));
        let y = net.forward_infer(&x).unwrap();
        let correct = (0..n).filter(|&i| argmax(y.sample(i)) == labels[i]).count();
        acc = correct as f64 / n as f64;
        if correct == n {
            break;
        }
    }
    assert_eq!(acc, 1.0);
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let spec = NetSpec::new(vec![3, 6, 6])
        .push("conv", LayerSpec::Conv { kernel: 3, out_channels: 2, stride: 1, pad: 0 })
        .push("bn", LayerSpec::batchnorm())
        .push("fc", LayerSpec::Fc { out_units: 4 });
    let mut net = Net::new(spec.clone(), &mut rng::seeded(2)).unwrap();
    let (_, tape) = net.forward_train(&randn(&[3, 3, 6, 6], 3)).unwrap();
    net.commit_running_stats(&tape);
    let ck = Checkpoint {
        params: net.params().into_iter().map(|(n, p)| (n, p.value.clone())).collect(),
        stats: net.running_stats(),
    };
    let bytes = ck.encode();
    assert_eq!(&bytes[..6], b"CPNET1");
    let back = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.encode(), bytes);
    let mut fresh = Net::new(spec, &mut rng::seeded(99)).unwrap();
    fresh.load_state(&back.params, &back.stats, "").unwrap();
    let x = randn(&[2, 3, 6, 6], 4);
    assert_eq!(fresh.forward_infer(&x).unwrap(), net.forward_infer(&x).unwrap());
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    assert!(Checkpoint::decode(b"CPNET2").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cpnet");
    ck.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

fn layer_strategy() -> impl Strategy<Value = (Vec<usize>, usize, LayerSpec)> {
    prop_oneof![
        (1usize..4, 4usize..9, 1usize..4, 1usize..4, 1usize..3, 0usize..2).prop_map(|(c, hw, o, k, s, p)| {
            (vec![c, hw, hw], 2, LayerSpec::Conv { kernel: k, out_channels: o, stride: s, pad: p })
        }),
        (1usize..4, 4usize..9, 1usize..3, 1usize..3).prop_map(|(c, hw, k, s)| {
            (vec![c, hw, hw], 2, LayerSpec::Pool { kernel: k + 1, stride: s })
        }),
        (1usize..7, 2usize..5).prop_map(|(c, hw)| (vec![c, hw, hw], 2, LayerSpec::Relu)),
        (1usize..8, 1usize..4, 0usize..3).prop_map(|(c, hw, half)| {
            (vec![c, hw, hw], 2, LayerSpec::Lrn { size: 2 * half + 1, alpha: 0.4, beta: 0.75, k: 2.0 })
        }),
        (1usize..5, 1usize..4, 2usize..5).prop_map(|(c, hw, n)| (vec![c, hw, hw], n, LayerSpec::batchnorm())),
        (1usize..12, 1usize..6).prop_map(|(d, o)| (vec![d], 3, LayerSpec::Fc { out_units: o })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 60, ..ProptestConfig::default() })]

    #[test]
    fn every_layer_passes_gradient_check((input, batch, layer) in layer_strategy(), seed in 0u64..1000) {
        let rep = single_layer_check(&input, batch, layer.clone(), seed);
        prop_assert!(rep.max_rel_err() < 1e-4, "{:?}: {:?}", layer, rep);
    }

    #[test]
    fn im2col_matches_direct_loops(c in 1usize..4, hw in 3usize..10, o in 1usize..4, k in 1usize..4, s in 1usize..3, p in 0usize..2, seed in any::<u64>()) {
        prop_assume!(hw + 2 * p >= k);
        let x = randn(&[2, c, hw, hw], seed);
        let w = randn(&[o, c, k, k], seed ^ 1);
        let b = randn(&[o], seed ^ 2);
        let fast = conv2d_forward(&x, &w, &b, s, p).unwrap();
        let slow = conv2d_forward_direct(&x, &w, &b, s, p).unwrap();
        prop_assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
