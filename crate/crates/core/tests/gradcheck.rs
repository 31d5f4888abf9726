//! Central finite-difference verification of every analytic gradient:
//! each registered graph op on randomized shapes, then every loss.

use affectkit_core::affect::ClassWeights;
use affectkit_core::autodiff::Graph;
use affectkit_core::losses::{
    ccc_loss, combined_loss, mse_va, weighted_bce_combined, weighted_cross_entropy, LossConfig,
};
use affectkit_core::rng::Rng;
use affectkit_core::tensor::Tensor;

const FD_STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
/// Escape hatch for entries where both sides are essentially zero and the
/// relative error is meaningless.
const ABS_FLOOR: f64 = 1e-7;

/// Asserts analytic gradients against (f(x+h) - f(x-h)) / 2h elementwise.
fn assert_matches_fd(label: &str, mut eval: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) {
    assert_eq!(x.len(), analytic.len(), "{label}: gradient length");
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let plus = eval(&probe);
        probe[i] = x[i] - FD_STEP;
        let minus = eval(&probe);
        probe[i] = x[i];
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let denom = a.abs().max(fd.abs());
        let diff = (a - fd).abs();
        assert!(
            diff <= REL_TOL * denom || diff <= ABS_FLOOR,
            "{label}: entry {i} analytic {a} vs fd {fd} (rel {})",
            diff / denom.max(1e-300)
        );
    }
}

fn random_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.normal()).collect()
}

// ---------------------------------------------------------------------------
// Per-op checks on randomized shapes (rank <= 2, sizes <= 32).
// ---------------------------------------------------------------------------

#[test]
fn elementwise_ops_match_fd() {
    let mut rng = Rng::new(101);
    for trial in 0..10 {
        let rows = 1 + rng.index(6);
        let cols = 1 + rng.index(5);
        let len = rows * cols;
        let a0 = random_vec(&mut rng, len);
        // Keep divisors away from zero.
        let b0: Vec<f64> = random_vec(&mut rng, len)
            .into_iter()
            .map(|v| v + 3.0 * v.signum() + if v == 0.0 { 3.0 } else { 0.0 })
            .collect();

        for op in ["add", "sub", "mul", "div"] {
            let build = |av: &[f64], bv: &[f64]| -> (Graph, f64, Vec<f64>, Vec<f64>) {
                let mut g = Graph::new();
                let a = g.leaf(Tensor::from_vec(&[rows, cols], av.to_vec()).unwrap(), true);
                let b = g.leaf(Tensor::from_vec(&[rows, cols], bv.to_vec()).unwrap(), true);
                let node = match op {
                    "add" => g.add(a, b).unwrap(),
                    "sub" => g.sub(a, b).unwrap(),
                    "mul" => g.mul(a, b).unwrap(),
                    _ => g.div(a, b).unwrap(),
                };
                let root = g.mean_all(node);
                let value = g.value(root).scalar_value();
                g.backward(root).unwrap();
                let ga = g.grad(a).unwrap().data().to_vec();
                let gb = g.grad(b).unwrap().data().to_vec();
                (g, value, ga, gb)
            };
            let (_, _, ga, gb) = build(&a0, &b0);
            assert_matches_fd(
                &format!("{op} lhs (trial {trial})"),
                |av| build(av, &b0).1,
                &a0,
                &ga,
            );
            assert_matches_fd(
                &format!("{op} rhs (trial {trial})"),
                |bv| build(&a0, bv).1,
                &b0,
                &gb,
            );
        }
    }
}

#[test]
fn unary_ops_match_fd() {
    let mut rng = Rng::new(202);
    for trial in 0..10 {
        let len = 1 + rng.index(32);
        // Stay away from the relu kink at zero.
        let x0: Vec<f64> = random_vec(&mut rng, len)
            .into_iter()
            .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
            .collect();
        for op in ["relu", "tanh", "sigmoid", "scale", "affine_const", "sum"] {
            let build = |xv: &[f64]| -> (f64, Vec<f64>) {
                let mut g = Graph::new();
                let x = g.leaf(Tensor::vector(xv.to_vec()), true);
                let node = match op {
                    "relu" => g.relu(x),
                    "tanh" => g.tanh(x),
                    "sigmoid" => g.sigmoid(x),
                    "scale" => g.scale(x, -1.7),
                    "affine_const" => g.affine_const(x, 2.5, -0.3),
                    _ => g.sum_all(x),
                };
                let root = if op == "sum" { node } else { g.mean_all(node) };
                let value = g.value(root).scalar_value();
                g.backward(root).unwrap();
                (value, g.grad(x).unwrap().data().to_vec())
            };
            let (_, analytic) = build(&x0);
            assert_matches_fd(&format!("{op} (trial {trial})"), |xv| build(xv).0, &x0, &analytic);
        }
    }
}

#[test]
fn affine_matches_fd_in_all_three_inputs() {
    let mut rng = Rng::new(303);
    for trial in 0..6 {
        let n = 1 + rng.index(4);
        let input = 1 + rng.index(5);
        let output = 1 + rng.index(4);
        let x0 = random_vec(&mut rng, n * input);
        let w0 = random_vec(&mut rng, input * output);
        let b0 = random_vec(&mut rng, output);

        let build = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::from_vec(&[n, input], xv.to_vec()).unwrap(), true);
            let w = g.leaf(Tensor::from_vec(&[input, output], wv.to_vec()).unwrap(), true);
            let b = g.leaf(Tensor::vector(bv.to_vec()), true);
            let y = g.affine(x, w, b).unwrap();
            let sq = g.mul(y, y).unwrap();
            let root = g.mean_all(sq);
            let value = g.value(root).scalar_value();
            g.backward(root).unwrap();
            (
                value,
                g.grad(x).unwrap().data().to_vec(),
                g.grad(w).unwrap().data().to_vec(),
                g.grad(b).unwrap().data().to_vec(),
            )
        };
        let (_, gx, gw, gb) = build(&x0, &w0, &b0);
        assert_matches_fd(
            &format!("affine x (trial {trial})"),
            |v| build(v, &w0, &b0).0,
            &x0,
            &gx,
        );
        assert_matches_fd(
            &format!("affine w (trial {trial})"),
            |v| build(&x0, v, &b0).0,
            &w0,
            &gw,
        );
        assert_matches_fd(
            &format!("affine b (trial {trial})"),
            |v| build(&x0, &w0, v).0,
            &b0,
            &gb,
        );
    }
}

#[test]
fn column_and_broadcast_ops_match_fd() {
    let mut rng = Rng::new(404);
    for trial in 0..6 {
        let n = 2 + rng.index(6);
        let d = 1 + rng.index(3);
        let x0 = random_vec(&mut rng, n * d);
        let col = rng.index(d);
        let build = |xv: &[f64]| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::from_vec(&[n, d], xv.to_vec()).unwrap(), true);
            let column = g.column(x, col).unwrap();
            let mean = g.mean_all(column);
            let centered = g.sub_broadcast(column, mean).unwrap();
            let sq = g.mul(centered, centered).unwrap();
            let root = g.mean_all(sq);
            let value = g.value(root).scalar_value();
            g.backward(root).unwrap();
            (value, g.grad(x).unwrap().data().to_vec())
        };
        let (_, analytic) = build(&x0);
        assert_matches_fd(
            &format!("column variance (trial {trial})"),
            |v| build(v).0,
            &x0,
            &analytic,
        );
    }
}

// ---------------------------------------------------------------------------
// Loss-level checks: >= 20 random batches per loss, N <= 8, K <= 8.
// ---------------------------------------------------------------------------

fn random_weights(rng: &mut Rng, k: usize) -> ClassWeights {
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    ClassWeights {
        weights: raw.iter().map(|w| w / total).collect(),
        source_counts: vec![1; k],
    }
}

#[test]
fn weighted_ce_gradient_matches_fd() {
    let mut rng = Rng::new(1);
    for trial in 0..20 {
        let n = 1 + rng.index(8);
        let k = 2 + rng.index(7);
        let logits = random_vec(&mut rng, n * k);
        let targets: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let weights = random_weights(&mut rng, k);
        let (_, grad) = weighted_cross_entropy(
            &Tensor::from_vec(&[n, k], logits.clone()).unwrap(),
            &targets,
            &weights,
        )
        .unwrap();
        assert_matches_fd(
            &format!("weighted_ce (trial {trial})"),
            |v| {
                weighted_cross_entropy(
                    &Tensor::from_vec(&[n, k], v.to_vec()).unwrap(),
                    &targets,
                    &weights,
                )
                .unwrap()
                .0
            },
            &logits,
            grad.data(),
        );
    }
}

#[test]
fn mse_gradient_matches_fd() {
    let mut rng = Rng::new(2);
    for trial in 0..20 {
        let n = 1 + rng.index(8);
        let d = 2 + rng.index(2);
        let pred = random_vec(&mut rng, n * d);
        let target = Tensor::from_vec(&[n, d], random_vec(&mut rng, n * d)).unwrap();
        let (_, grad) =
            mse_va(&Tensor::from_vec(&[n, d], pred.clone()).unwrap(), &target).unwrap();
        assert_matches_fd(
            &format!("mse (trial {trial})"),
            |v| {
                mse_va(&Tensor::from_vec(&[n, d], v.to_vec()).unwrap(), &target)
                    .unwrap()
                    .0
            },
            &pred,
            grad.data(),
        );
    }
}

#[test]
fn combined_gradient_matches_fd() {
    let mut rng = Rng::new(3);
    let config = LossConfig::default();
    assert_eq!(config.alpha, 5.0);
    for trial in 0..20 {
        let n = 1 + rng.index(8);
        let k = 2 + rng.index(7);
        let logits = random_vec(&mut rng, n * k);
        let pred = random_vec(&mut rng, n * 2);
        let targets: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let target_va = Tensor::from_vec(&[n, 2], random_vec(&mut rng, n * 2)).unwrap();

        let out = combined_loss(
            &Tensor::from_vec(&[n, k], logits.clone()).unwrap(),
            &targets,
            &Tensor::from_vec(&[n, 2], pred.clone()).unwrap(),
            &target_va,
            &config,
        )
        .unwrap();

        assert_matches_fd(
            &format!("combined logits (trial {trial})"),
            |v| {
                combined_loss(
                    &Tensor::from_vec(&[n, k], v.to_vec()).unwrap(),
                    &targets,
                    &Tensor::from_vec(&[n, 2], pred.clone()).unwrap(),
                    &target_va,
                    &config,
                )
                .unwrap()
                .value
            },
            &logits,
            out.grad_logits.data(),
        );
        assert_matches_fd(
            &format!("combined regression (trial {trial})"),
            |v| {
                combined_loss(
                    &Tensor::from_vec(&[n, k], logits.clone()).unwrap(),
                    &targets,
                    &Tensor::from_vec(&[n, 2], v.to_vec()).unwrap(),
                    &target_va,
                    &config,
                )
                .unwrap()
                .value
            },
            &pred,
            out.grad_continuous.data(),
        );
    }
}

#[test]
fn ccc_loss_gradient_matches_fd() {
    let mut rng = Rng::new(4);
    let beta = 3.0;
    for trial in 0..20 {
        let n = 3 + rng.index(6);
        let pred = random_vec(&mut rng, n * 2);
        let target = Tensor::from_vec(&[n, 2], random_vec(&mut rng, n * 2)).unwrap();
        let (_, grad) =
            ccc_loss(&Tensor::from_vec(&[n, 2], pred.clone()).unwrap(), &target, beta).unwrap();
        assert_matches_fd(
            &format!("ccc_loss (trial {trial})"),
            |v| {
                ccc_loss(&Tensor::from_vec(&[n, 2], v.to_vec()).unwrap(), &target, beta)
                    .unwrap()
                    .0
            },
            &pred,
            grad.data(),
        );
    }
}

#[test]
fn weighted_bce_combined_gradient_matches_fd() {
    let mut rng = Rng::new(5);
    let mut config = LossConfig::default();
    for trial in 0..20 {
        let n = 1 + rng.index(8);
        let k = 2 + rng.index(7);
        config.pos_weights = Some((0..k).map(|_| 1.0 + 4.0 * rng.uniform()).collect());
        let logits = random_vec(&mut rng, n * k);
        let pred = random_vec(&mut rng, n * 3);
        let mut target_bits = vec![0.0; n * k];
        for (i, bit) in target_bits.iter_mut().enumerate() {
            *bit = if rng.chance(0.3) || i % k == 0 { 1.0 } else { 0.0 };
        }
        let multi = Tensor::from_vec(&[n, k], target_bits).unwrap();
        let target_vad = Tensor::from_vec(
            &[n, 3],
            (0..n * 3).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        )
        .unwrap();

        let out = weighted_bce_combined(
            &Tensor::from_vec(&[n, k], logits.clone()).unwrap(),
            &multi,
            &Tensor::from_vec(&[n, 3], pred.clone()).unwrap(),
            &target_vad,
            &config,
        )
        .unwrap();

        assert_matches_fd(
            &format!("bce logits (trial {trial})"),
            |v| {
                weighted_bce_combined(
                    &Tensor::from_vec(&[n, k], v.to_vec()).unwrap(),
                    &multi,
                    &Tensor::from_vec(&[n, 3], pred.clone()).unwrap(),
                    &target_vad,
                    &config,
                )
                .unwrap()
                .value
            },
            &logits,
            out.grad_logits.data(),
        );
        assert_matches_fd(
            &format!("bce regression (trial {trial})"),
            |v| {
                weighted_bce_combined(
                    &Tensor::from_vec(&[n, k], logits.clone()).unwrap(),
                    &multi,
                    &Tensor::from_vec(&[n, 3], v.to_vec()).unwrap(),
                    &target_vad,
                    &config,
                )
                .unwrap()
                .value
            },
            &pred,
            out.grad_continuous.data(),
        );
    }
}

#[test]
fn model_composite_loss_matches_fd_through_all_layers() {
    use affectkit_core::model::{init_model, ModelConfig, Regime};

    let mut rng = Rng::new(6);
    let config = ModelConfig {
        input_dim: 5,
        hidden_dims: vec![6],
        num_classes: 3,
        regime: Regime::Combined,
        continuous_dims: 2,
        seed: 13,
    };
    let model = init_model(config).unwrap();
    let n = 4;
    let batch = Tensor::from_vec(&[n, 5], random_vec(&mut rng, n * 5)).unwrap();
    let targets = [0usize, 1, 2, 1];
    let target_va = Tensor::from_vec(&[n, 2], random_vec(&mut rng, n * 2)).unwrap();

    // Analytic gradients through the whole network.
    let eval = |m: &affectkit_core::model::Model| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let fwd = m.forward_graph(&mut g, &batch).unwrap();
        let ce = g
            .softmax_ce(fwd.logits.unwrap(), &targets, &[1.0 / 3.0; 3])
            .unwrap();
        let t = g.constant(target_va.clone());
        let mse = affectkit_core::losses::mse_node(&mut g, fwd.continuous.unwrap(), t).unwrap();
        let scaled = g.scale(mse, 5.0);
        let root = g.add(ce, scaled).unwrap();
        let value = g.value(root).scalar_value();
        g.backward(root).unwrap();
        let grads = fwd
            .params
            .iter()
            .map(|&p| g.grad(p).map(|t| t.data().to_vec()).unwrap_or_default())
            .collect();
        (value, grads)
    };
    let (_, grads) = eval(&model);

    for (seg_index, (name, tensor)) in model.segments().iter().enumerate() {
        let x0 = tensor.data().to_vec();
        assert_matches_fd(
            &format!("composite grad of {name}"),
            |v| {
                let mut probe = model.clone();
                let shape = probe.segments()[seg_index].1.shape().to_vec();
                probe.segments_mut()[seg_index].1 =
                    Tensor::from_vec(&shape, v.to_vec()).unwrap();
                eval(&probe).0
            },
            &x0,
            &grads[seg_index],
        );
    }
}
