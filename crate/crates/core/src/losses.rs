//! Differentiable losses for the three training regimes plus the
//! multi-label variant.
//!
//! Each loss exists in two forms: a graph builder (`*_node`) used by the
//! training loop to extend a [`Graph`] rooted at model outputs, and a direct
//! function that takes plain tensors and returns the loss value together
//! with exact gradients w.r.t. the prediction inputs. The direct form runs
//! the same graph under the hood, so there is a single implementation of
//! every formula.

use crate::affect::ClassWeights;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

fn default_alpha() -> f64 {
    5.0
}

fn default_beta() -> f64 {
    3.0
}

/// Loss balance factors and optional class weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Balance factor on the regression term of the combined loss.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Balance factor on the regression term of the valence-arousal loss.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub class_weights: Option<ClassWeights>,
    #[serde(default)]
    pub pos_weights: Option<Vec<f64>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: default_alpha(),
            beta: default_beta(),
            class_weights: None,
            pos_weights: None,
        }
    }
}

impl LossConfig {
    fn class_weight_values(&self, num_classes: usize) -> Vec<f64> {
        match &self.class_weights {
            Some(w) => w.weights.clone(),
            None => vec![1.0 / num_classes as f64; num_classes],
        }
    }
}

const DEGENERATE_EPS: f64 = 1e-12;

/// Lin's concordance correlation coefficient with population (1/N) moments:
/// 2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))^2).
///
/// When the denominator collapses below 1e-12 the inputs carry no usable
/// agreement signal: identical arrays score 1, anything else is an error.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            op: "ccc".into(),
            details: format!("{} vs {} samples", x.len(), y.len()),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ccc needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mean_x, b - mean_y);
        cov += da * db;
        var_x += da * da;
        var_y += db * db;
    }
    cov /= n;
    var_x /= n;
    var_y /= n;
    let mean_diff = mean_x - mean_y;
    let denom = var_x + var_y + mean_diff * mean_diff;
    if denom < DEGENERATE_EPS {
        let equal = x
            .iter()
            .zip(y.iter())
            .all(|(&a, &b)| (a - b).abs() <= DEGENERATE_EPS);
        if equal {
            return Ok(1.0);
        }
        return Err(Error::DegenerateInput(
            "ccc denominator vanished on non-identical inputs".into(),
        ));
    }
    Ok(2.0 * cov / denom)
}

/// Builds the mean-squared-error node over all N*D entries.
pub fn mse_node(graph: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let diff = graph.sub(pred, target)?;
    let sq = graph.mul(diff, diff)?;
    Ok(graph.mean_all(sq))
}

/// Builds the per-column concordance node for column `col` of two N x D
/// matrices. Errors if the denominator is degenerate at the current values.
fn ccc_column_node(graph: &mut Graph, pred: Var, target: Var, col: usize) -> Result<Var> {
    let x = graph.column(pred, col)?;
    let y = graph.column(target, col)?;
    let mean_x = graph.mean_all(x);
    let mean_y = graph.mean_all(y);
    let cx = graph.sub_broadcast(x, mean_x)?;
    let cy = graph.sub_broadcast(y, mean_y)?;
    let prod = graph.mul(cx, cy)?;
    let cov = graph.mean_all(prod);
    let sq_x = graph.mul(cx, cx)?;
    let var_x = graph.mean_all(sq_x);
    let sq_y = graph.mul(cy, cy)?;
    let var_y = graph.mean_all(sq_y);
    let mean_diff = graph.sub(mean_x, mean_y)?;
    let mean_diff_sq = graph.mul(mean_diff, mean_diff)?;
    let var_sum = graph.add(var_x, var_y)?;
    let denom = graph.add(var_sum, mean_diff_sq)?;
    if graph.value(denom).scalar_value() < DEGENERATE_EPS {
        return Err(Error::DegenerateInput(format!(
            "concordance denominator vanished for column {col}"
        )));
    }
    let num = graph.scale(cov, 2.0);
    graph.div(num, denom)
}

/// Builds `1 - mean over columns of per-column ccc + beta * mse`.
pub fn ccc_loss_node(graph: &mut Graph, pred: Var, target: Var, beta: f64) -> Result<Var> {
    let dims = graph.value(pred).cols();
    if graph.value(pred).rank() != 2 || graph.value(pred).rows() < 2 {
        return Err(Error::InvalidArgument(
            "ccc loss needs an N x D batch with N >= 2".into(),
        ));
    }
    let mut ccc_sum: Option<Var> = None;
    for col in 0..dims {
        let c = ccc_column_node(graph, pred, target, col)?;
        ccc_sum = Some(match ccc_sum {
            Some(acc) => graph.add(acc, c)?,
            None => c,
        });
    }
    let ccc_sum = ccc_sum.expect("at least one continuous dim");
    let ccc_term = graph.affine_const(ccc_sum, -1.0 / dims as f64, 1.0);
    let mse = mse_node(graph, pred, target)?;
    let scaled = graph.scale(mse, beta);
    graph.add(ccc_term, scaled)
}

/// Builds `weighted_ce + alpha * mse` over both heads.
pub fn combined_node(
    graph: &mut Graph,
    logits: Var,
    targets: &[usize],
    pred_va: Var,
    target_va: Var,
    config: &LossConfig,
) -> Result<Var> {
    let k = graph.value(logits).cols();
    let weights = config.class_weight_values(k);
    let ce = graph.softmax_ce(logits, targets, &weights)?;
    let mse = mse_node(graph, pred_va, target_va)?;
    let scaled = graph.scale(mse, config.alpha);
    graph.add(ce, scaled)
}

/// Builds `positive-weighted bce + alpha * mse` for the multi-label regime.
pub fn bce_combined_node(
    graph: &mut Graph,
    logits: Var,
    multi_targets: &Tensor,
    pred_vad: Var,
    target_vad: Var,
    config: &LossConfig,
) -> Result<Var> {
    let pos = config
        .pos_weights
        .as_ref()
        .ok_or_else(|| Error::Config("bce combined loss needs pos_weights".into()))?;
    let bce = graph.bce_pos_weighted(logits, multi_targets, pos)?;
    let mse = mse_node(graph, pred_vad, target_vad)?;
    let scaled = graph.scale(mse, config.alpha);
    graph.add(bce, scaled)
}

fn require_matrix(name: &str, t: &Tensor) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::Shape {
            op: name.into(),
            details: format!("expected N x D matrix, got shape {:?}", t.shape()),
        });
    }
    Ok(())
}

fn require_same_shape(name: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape {
            op: name.into(),
            details: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

/// Class-weighted cross-entropy with weighted-mean reduction.
/// Returns the scalar loss and the exact gradient w.r.t. the logits.
pub fn weighted_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Tensor)> {
    require_matrix("weighted_cross_entropy", logits)?;
    let mut graph = Graph::new();
    let l = graph.leaf(logits.clone(), true);
    let loss = graph.softmax_ce(l, targets, &weights.weights)?;
    graph.backward(loss)?;
    let grad = graph.grad(l).expect("logits receive gradient").clone();
    Ok((graph.value(loss).scalar_value(), grad))
}

/// Mean squared error over all N*D entries with gradient 2(pred-target)/(N*D).
pub fn mse_va(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    require_matrix("mse_va", pred)?;
    require_same_shape("mse_va", pred, target)?;
    let mut graph = Graph::new();
    let p = graph.leaf(pred.clone(), true);
    let t = graph.constant(target.clone());
    let loss = mse_node(&mut graph, p, t)?;
    graph.backward(loss)?;
    let grad = graph.grad(p).expect("pred receives gradient").clone();
    Ok((graph.value(loss).scalar_value(), grad))
}

/// Output of a two-head loss: scalar value plus gradients for each head.
#[derive(Debug, Clone)]
pub struct TwoHeadLoss {
    pub value: f64,
    pub grad_logits: Tensor,
    pub grad_continuous: Tensor,
}

/// Combined classification + regression loss: `weighted_ce + alpha * mse`.
pub fn combined_loss(
    logits: &Tensor,
    targets: &[usize],
    pred_va: &Tensor,
    target_va: &Tensor,
    config: &LossConfig,
) -> Result<TwoHeadLoss> {
    require_matrix("combined_loss", logits)?;
    require_matrix("combined_loss", pred_va)?;
    require_same_shape("combined_loss", pred_va, target_va)?;
    let mut graph = Graph::new();
    let l = graph.leaf(logits.clone(), true);
    let p = graph.leaf(pred_va.clone(), true);
    let t = graph.constant(target_va.clone());
    let loss = combined_node(&mut graph, l, targets, p, t, config)?;
    graph.backward(loss)?;
    Ok(TwoHeadLoss {
        value: graph.value(loss).scalar_value(),
        grad_logits: graph.grad(l).expect("logits gradient").clone(),
        grad_continuous: graph.grad(p).expect("regression gradient").clone(),
    })
}

/// Valence-arousal loss: `1 - mean(ccc per dim) + beta * mse`, with the
/// gradient taken exactly through the concordance quotient.
pub fn ccc_loss(pred_va: &Tensor, target_va: &Tensor, beta: f64) -> Result<(f64, Tensor)> {
    require_matrix("ccc_loss", pred_va)?;
    require_same_shape("ccc_loss", pred_va, target_va)?;
    let mut graph = Graph::new();
    let p = graph.leaf(pred_va.clone(), true);
    let t = graph.constant(target_va.clone());
    let loss = ccc_loss_node(&mut graph, p, t, beta)?;
    graph.backward(loss)?;
    let grad = graph.grad(p).expect("pred receives gradient").clone();
    Ok((graph.value(loss).scalar_value(), grad))
}

/// Multi-label loss: positive-weighted BCE + alpha * mse over VAD dims.
/// VAD targets must already be scaled to [-1, 1].
pub fn weighted_bce_combined(
    logits: &Tensor,
    multi_targets: &Tensor,
    pred_vad: &Tensor,
    target_vad: &Tensor,
    config: &LossConfig,
) -> Result<TwoHeadLoss> {
    require_matrix("weighted_bce_combined", logits)?;
    require_matrix("weighted_bce_combined", pred_vad)?;
    require_same_shape("weighted_bce_combined", pred_vad, target_vad)?;
    if target_vad.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::OutOfRange {
            dim: "vad target".into(),
            value: f64::NAN,
            range: "[-1, 1]".into(),
        });
    }
    let mut graph = Graph::new();
    let l = graph.leaf(logits.clone(), true);
    let p = graph.leaf(pred_vad.clone(), true);
    let t = graph.constant(target_vad.clone());
    let loss = bce_combined_node(&mut graph, l, multi_targets, p, t, config)?;
    graph.backward(loss)?;
    Ok(TwoHeadLoss {
        value: graph.value(loss).scalar_value(),
        grad_logits: graph.grad(l).expect("logits gradient").clone(),
        grad_continuous: graph.grad(p).expect("regression gradient").clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_weights(k: usize) -> ClassWeights {
        ClassWeights::uniform(k)
    }

    #[test]
    fn ce_all_equal_logits_gives_ln_k() {
        let k = 5;
        let logits = Tensor::matrix(3, k, vec![0.7; 3 * k]).unwrap();
        let (value, _) = weighted_cross_entropy(&logits, &[0, 2, 4], &uniform_weights(k)).unwrap();
        assert!((value - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_margin_vanishes() {
        let logits = Tensor::matrix(1, 3, vec![30.0, 0.0, 0.0]).unwrap();
        let (value, _) = weighted_cross_entropy(&logits, &[0], &uniform_weights(3)).unwrap();
        assert!(value < 1e-9);
    }

    #[test]
    fn ce_hand_computed_weighted_mean() {
        // Direct evaluation of the weighted-mean reduction, independent of
        // the graph implementation.
        let logits = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let targets = [0usize, 1];
        let weights = ClassWeights {
            weights: vec![0.75, 0.25],
            source_counts: vec![1, 3],
        };
        let per_sample = |row: &[f64], target: usize| {
            let z: f64 = row.iter().map(|l| l.exp()).sum();
            -(row[target].exp() / z).ln()
        };
        let l0 = per_sample(logits.row(0), 0);
        let l1 = per_sample(logits.row(1), 1);
        let expected = (0.75 * l0 + 0.25 * l1) / (0.75 + 0.25);
        let (value, _) = weighted_cross_entropy(&logits, &targets, &weights).unwrap();
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn ce_equal_weights_matches_plain_mean() {
        let logits =
            Tensor::matrix(3, 4, vec![0.3, -1.0, 2.0, 0.1, 1.5, 0.2, -0.4, 0.9, -2.0, 0.0, 0.5, 1.0])
                .unwrap();
        let targets = [2usize, 0, 3];
        let (weighted, _) = weighted_cross_entropy(&logits, &targets, &uniform_weights(4)).unwrap();
        let plain: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let row = logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|l| (l - max).exp()).sum();
                max + z.ln() - row[t]
            })
            .sum::<f64>()
            / 3.0;
        assert!((weighted - plain).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let b = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(mse_va(&a, &a).unwrap().0, 0.0);
        assert_eq!(mse_va(&a, &b).unwrap().0, 1.0);

        let pred = Tensor::matrix(2, 2, vec![0.5, -0.5, 0.0, 0.0]).unwrap();
        let target = Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, -1.0]).unwrap();
        let (value, grad) = mse_va(&pred, &target).unwrap();
        assert!((value - 0.625).abs() < 1e-12);
        // gradient = 2 (pred - target) / (N * D)
        assert!((grad.at(0, 0) - 0.25).abs() < 1e-12);
        assert!((grad.at(1, 0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn mse_shape_mismatch_rejected() {
        let a = Tensor::matrix(1, 2, vec![0.0; 2]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(mse_va(&a, &b).is_err());
    }

    #[test]
    fn combined_alpha_zero_equals_weighted_ce() {
        let logits = Tensor::matrix(2, 3, vec![0.4, -0.2, 1.0, 0.3, 0.3, -0.9]).unwrap();
        let targets = [2usize, 0];
        let pred = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let target = Tensor::matrix(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let config = LossConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let out = combined_loss(&logits, &targets, &pred, &target, &config).unwrap();
        let (ce, ce_grad) = weighted_cross_entropy(&logits, &targets, &uniform_weights(3)).unwrap();
        assert_eq!(out.value, ce);
        assert_eq!(out.grad_logits, ce_grad);
        assert!(out.grad_continuous.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn combined_is_linear_combination() {
        let logits = Tensor::matrix(2, 3, vec![0.4, -0.2, 1.0, 0.3, 0.3, -0.9]).unwrap();
        let targets = [2usize, 0];
        let pred = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let target = Tensor::matrix(2, 2, vec![0.3, -0.1, 0.2, 0.0]).unwrap();
        let config = LossConfig::default();
        let out = combined_loss(&logits, &targets, &pred, &target, &config).unwrap();
        let (ce, _) = weighted_cross_entropy(&logits, &targets, &uniform_weights(3)).unwrap();
        let (mse, _) = mse_va(&pred, &target).unwrap();
        assert!((out.value - (ce + 5.0 * mse)).abs() < 1e-12);
    }

    #[test]
    fn combined_perfect_outputs_vanish() {
        let logits = Tensor::matrix(2, 3, vec![40.0, 0.0, 0.0, 0.0, 40.0, 0.0]).unwrap();
        let targets = [0usize, 1];
        let va = Tensor::matrix(2, 2, vec![0.5, -0.4, 0.2, 0.9]).unwrap();
        let out = combined_loss(&logits, &targets, &va, &va, &LossConfig::default()).unwrap();
        assert!(out.value < 1e-9);
    }

    /// Independent direct-formula concordance used as an oracle.
    fn ccc_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov = x
            .iter()
            .zip(y.iter())
            .map(|(&a, &b)| (a - mx) * (b - my))
            .sum::<f64>()
            / n;
        let vx = x.iter().map(|&a| (a - mx) * (a - mx)).sum::<f64>() / n;
        let vy = y.iter().map(|&b| (b - my) * (b - my)).sum::<f64>() / n;
        2.0 * cov / (vx + vy + (mx - my) * (mx - my))
    }

    #[test]
    fn ccc_perfect_concordance() {
        let x = [0.1, 0.5, -0.4, 0.9];
        assert_eq!(ccc(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn ccc_constant_x_scores_zero() {
        let x = [0.3, 0.3, 0.3, 0.3];
        let y = [0.1, 0.2, 0.5, 0.9];
        assert_eq!(ccc(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn ccc_matches_direct_formula_oracle() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 2.1, 2.9, 4.2];
        let expected = ccc_oracle(&x, &y);
        // Frozen from the oracle: 2 * 1.2625 / (1.25 + 1.286875 + 0.005625).
        assert!((expected - 2.525 / 2.5425).abs() < 1e-12);
        assert!((ccc(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ccc_degenerate_rules() {
        let x = [0.5, 0.5, 0.5];
        assert_eq!(ccc(&x, &x).unwrap(), 1.0);
        // Denominator ~ 3e-13 and the arrays differ beyond the 1e-12
        // pairwise tolerance: error path.
        let y = [0.5, 0.5, 0.5 + 1e-6];
        assert!(matches!(ccc(&x, &y), Err(Error::DegenerateInput(_))));
        // Two constant arrays at different levels are not degenerate: the
        // mean gap keeps the denominator alive and concordance is zero.
        let z = [1.5, 1.5, 1.5];
        assert_eq!(ccc(&x, &z).unwrap(), 0.0);
        assert!(ccc(&x[..1], &x[..1]).is_err());
    }

    #[test]
    fn ccc_loss_zero_on_exact_match() {
        let pred = Tensor::matrix(3, 2, vec![0.1, 0.9, -0.5, 0.2, 0.7, -0.8]).unwrap();
        let (value, _) = ccc_loss(&pred, &pred, 3.0).unwrap();
        assert_eq!(value, 0.0);
    }

    #[test]
    fn ccc_loss_positive_under_pure_shift() {
        let target = Tensor::matrix(4, 2, vec![0.1, -0.2, 0.3, 0.0, -0.4, 0.2, 0.25, -0.1]).unwrap();
        let pred = target.map(|v| v + 0.5);
        let (value, _) = ccc_loss(&pred, &target, 0.0).unwrap();
        assert!(value > 0.0, "shift must cost concordance, got {value}");
    }

    #[test]
    fn ccc_loss_matches_oracle_on_hand_batch() {
        let pred =
            Tensor::matrix(4, 2, vec![0.2, -0.1, 0.5, 0.3, -0.6, 0.0, 0.9, -0.4]).unwrap();
        let target =
            Tensor::matrix(4, 2, vec![0.1, -0.2, 0.6, 0.2, -0.5, 0.1, 0.8, -0.3]).unwrap();
        let beta = 3.0;
        let (value, _) = ccc_loss(&pred, &target, beta).unwrap();

        let pv = pred.column(0);
        let pa = pred.column(1);
        let tv = target.column(0);
        let ta = target.column(1);
        let mse: f64 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<f64>()
            / 8.0;
        let expected = 1.0 - (ccc_oracle(&pv, &tv) + ccc_oracle(&pa, &ta)) / 2.0 + beta * mse;
        assert!((value - expected).abs() < 1e-10);
    }

    #[test]
    fn ccc_loss_degenerate_batch_guarded() {
        let pred = Tensor::matrix(3, 2, vec![0.2, 0.0, 0.2, 0.0, 0.2, 0.0]).unwrap();
        let target = Tensor::matrix(3, 2, vec![0.5, 0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!(ccc_loss(&pred, &target, 3.0).is_err());
    }

    #[test]
    fn bce_at_zero_logit_is_ln_two() {
        let logits = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let targets = Tensor::matrix(2, 3, vec![1.0; 6]).unwrap();
        let vad = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let config = LossConfig {
            alpha: 0.0,
            pos_weights: Some(vec![1.0, 1.0, 1.0]),
            ..Default::default()
        };
        let out = weighted_bce_combined(&logits, &targets, &vad, &vad, &config).unwrap();
        assert!((out.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_saturated_logits_vanish() {
        let logits = Tensor::matrix(1, 2, vec![40.0, -40.0]).unwrap();
        let targets = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let vad = Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let config = LossConfig {
            alpha: 0.0,
            pos_weights: Some(vec![2.0, 3.0]),
            ..Default::default()
        };
        let out = weighted_bce_combined(&logits, &targets, &vad, &vad, &config).unwrap();
        assert!(out.value < 1e-9);
    }

    #[test]
    fn bce_hand_evaluation_of_stable_form() {
        let logits = Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap();
        let targets = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let vad = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        let config = LossConfig {
            alpha: 0.0,
            pos_weights: Some(vec![4.0, 2.0]),
            ..Default::default()
        };
        // Entry (z=0.5, t=1, p=4): 4 * ln(1 + e^-0.5).
        // Entry (z=-0.5, t=0):     z + ln(1 + e^-z) = ln(1 + e^-0.5).
        let softplus_neg_half = (1.0 + (-0.5f64).exp()).ln();
        let expected = (4.0 * softplus_neg_half + softplus_neg_half) / 2.0;
        let out = weighted_bce_combined(&logits, &targets, &vad, &vad, &config).unwrap();
        assert!((out.value - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_non_binary_targets() {
        let logits = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let targets = Tensor::matrix(1, 2, vec![0.5, 0.0]).unwrap();
        let vad = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        let config = LossConfig {
            pos_weights: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        assert!(weighted_bce_combined(&logits, &targets, &vad, &vad, &config).is_err());
    }

    #[test]
    fn bce_requires_pos_weights() {
        let logits = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let targets = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let vad = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        let config = LossConfig::default();
        assert!(matches!(
            weighted_bce_combined(&logits, &targets, &vad, &vad, &config),
            Err(Error::Config(_))
        ));
    }
}
