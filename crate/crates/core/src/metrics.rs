//! Evaluation metrics and report assembly for single- and multi-label runs.

use crate::affect::Dim;
use crate::error::{Error, Result};
use crate::losses;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Per-class precision / recall / F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub category: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro and micro classification summary derived from a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub micro_accuracy: f64,
    pub per_class: Vec<ClassPrf>,
    pub confusion: Vec<Vec<u64>>,
}

/// MSE / MAE / RMSE for one dimension (or pooled over all of them).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionErrors {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Regression summary per continuous dimension plus pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub per_dim: Vec<(Dim, RegressionErrors)>,
    pub pooled: RegressionErrors,
    pub ccc_per_dim: Vec<(Dim, f64)>,
}

/// An absolute-error CDF: (threshold, fraction of |error| <= threshold).
pub type CdfCurve = Vec<(f64, f64)>;

/// Structured metric bundle for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label_space: String,
    pub num_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
    /// Multi-label only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topk_accuracy: Option<(usize, f64)>,
    /// Absolute-error CDF per dimension, plus a pooled curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cdf: Option<Vec<(String, CdfCurve)>>,
}

/// Entry (i, j) counts samples of true class i predicted as class j.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "confusion_matrix".into(),
            details: format!("{} predictions vs {} labels", pred.len(), truth.len()),
        });
    }
    let mut matrix = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        if p >= num_classes {
            return Err(Error::Label {
                index: p,
                num_classes,
            });
        }
        if t >= num_classes {
            return Err(Error::Label {
                index: t,
                num_classes,
            });
        }
        matrix[t][p] += 1;
    }
    Ok(matrix)
}

/// Macro-averaged precision, recall, and F1 with 0/0 defined as 0;
/// micro accuracy is the trace over the total count.
pub fn prf1_macro(confusion: &[Vec<u64>], categories: &[String]) -> ClassificationMetrics {
    let k = confusion.len();
    let safe_div = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };

    let mut per_class = Vec::with_capacity(k);
    let mut total = 0u64;
    let mut trace = 0u64;
    for i in 0..k {
        let row_sum: u64 = confusion[i].iter().sum();
        let col_sum: u64 = confusion.iter().map(|row| row[i]).sum();
        let diag = confusion[i][i];
        total += row_sum;
        trace += diag;
        let precision = safe_div(diag as f64, col_sum as f64);
        let recall = safe_div(diag as f64, row_sum as f64);
        let f1 = safe_div(2.0 * precision * recall, precision + recall);
        per_class.push(ClassPrf {
            category: categories.get(i).cloned().unwrap_or_else(|| format!("class_{i}")),
            precision,
            recall,
            f1,
        });
    }
    let macro_mean = |f: fn(&ClassPrf) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    ClassificationMetrics {
        precision: macro_mean(|c| c.precision),
        recall: macro_mean(|c| c.recall),
        f1: macro_mean(|c| c.f1),
        micro_accuracy: safe_div(trace as f64, total as f64),
        per_class,
        confusion: confusion.to_vec(),
    }
}

/// Standard error statistics over matching N x D matrices: per column and
/// pooled over all N*D entries.
pub fn regression_errors(pred: &Tensor, target: &Tensor, dims: &[Dim]) -> Result<RegressionMetrics> {
    if !pred.same_shape(target) || pred.rank() != 2 {
        return Err(Error::Shape {
            op: "regression_errors".into(),
            details: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    if pred.cols() != dims.len() {
        return Err(Error::Shape {
            op: "regression_errors".into(),
            details: format!("{} columns for {} dims", pred.cols(), dims.len()),
        });
    }
    let column_errors = |p: &[f64], t: &[f64]| {
        let n = p.len() as f64;
        let mse = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() / n;
        let mae = p.iter().zip(t).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / n;
        RegressionErrors {
            mse,
            mae,
            rmse: mse.sqrt(),
        }
    };
    let mut per_dim = Vec::with_capacity(dims.len());
    let mut ccc_per_dim = Vec::with_capacity(dims.len());
    for (j, dim) in dims.iter().enumerate() {
        let (pc, tc) = (pred.column(j), target.column(j));
        per_dim.push((*dim, column_errors(&pc, &tc)));
        ccc_per_dim.push((*dim, ccc_metric(&pc, &tc)?));
    }
    let pooled = column_errors(pred.data(), target.data());
    Ok(RegressionMetrics {
        per_dim,
        pooled,
        ccc_per_dim,
    })
}

/// Fraction of samples whose k best-scored classes intersect the true set.
/// Score ties break toward the lower class index.
pub fn topk_accuracy(scores: &Tensor, true_sets: &[Vec<usize>], k: usize) -> Result<f64> {
    let num_classes = scores.cols();
    if scores.rank() != 2 || scores.rows() != true_sets.len() {
        return Err(Error::Shape {
            op: "topk_accuracy".into(),
            details: format!("{:?} scores for {} label sets", scores.shape(), true_sets.len()),
        });
    }
    if k == 0 || k > num_classes {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={num_classes}"
        )));
    }
    let mut hits = 0usize;
    for (i, labels) in true_sets.iter().enumerate() {
        if labels.is_empty() {
            return Err(Error::LabelData(format!("empty true set at sample {i}")));
        }
        for &l in labels {
            if l >= num_classes {
                return Err(Error::Label {
                    index: l,
                    num_classes,
                });
            }
        }
        let top = top_k_indices(scores.row(i), k);
        if top.iter().any(|idx| labels.contains(idx)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / true_sets.len() as f64)
}

/// Indices of the k largest scores, ties broken by lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Cumulative fraction of absolute errors at or below each grid threshold.
pub fn abs_error_cdf(pred: &[f64], target: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pred.len() != target.len() {
        return Err(Error::Shape {
            op: "abs_error_cdf".into(),
            details: format!("{} predictions vs {} targets", pred.len(), target.len()),
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty threshold grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    let errors: Vec<f64> = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t).abs())
        .collect();
    let n = errors.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let count = errors.iter().filter(|&&e| e <= t).count();
            (t, count as f64 / n)
        })
        .collect())
}

/// The default threshold grid: 0.0 to 2.0 in steps of 0.05.
pub fn default_cdf_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.05).collect()
}

/// Concordance correlation for reporting; same computation as [`losses::ccc`].
pub fn ccc_metric(pred: &[f64], target: &[f64]) -> Result<f64> {
    losses::ccc(pred, target)
}

/// Writes a confusion matrix as CSV with category names on both axes.
pub fn confusion_to_csv(confusion: &[Vec<u64>], categories: &[String]) -> String {
    let mut out = String::from("category");
    for c in categories {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        out.push_str(&categories[i]);
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Writes per-dimension CDF curves as CSV rows of (dim, threshold, fraction).
pub fn cdf_to_csv(cdf: &[(String, CdfCurve)]) -> String {
    let mut out = String::from("dim,threshold,fraction\n");
    for (dim, curve) in cdf {
        for (threshold, fraction) in curve {
            out.push_str(&format!("{dim},{threshold},{fraction}\n"));
        }
    }
    out
}
