//! Training loop, evaluation, cross-dataset validation, and run logging.

use crate::affect::{compute_class_weights, compute_pos_weights, scale_from_unit, scale_to_unit, Dim};
use crate::autodiff::Graph;
use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::losses::{ccc_loss_node, mse_node, LossConfig};
use crate::metrics::{
    abs_error_cdf, confusion_matrix, default_cdf_grid, prf1_macro, regression_errors,
    top_k_indices, EvalReport,
};
use crate::model::{
    init_model, warm_start, CheckpointMeta, Model, ModelCheckpoint, ModelConfig, Regime,
};
use crate::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

fn default_batch_size() -> usize {
    128
}

fn default_lr() -> f64 {
    5e-5
}

fn default_weight_decay() -> f64 {
    0.01
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_eps() -> f64 {
    1e-8
}

fn default_hidden_dims() -> Vec<usize> {
    vec![256]
}

fn default_topk() -> usize {
    3
}

/// Full training configuration. Defaults mirror the reference recipe:
/// batch size 128, learning rate 5e-5, AdamW with cosine annealing,
/// alpha = 5 and beta = 3 in the loss config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub lr_min: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Label-space preset name the manifests are declared in.
    pub space: String,
    pub train_manifest: String,
    #[serde(default)]
    pub val_manifest: Option<String>,
    /// Undersample every class to the minority class count each epoch.
    #[serde(default)]
    pub balance_by_class: bool,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    /// Checkpoint to load weights from before training.
    #[serde(default)]
    pub warm_start: Option<String>,
    #[serde(default = "default_topk")]
    pub topk: usize,
}

impl TrainConfig {
    /// A config with every hyperparameter at its default, pointing at
    /// in-memory data (manifest paths left empty).
    pub fn defaults(regime: Regime, space: &str, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            regime,
            loss: LossConfig::default(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            lr_min: 0.0,
            epochs,
            seed,
            space: space.to_string(),
            train_manifest: String::new(),
            val_manifest: None,
            balance_by_class: false,
            weight_decay: default_weight_decay(),
            betas: default_betas(),
            eps: default_eps(),
            hidden_dims: default_hidden_dims(),
            warm_start: None,
            topk: default_topk(),
        }
    }
}

/// Loss components of one epoch, averaged over batches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concordance: Option<f64>,
}

/// Validation summary recorded per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: LossComponents,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
}

/// Everything observable about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub epochs: Vec<EpochLog>,
    /// Learning rate used at every optimizer step.
    pub lr_trace: Vec<f64>,
    pub best_epoch: usize,
    pub wall_time_secs: f64,
    pub final_checkpoint: String,
}

/// Result of [`train_with_data`]: best checkpoint by the regime's selection
/// rule, every per-epoch checkpoint, and the run log.
pub struct TrainOutcome {
    pub best: ModelCheckpoint,
    pub per_epoch: Vec<ModelCheckpoint>,
    pub run_log: RunLog,
}

/// Targets and features extracted from a manifest, in training layout.
struct PreparedData {
    features: Tensor,
    class_targets: Vec<usize>,
    multi_targets: Option<Tensor>,
    /// Continuous targets scaled into [-1, 1].
    continuous_unit: Option<Tensor>,
    class_counts: Vec<u64>,
}

fn prepare_data(manifest: &Manifest, needs_continuous: bool) -> Result<PreparedData> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset("training manifest".into()));
    }
    let k = manifest.space.num_classes();
    let dims = manifest.space.continuous_dims.len();
    let n = manifest.len();

    let feature_dim = manifest.records[0]
        .features
        .inline()
        .ok_or_else(|| Error::Config("training needs inline feature payloads".into()))?
        .len();
    if feature_dim == 0 {
        return Err(Error::Config("training needs non-empty features".into()));
    }

    let mut features = Vec::with_capacity(n * feature_dim);
    let mut class_targets = Vec::with_capacity(n);
    let mut multi = vec![0.0; n * k];
    let mut continuous = Vec::with_capacity(n * dims);
    let mut class_counts = vec![0u64; k];
    for (i, record) in manifest.records.iter().enumerate() {
        let payload = record.features.inline().ok_or_else(|| {
            Error::Config(format!("record '{}' lacks inline features", record.id))
        })?;
        if payload.len() != feature_dim {
            return Err(Error::Config(format!(
                "record '{}' has {} features, expected {feature_dim}",
                record.id,
                payload.len()
            )));
        }
        features.extend_from_slice(payload);
        class_targets.push(record.labels[0]);
        for &label in &record.labels {
            multi[i * k + label] = 1.0;
            class_counts[label] += 1;
        }
        for (dim, &value) in manifest.space.continuous_dims.iter().zip(&record.continuous) {
            let unit = scale_to_unit(value, manifest.space.value_range).map_err(|_| {
                Error::OutOfRange {
                    dim: format!("{dim} (record '{}')", record.id),
                    value,
                    range: format!("{:?}", manifest.space.value_range),
                }
            })?;
            continuous.push(unit);
        }
    }
    if needs_continuous && dims < 2 {
        return Err(Error::Config(format!(
            "space '{}' has {dims} continuous dims; regression needs at least 2",
            manifest.space.name
        )));
    }
    Ok(PreparedData {
        features: Tensor::from_vec(&[n, feature_dim], features)?,
        class_targets,
        multi_targets: if manifest.space.multi_label {
            Some(Tensor::from_vec(&[n, k], multi)?)
        } else {
            None
        },
        continuous_unit: if dims > 0 {
            Some(Tensor::from_vec(&[n, dims], continuous)?)
        } else {
            None
        },
        class_counts,
    })
}

fn gather_rows(source: &Tensor, indices: &[usize]) -> Tensor {
    let cols = source.cols();
    let mut data = Vec::with_capacity(indices.len() * cols);
    for &i in indices {
        data.extend_from_slice(source.row(i));
    }
    Tensor::from_vec(&[indices.len(), cols], data).expect("consistent row gather")
}

/// Per-step diagnostics, including the raw gradients in segment order.
pub struct BatchStep {
    pub loss: LossComponents,
    pub grads: Vec<(String, Tensor)>,
}

/// Drives one training run step by step. [`train_with_data`] wraps this;
/// tests can drive it manually to inspect gradient trajectories.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    optimizer: AdamW,
    data: PreparedData,
    loss_config: LossConfig,
    multi_label: bool,
    total_steps: u64,
    step: u64,
    lr_trace: Vec<f64>,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        train_manifest: &Manifest,
        donor: Option<&ModelCheckpoint>,
    ) -> Result<Trainer> {
        let space = &train_manifest.space;
        if space.name != config.space {
            return Err(Error::SpaceMismatch(format!(
                "config declares '{}', manifest is '{}'",
                config.space, space.name
            )));
        }
        if space.multi_label && config.regime != Regime::Combined {
            return Err(Error::Config(
                "multi-label spaces train with the combined (BCE) regime".into(),
            ));
        }
        if space.multi_label && config.balance_by_class {
            return Err(Error::Config(
                "balance_by_class undersamples by discrete label and needs a single-label space"
                    .into(),
            ));
        }
        let data = prepare_data(train_manifest, config.regime.has_regression())?;

        // Resolve loss weighting from the training split when not given.
        let mut loss_config = config.loss.clone();
        if space.multi_label {
            if loss_config.pos_weights.is_none() {
                loss_config.pos_weights = Some(compute_pos_weights(
                    &data.class_counts,
                    train_manifest.len() as u64,
                )?);
            }
        } else if config.regime.has_classification() && loss_config.class_weights.is_none() {
            loss_config.class_weights = Some(compute_class_weights(&data.class_counts)?);
        }

        let model_config = ModelConfig {
            input_dim: data.features.cols(),
            hidden_dims: config.hidden_dims.clone(),
            num_classes: space.num_classes(),
            regime: config.regime,
            continuous_dims: space.continuous_dims.len(),
            seed: config.seed,
        };
        let mut model = init_model(model_config)?;
        if let Some(ckpt) = donor {
            warm_start(&mut model, ckpt)?;
        }

        let optimizer = AdamW::new(AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            betas: config.betas,
            eps: config.eps,
        });
        let epoch_len = Self::plan_epoch_len(&config, &data);
        let mut batches_per_epoch = epoch_len.div_ceil(config.batch_size);
        // Mirror the tail-batch fold (see `batches`) so the schedule's total
        // equals the number of optimizer steps actually taken.
        if config.regime == Regime::ValenceArousal
            && batches_per_epoch > 1
            && epoch_len % config.batch_size == 1
        {
            batches_per_epoch -= 1;
        }
        let total_steps = (config.epochs * batches_per_epoch) as u64;
        Ok(Trainer {
            multi_label: space.multi_label,
            config,
            model,
            optimizer,
            data,
            loss_config,
            total_steps,
            step: 0,
            lr_trace: Vec::new(),
        })
    }

    fn plan_epoch_len(config: &TrainConfig, data: &PreparedData) -> usize {
        if config.balance_by_class {
            let min_count = data.class_counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0)
                as usize;
            let classes = data.class_counts.iter().filter(|&&c| c > 0).count();
            min_count * classes
        } else {
            data.class_targets.len()
        }
    }

    /// Sample order for one epoch: optional per-class undersampling to the
    /// minority count, then a seeded shuffle. Streams are derived from
    /// (seed, epoch) so re-runs reproduce the exact order.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = if self.config.balance_by_class {
            let mut rng = Rng::derive(self.config.seed, "balance", epoch as u64);
            let k = self.data.class_counts.len();
            let min_count = self
                .data
                .class_counts
                .iter()
                .copied()
                .filter(|&c| c > 0)
                .min()
                .unwrap_or(0) as usize;
            let mut chosen = Vec::new();
            for class in 0..k {
                let mut members: Vec<usize> = self
                    .data
                    .class_targets
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c == class)
                    .map(|(i, _)| i)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                rng.shuffle(&mut members);
                chosen.extend_from_slice(&members[..min_count]);
            }
            chosen
        } else {
            (0..self.data.class_targets.len()).collect()
        };
        let mut rng = Rng::derive(self.config.seed, "shuffle", epoch as u64);
        rng.shuffle(&mut order);
        order
    }

    /// Splits an epoch order into batches; the final short batch is kept.
    /// A trailing single sample is folded into the previous batch when the
    /// loss carries a concordance term, which is undefined on one sample.
    pub fn batches(&self, order: &[usize]) -> Vec<Vec<usize>> {
        let mut batches: Vec<Vec<usize>> =
            order.chunks(self.config.batch_size).map(|c| c.to_vec()).collect();
        if self.config.regime == Regime::ValenceArousal && batches.len() > 1 {
            if let Some(tail) = batches.pop_if(|b| b.len() == 1) {
                batches.last_mut().expect("len > 1").extend(tail);
            }
        }
        batches
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn lr_trace(&self) -> &[f64] {
        &self.lr_trace
    }

    /// Runs one optimizer step on the given sample indices and returns the
    /// loss components plus the gradients that were applied.
    pub fn step_batch(&mut self, indices: &[usize]) -> Result<BatchStep> {
        let features = gather_rows(&self.data.features, indices);
        let mut graph = Graph::new();
        let forward = self.model.forward_graph(&mut graph, &features)?;

        let mut components = LossComponents::default();
        let class_weights: Vec<f64> = self
            .loss_config
            .class_weights
            .as_ref()
            .map(|w| w.weights.clone())
            .unwrap_or_else(|| {
                let k = self.model.config.num_classes;
                vec![1.0 / k as f64; k]
            });

        let continuous_target = || -> Result<Tensor> {
            let targets = self
                .data
                .continuous_unit
                .as_ref()
                .ok_or_else(|| Error::Config("regime needs continuous targets".into()))?;
            Ok(gather_rows(targets, indices))
        };

        let loss = match self.config.regime {
            Regime::Discrete => {
                let logits = forward.logits.expect("discrete regime has logits");
                let targets: Vec<usize> =
                    indices.iter().map(|&i| self.data.class_targets[i]).collect();
                let ce = graph.softmax_ce(logits, &targets, &class_weights)?;
                components.classification = Some(graph.value(ce).scalar_value());
                ce
            }
            Regime::Combined => {
                let logits = forward.logits.expect("combined regime has logits");
                let pred = forward.continuous.expect("combined regime has regression");
                let target = graph.constant(continuous_target()?);
                let mse = mse_node(&mut graph, pred, target)?;
                components.regression_mse = Some(graph.value(mse).scalar_value());
                let class_term = if self.multi_label {
                    let multi = self
                        .data
                        .multi_targets
                        .as_ref()
                        .expect("multi-label targets prepared");
                    let batch_targets = gather_rows(multi, indices);
                    let pos = self
                        .loss_config
                        .pos_weights
                        .as_ref()
                        .ok_or_else(|| Error::Config("missing pos_weights".into()))?;
                    graph.bce_pos_weighted(logits, &batch_targets, pos)?
                } else {
                    let targets: Vec<usize> =
                        indices.iter().map(|&i| self.data.class_targets[i]).collect();
                    graph.softmax_ce(logits, &targets, &class_weights)?
                };
                components.classification = Some(graph.value(class_term).scalar_value());
                let scaled = graph.scale(mse, self.loss_config.alpha);
                graph.add(class_term, scaled)?
            }
            Regime::ValenceArousal => {
                let pred = forward.continuous.expect("regression regime has output");
                let target = graph.constant(continuous_target()?);
                let mse = mse_node(&mut graph, pred, target)?;
                components.regression_mse = Some(graph.value(mse).scalar_value());
                let loss = ccc_loss_node(&mut graph, pred, target, self.loss_config.beta)?;
                components.concordance = Some(
                    graph.value(loss).scalar_value()
                        - self.loss_config.beta * graph.value(mse).scalar_value(),
                );
                loss
            }
        };

        let loss_value = graph.value(loss).scalar_value();
        if !loss_value.is_finite() {
            return Err(Error::TrainAbort(format!(
                "non-finite loss at step {} (batch of {} samples, first id index {})",
                self.step,
                indices.len(),
                indices.first().copied().unwrap_or(0)
            )));
        }
        components.total = loss_value;

        graph.backward(loss)?;
        let grads: Vec<(String, Tensor)> = self
            .model
            .segments()
            .iter()
            .zip(forward.params.iter())
            .map(|((name, tensor), &var)| {
                let grad = graph
                    .grad(var)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
                (name.clone(), grad)
            })
            .collect();

        let lr = cosine_lr(self.step, self.total_steps, self.config.lr, self.config.lr_min)?;
        self.lr_trace.push(lr);
        self.optimizer.set_lr(lr);
        let grad_tensors: Vec<Tensor> = grads.iter().map(|(_, g)| g.clone()).collect();
        self.optimizer.step(self.model.segments_mut(), &grad_tensors)?;
        self.step += 1;

        Ok(BatchStep {
            loss: components,
            grads,
        })
    }

    pub fn checkpoint(&self, epoch: usize, loss_history: Vec<f64>) -> ModelCheckpoint {
        ModelCheckpoint::from_model(
            &self.model,
            CheckpointMeta {
                epoch,
                loss_history,
                label_space: self.config.space.clone(),
            },
        )
    }
}

fn better_checkpoint(
    regime: Regime,
    best: &Option<(usize, ValidationSummary)>,
    candidate_epoch: usize,
    candidate: &ValidationSummary,
) -> bool {
    let Some((_, current)) = best else {
        return true;
    };
    match regime {
        Regime::Discrete => candidate.macro_f1 > current.macro_f1,
        Regime::ValenceArousal => match (candidate.pooled_rmse, current.pooled_rmse) {
            (Some(c), Some(b)) => c < b,
            (Some(_), None) => true,
            _ => false,
        },
        Regime::Combined => {
            let (cf, bf) = (
                candidate.macro_f1.unwrap_or(f64::NEG_INFINITY),
                current.macro_f1.unwrap_or(f64::NEG_INFINITY),
            );
            if cf != bf {
                return cf > bf;
            }
            let (cr, br) = (
                candidate.pooled_rmse.unwrap_or(f64::INFINITY),
                current.pooled_rmse.unwrap_or(f64::INFINITY),
            );
            let _ = candidate_epoch;
            cr < br
        }
    }
}

/// Trains on in-memory manifests. Deterministic per (config, data): the
/// same seed reproduces batch order, gradients, and the run log exactly.
pub fn train_with_data(
    config: TrainConfig,
    train_manifest: &Manifest,
    val_manifest: Option<&Manifest>,
    donor: Option<&ModelCheckpoint>,
) -> Result<TrainOutcome> {
    let started = std::time::Instant::now();
    let epochs = config.epochs;
    let topk = config.topk;
    let mut trainer = Trainer::new(config, train_manifest, donor)?;

    let mut per_epoch = Vec::new();
    let mut epoch_logs = Vec::new();
    let mut best: Option<(usize, ValidationSummary)> = None;
    let mut loss_history = Vec::new();

    for epoch in 0..epochs {
        let order = trainer.epoch_order(epoch);
        let batches = trainer.batches(&order);
        let mut sums = LossComponents::default();
        let mut batch_count = 0.0;
        for batch in &batches {
            let step = trainer.step_batch(batch)?;
            batch_count += 1.0;
            sums.total += step.loss.total;
            if let Some(v) = step.loss.classification {
                *sums.classification.get_or_insert(0.0) += v;
            }
            if let Some(v) = step.loss.regression_mse {
                *sums.regression_mse.get_or_insert(0.0) += v;
            }
            if let Some(v) = step.loss.concordance {
                *sums.concordance.get_or_insert(0.0) += v;
            }
        }
        let train_loss = LossComponents {
            total: sums.total / batch_count,
            classification: sums.classification.map(|v| v / batch_count),
            regression_mse: sums.regression_mse.map(|v| v / batch_count),
            concordance: sums.concordance.map(|v| v / batch_count),
        };
        loss_history.push(train_loss.total);

        let validation = match val_manifest {
            Some(manifest) => {
                let report = evaluate_model(&trainer.model, manifest, topk)?;
                Some(ValidationSummary {
                    macro_f1: report.classification.as_ref().map(|c| c.f1),
                    pooled_rmse: report.regression.as_ref().map(|r| r.pooled.rmse),
                })
            }
            None => None,
        };
        if let Some(summary) = &validation {
            if better_checkpoint(trainer.config.regime, &best, epoch, summary) {
                best = Some((epoch, summary.clone()));
            }
        }
        epoch_logs.push(EpochLog {
            epoch,
            train_loss,
            validation,
        });
        per_epoch.push(trainer.checkpoint(epoch, loss_history.clone()));
    }

    if per_epoch.is_empty() {
        // Zero epochs: the checkpoint is the initialization.
        per_epoch.push(trainer.checkpoint(0, Vec::new()));
    }
    let best_epoch = best.map(|(e, _)| e).unwrap_or(per_epoch.len() - 1);
    let run_log = RunLog {
        epochs: epoch_logs,
        lr_trace: trainer.lr_trace().to_vec(),
        best_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
        final_checkpoint: String::new(),
    };
    Ok(TrainOutcome {
        best: per_epoch[best_epoch].clone(),
        per_epoch,
        run_log,
    })
}

/// Assembles an [`EvalReport`] from raw model outputs against a manifest.
/// `continuous_unit` must be in [-1, 1] coordinates; it is mapped into the
/// manifest's native units before error computation.
pub fn report_from_outputs(
    logits: Option<&Tensor>,
    continuous_unit: Option<&Tensor>,
    manifest: &Manifest,
    topk: usize,
) -> Result<EvalReport> {
    let space = &manifest.space;
    let n = manifest.len();
    if n == 0 {
        return Err(Error::EmptyDataset("evaluation manifest".into()));
    }

    let mut classification = None;
    let mut topk_accuracy = None;
    if let Some(scores) = logits {
        if scores.rows() != n {
            return Err(Error::Shape {
                op: "report_from_outputs".into(),
                details: format!("{} logit rows for {n} samples", scores.rows()),
            });
        }
        if space.multi_label {
            let sets: Vec<Vec<usize>> =
                manifest.records.iter().map(|r| r.labels.clone()).collect();
            topk_accuracy = Some((topk, crate::metrics::topk_accuracy(scores, &sets, topk)?));
        } else {
            let pred: Vec<usize> = (0..n).map(|i| top_k_indices(scores.row(i), 1)[0]).collect();
            let truth: Vec<usize> = manifest.records.iter().map(|r| r.labels[0]).collect();
            let confusion = confusion_matrix(&pred, &truth, space.num_classes())?;
            classification = Some(prf1_macro(&confusion, &space.categories));
        }
    }

    let mut regression = None;
    let mut cdf = None;
    if let Some(unit_pred) = continuous_unit {
        let dims = space.continuous_dims.clone();
        if unit_pred.rows() != n {
            return Err(Error::Shape {
                op: "report_from_outputs".into(),
                details: format!("{:?} continuous predictions for {n} samples", unit_pred.shape()),
            });
        }
        let used_dims: Vec<Dim> = dims.iter().take(unit_pred.cols()).copied().collect();
        // Map predictions out of unit space into the manifest's native units.
        let mut native = Vec::with_capacity(n * used_dims.len());
        let mut target = Vec::with_capacity(n * used_dims.len());
        for (i, record) in manifest.records.iter().enumerate() {
            for (j, _) in used_dims.iter().enumerate() {
                native.push(scale_from_unit(unit_pred.at(i, j), space.value_range)?);
                target.push(record.continuous[j]);
            }
        }
        let pred = Tensor::from_vec(&[n, used_dims.len()], native)?;
        let target = Tensor::from_vec(&[n, used_dims.len()], target)?;
        regression = Some(regression_errors(&pred, &target, &used_dims)?);

        let grid = default_cdf_grid();
        let mut curves = Vec::new();
        for (j, dim) in used_dims.iter().enumerate() {
            let curve = abs_error_cdf(&pred.column(j), &target.column(j), &grid)?;
            curves.push((dim.name().to_string(), curve));
        }
        curves.push((
            "pooled".to_string(),
            abs_error_cdf(pred.data(), target.data(), &grid)?,
        ));
        cdf = Some(curves);
    }

    Ok(EvalReport {
        label_space: space.name.clone(),
        num_samples: n,
        classification,
        regression,
        topk_accuracy,
        cdf,
    })
}

fn forward_in_batches(model: &Model, features: &Tensor) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let n = features.rows();
    let chunk = 512;
    let mut logits_data = Vec::new();
    let mut continuous_data = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let batch = gather_rows(features, &indices);
        let out = model.forward(&batch)?;
        if let Some(l) = out.logits {
            logits_data.extend_from_slice(l.data());
        }
        if let Some(c) = out.continuous {
            continuous_data.extend_from_slice(c.data());
        }
        start = end;
    }
    let logits = if logits_data.is_empty() {
        None
    } else {
        Some(Tensor::from_vec(&[n, model.config.num_classes], logits_data)?)
    };
    let continuous = if continuous_data.is_empty() {
        None
    } else {
        Some(Tensor::from_vec(&[n, model.config.continuous_dims], continuous_data)?)
    };
    Ok((logits, continuous))
}

/// Evaluates a model on a manifest, reporting in the manifest's native units.
pub fn evaluate_model(model: &Model, manifest: &Manifest, topk: usize) -> Result<EvalReport> {
    let data = prepare_data(manifest, false)?;
    let (logits, continuous) = forward_in_batches(model, &data.features)?;
    report_from_outputs(logits.as_ref(), continuous.as_ref(), manifest, topk)
}

/// Evaluates a checkpoint on a manifest. The checkpoint must have been
/// trained in the manifest's label space.
pub fn evaluate(checkpoint: &ModelCheckpoint, manifest: &Manifest, topk: usize) -> Result<EvalReport> {
    if checkpoint.metadata.label_space != manifest.space.name {
        return Err(Error::SpaceMismatch(format!(
            "checkpoint space '{}' vs manifest '{}'; use cross-validate for \
             cross-space evaluation",
            checkpoint.metadata.label_space, manifest.space.name
        )));
    }
    let model = checkpoint.clone().into_model()?;
    evaluate_model(&model, manifest, topk)
}

/// Cross-dataset validation: rescales the target dataset's valence/arousal
/// annotations into [-1, 1] and evaluates only those shared dimensions,
/// in unit coordinates.
pub fn cross_validate(checkpoint: &ModelCheckpoint, manifest: &Manifest) -> Result<EvalReport> {
    let space = &manifest.space;
    let (vi, ai) = match (space.dim_index(Dim::Valence), space.dim_index(Dim::Arousal)) {
        (Some(v), Some(a)) => (v, a),
        _ => {
            return Err(Error::SpaceMismatch(format!(
                "space '{}' lacks valence/arousal; nothing shared to compare",
                space.name
            )))
        }
    };
    let model = checkpoint.clone().into_model()?;
    if !model.config.regime.has_regression() {
        return Err(Error::SpaceMismatch(
            "checkpoint has no regression head to cross-validate".into(),
        ));
    }

    // The model's output columns follow its own training space's dim order;
    // when that space is not a known preset, every preset puts valence and
    // arousal first, and the same layout is assumed.
    let source_dims = match crate::affect::LabelSpace::preset(&checkpoint.metadata.label_space) {
        Ok(source) => source.continuous_dims,
        Err(_) => vec![Dim::Valence, Dim::Arousal, Dim::Dominance],
    };
    let (pvi, pai) = match (
        source_dims.iter().position(|d| *d == Dim::Valence),
        source_dims.iter().position(|d| *d == Dim::Arousal),
    ) {
        (Some(v), Some(a)) if v < model.config.continuous_dims && a < model.config.continuous_dims => {
            (v, a)
        }
        _ => {
            return Err(Error::SpaceMismatch(format!(
                "checkpoint space '{}' does not predict valence/arousal",
                checkpoint.metadata.label_space
            )))
        }
    };

    let data = prepare_data(manifest, false)?;
    let (_, continuous) = forward_in_batches(&model, &data.features)?;
    let unit_pred =
        continuous.ok_or_else(|| Error::SpaceMismatch("model emitted no continuous output".into()))?;

    let n = manifest.len();
    let mut pred = Vec::with_capacity(n * 2);
    let mut target = Vec::with_capacity(n * 2);
    for (i, record) in manifest.records.iter().enumerate() {
        pred.push(unit_pred.at(i, pvi));
        pred.push(unit_pred.at(i, pai));
        target.push(scale_to_unit(record.continuous[vi], space.value_range)?);
        target.push(scale_to_unit(record.continuous[ai], space.value_range)?);
    }
    let shared = [Dim::Valence, Dim::Arousal];
    let pred = Tensor::from_vec(&[n, 2], pred)?;
    let target = Tensor::from_vec(&[n, 2], target)?;
    let regression = regression_errors(&pred, &target, &shared)?;

    let grid = default_cdf_grid();
    let mut curves = Vec::new();
    for (j, dim) in shared.iter().enumerate() {
        curves.push((
            dim.name().to_string(),
            abs_error_cdf(&pred.column(j), &target.column(j), &grid)?,
        ));
    }
    curves.push((
        "pooled".to_string(),
        abs_error_cdf(pred.data(), target.data(), &grid)?,
    ));

    Ok(EvalReport {
        label_space: space.name.clone(),
        num_samples: n,
        classification: None,
        regression: Some(regression),
        topk_accuracy: None,
        cdf: Some(curves),
    })
}
