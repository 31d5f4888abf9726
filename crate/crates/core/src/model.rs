//! Compact two-head dense network covering the three training regimes.
//!
//! A stack of affine + relu hidden layers feeds a classification head
//! (K logits) and/or a tanh-bounded regression head, depending on the
//! regime. The dense backbone stands in for a large pretrained vision
//! backbone; it is deliberately small so CPU training finishes in minutes
//! while still exercising every loss.

use crate::affect::{scale_from_unit, ValueRange};
use crate::autodiff::{bounded_tanh, sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::metrics::top_k_indices;
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Which heads the model trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Classification head only.
    Discrete,
    /// Classification and regression heads.
    Combined,
    /// Regression head only.
    ValenceArousal,
}

impl Regime {
    pub fn has_classification(&self) -> bool {
        matches!(self, Regime::Discrete | Regime::Combined)
    }

    pub fn has_regression(&self) -> bool {
        matches!(self, Regime::Combined | Regime::ValenceArousal)
    }
}

/// Architecture and initialization description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub regime: Regime,
    /// 2 for valence/arousal, 3 when dominance is present.
    pub continuous_dims: usize,
    pub seed: u64,
}

impl ModelConfig {
    fn check(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.regime.has_classification() && self.num_classes < 2 {
            return Err(Error::Config(format!(
                "classification regime needs >= 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.regime.has_regression() && !(2..=3).contains(&self.continuous_dims) {
            return Err(Error::Config(format!(
                "regression regime needs 2 or 3 continuous dims, got {}",
                self.continuous_dims
            )));
        }
        Ok(())
    }
}

/// Dense model with named weight segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    segments: Vec<(String, Tensor)>,
}

fn xavier(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform_in(-limit, limit))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("consistent shape")
}

/// Deterministic initialization from the config seed. The draw order is
/// backbone, then classification head, then regression head, so regimes
/// sharing a prefix of that order start from identical shared weights.
pub fn init_model(config: ModelConfig) -> Result<Model> {
    config.check()?;
    let mut rng = Rng::derive(config.seed, "model_init", 0);
    let mut segments = Vec::new();
    let mut width = config.input_dim;
    for (i, &hidden) in config.hidden_dims.iter().enumerate() {
        segments.push((format!("hidden_{i}_w"), xavier(&mut rng, width, hidden)));
        segments.push((format!("hidden_{i}_b"), Tensor::zeros(&[hidden])));
        width = hidden;
    }
    if config.regime.has_classification() {
        segments.push(("class_w".into(), xavier(&mut rng, width, config.num_classes)));
        segments.push(("class_b".into(), Tensor::zeros(&[config.num_classes])));
    }
    if config.regime.has_regression() {
        segments.push(("reg_w".into(), xavier(&mut rng, width, config.continuous_dims)));
        segments.push(("reg_b".into(), Tensor::zeros(&[config.continuous_dims])));
    }
    Ok(Model { config, segments })
}

/// Model outputs: logits and/or bounded continuous predictions.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Option<Tensor>,
    pub continuous: Option<Tensor>,
}

/// Graph handles for one differentiable forward pass.
pub struct GraphForward {
    pub logits: Option<Var>,
    pub continuous: Option<Var>,
    /// Parameter leaves aligned with [`Model::segments`].
    pub params: Vec<Var>,
}

impl Model {
    pub fn segments(&self) -> &[(String, Tensor)] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut Vec<(String, Tensor)> {
        &mut self.segments
    }

    fn segment(&self, name: &str) -> &Tensor {
        &self
            .segments
            .iter()
            .find(|(n, _)| n == name)
            .expect("segment present by construction")
            .1
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != 2 || batch.cols() != self.config.input_dim {
            return Err(Error::Shape {
                op: "forward".into(),
                details: format!(
                    "batch shape {:?}, expected N x {}",
                    batch.shape(),
                    self.config.input_dim
                ),
            });
        }
        Ok(())
    }

    /// Pure forward pass without building a differentiation graph.
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        self.check_batch(batch)?;
        let mut h = batch.clone();
        for i in 0..self.config.hidden_dims.len() {
            let w = self.segment(&format!("hidden_{i}_w"));
            let b = self.segment(&format!("hidden_{i}_b"));
            let mut z = h.matmul(w)?;
            let cols = z.cols();
            for row in 0..z.rows() {
                for col in 0..cols {
                    let v = (z.at(row, col) + b.data()[col]).max(0.0);
                    z.set(row, col, v);
                }
            }
            h = z;
        }
        let head = |w_name: &str, b_name: &str| -> Result<Tensor> {
            let w = self.segment(w_name);
            let b = self.segment(b_name);
            let mut z = h.matmul(w)?;
            let cols = z.cols();
            for row in 0..z.rows() {
                for col in 0..cols {
                    let v = z.at(row, col) + b.data()[col];
                    z.set(row, col, v);
                }
            }
            Ok(z)
        };
        let logits = if self.config.regime.has_classification() {
            Some(head("class_w", "class_b")?)
        } else {
            None
        };
        let continuous = if self.config.regime.has_regression() {
            Some(head("reg_w", "reg_b")?.map(bounded_tanh))
        } else {
            None
        };
        Ok(ForwardOutput { logits, continuous })
    }

    /// Differentiable forward pass: registers every weight segment as a
    /// `requires_grad` leaf on `graph` and builds the head outputs.
    pub fn forward_graph(&self, graph: &mut Graph, batch: &Tensor) -> Result<GraphForward> {
        self.check_batch(batch)?;
        let params: Vec<Var> = self
            .segments
            .iter()
            .map(|(_, tensor)| graph.leaf(tensor.clone(), true))
            .collect();
        let var_of = |name: &str| -> Var {
            let idx = self
                .segments
                .iter()
                .position(|(n, _)| n == name)
                .expect("segment present by construction");
            params[idx]
        };
        let mut h = graph.constant(batch.clone());
        for i in 0..self.config.hidden_dims.len() {
            let z = graph.affine(h, var_of(&format!("hidden_{i}_w")), var_of(&format!("hidden_{i}_b")))?;
            h = graph.relu(z);
        }
        let logits = if self.config.regime.has_classification() {
            Some(graph.affine(h, var_of("class_w"), var_of("class_b"))?)
        } else {
            None
        };
        let continuous = if self.config.regime.has_regression() {
            let z = graph.affine(h, var_of("reg_w"), var_of("reg_b"))?;
            Some(graph.tanh(z))
        } else {
            None
        };
        Ok(GraphForward {
            logits,
            continuous,
            params,
        })
    }
}

/// Decoded predictions for a batch.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Single-label: one argmax index per sample (ties to the lower index).
    /// Multi-label: all classes whose sigmoid score exceeds 0.5.
    pub label_sets: Option<Vec<Vec<usize>>>,
    /// Raw logits for ranking / top-k.
    pub scores: Option<Tensor>,
    /// Continuous predictions, in (-1, 1) or rescaled to `target_range`.
    pub continuous: Option<Tensor>,
}

/// Runs the model and decodes outputs. When `target_range` is given the
/// continuous predictions are mapped out of [-1, 1] into that range.
pub fn predict(
    model: &Model,
    batch: &Tensor,
    multi_label: bool,
    target_range: Option<ValueRange>,
) -> Result<Prediction> {
    let out = model.forward(batch)?;
    let label_sets = match &out.logits {
        Some(logits) => {
            let mut sets = Vec::with_capacity(logits.rows());
            for i in 0..logits.rows() {
                let row = logits.row(i);
                if multi_label {
                    let chosen: Vec<usize> = row
                        .iter()
                        .enumerate()
                        .filter(|(_, &z)| sigmoid(z) > 0.5)
                        .map(|(j, _)| j)
                        .collect();
                    sets.push(chosen);
                } else {
                    sets.push(vec![top_k_indices(row, 1)[0]]);
                }
            }
            Some(sets)
        }
        None => None,
    };
    let continuous = match (out.continuous, target_range) {
        (Some(c), Some(range)) => {
            let mut rescaled = c.clone();
            for v in rescaled.data_mut() {
                *v = scale_from_unit(*v, range)?;
            }
            Some(rescaled)
        }
        (c, _) => c,
    };
    Ok(Prediction {
        label_sets,
        scores: out.logits,
        continuous,
    })
}

const CHECKPOINT_VERSION: u32 = 1;

/// Training metadata carried by a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub loss_history: Vec<f64>,
    pub label_space: String,
}

/// Serialized weights + config + training metadata. JSON round-trips are
/// bit-identical because every f64 is written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub segments: Vec<(String, Tensor)>,
    pub metadata: CheckpointMeta,
}

impl ModelCheckpoint {
    pub fn from_model(model: &Model, metadata: CheckpointMeta) -> Self {
        ModelCheckpoint {
            format_version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            segments: model.segments.clone(),
            metadata,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        let expected = init_model(self.config.clone())?;
        if expected.segments.len() != self.segments.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} weight segments, found {}",
                expected.segments.len(),
                self.segments.len()
            )));
        }
        for ((name, tensor), (exp_name, exp_tensor)) in
            self.segments.iter().zip(expected.segments.iter())
        {
            if name != exp_name || !tensor.same_shape(exp_tensor) {
                return Err(Error::Checkpoint(format!(
                    "segment '{name}' does not match the config layout"
                )));
            }
        }
        Ok(Model {
            config: self.config,
            segments: self.segments,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Copies donor weights into `model` for every segment the target declares.
/// Every target segment must exist in the donor with a matching shape.
pub fn warm_start(model: &mut Model, donor: &ModelCheckpoint) -> Result<()> {
    for (name, tensor) in &mut model.segments {
        let donor_tensor = donor
            .segments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| {
                Error::Checkpoint(format!("donor checkpoint lacks segment '{name}'"))
            })?;
        if !donor_tensor.same_shape(tensor) {
            return Err(Error::Checkpoint(format!(
                "segment '{name}' shape {:?} does not match donor {:?}",
                tensor.shape(),
                donor_tensor.shape()
            )));
        }
        *tensor = donor_tensor.clone();
    }
    Ok(())
}
