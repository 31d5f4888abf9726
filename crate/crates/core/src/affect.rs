//! Label spaces, value-range transforms, and loss-weight derivation.
//!
//! A [`LabelSpace`] declares the annotation scheme a sample lives in: its
//! category set, whether multiple labels are allowed, which continuous affect
//! dimensions it carries, and the numeric range of those dimensions. The
//! built-in presets mirror the two common annotation schemes: unit-interval
//! reals with a single label (AffectNet style) and 1..10 integers with
//! multiple labels plus dominance (EMOTIC style).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Continuous affect dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Valence,
    Arousal,
    Dominance,
}

impl Dim {
    pub fn name(&self) -> &'static str {
        match self {
            Dim::Valence => "valence",
            Dim::Arousal => "arousal",
            Dim::Dominance => "dominance",
        }
    }

    pub fn parse(name: &str) -> Result<Dim> {
        match name {
            "valence" => Ok(Dim::Valence),
            "arousal" => Ok(Dim::Arousal),
            "dominance" => Ok(Dim::Dominance),
            other => Err(Error::UnknownDim(other.to_string())),
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Numeric range of continuous annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    /// Reals in [-1, 1].
    UnitReal,
    /// Integers in [1, 10].
    TenInt,
}

impl ValueRange {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ValueRange::UnitReal => (-1.0, 1.0),
            ValueRange::TenInt => (1.0, 10.0),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        let (lo, hi) = self.bounds();
        value >= lo && value <= hi
    }

    fn describe(&self) -> &'static str {
        match self {
            ValueRange::UnitReal => "[-1, 1]",
            ValueRange::TenInt => "[1, 10]",
        }
    }
}

/// Maps a value from `from`'s range onto [-1, 1].
///
/// The TenInt map is the unique affine surjection with 1 -> -1 and 10 -> 1,
/// i.e. v' = (v - 5.5) / 4.5; UnitReal is the identity.
pub fn scale_to_unit(value: f64, from: ValueRange) -> Result<f64> {
    if !from.contains(value) {
        return Err(Error::OutOfRange {
            dim: "value".into(),
            value,
            range: from.describe().into(),
        });
    }
    Ok(match from {
        ValueRange::UnitReal => value,
        ValueRange::TenInt => (value - 5.5) / 4.5,
    })
}

/// Inverse of [`scale_to_unit`]. Accepts any real in [-1, 1]; fractional
/// outputs are meaningful for TenInt because model predictions are
/// continuous even when annotations are integers.
pub fn scale_from_unit(value: f64, to: ValueRange) -> Result<f64> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange {
            dim: "value".into(),
            value,
            range: "[-1, 1]".into(),
        });
    }
    Ok(match to {
        ValueRange::UnitReal => value,
        ValueRange::TenInt => value * 4.5 + 5.5,
    })
}

/// Declaration of an annotation scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub name: String,
    pub categories: Vec<String>,
    pub multi_label: bool,
    pub continuous_dims: Vec<Dim>,
    pub value_range: ValueRange,
}

impl LabelSpace {
    pub fn new(
        name: impl Into<String>,
        categories: Vec<String>,
        multi_label: bool,
        continuous_dims: Vec<Dim>,
        value_range: ValueRange,
    ) -> Result<Self> {
        let space = LabelSpace {
            name: name.into(),
            categories,
            multi_label,
            continuous_dims,
            value_range,
        };
        space.check()?;
        Ok(space)
    }

    fn check(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Error::Config(format!(
                "label space '{}' needs at least 2 categories",
                self.name
            )));
        }
        for (i, a) in self.categories.iter().enumerate() {
            if self.categories[..i].contains(a) {
                return Err(Error::Config(format!(
                    "label space '{}' has duplicate category '{a}'",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, name: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCategory {
                name: name.to_string(),
                space: self.name.clone(),
            })
    }

    pub fn has_dim(&self, dim: Dim) -> bool {
        self.continuous_dims.contains(&dim)
    }

    /// Index of `dim` within this space's continuous value layout.
    pub fn dim_index(&self, dim: Dim) -> Option<usize> {
        self.continuous_dims.iter().position(|d| *d == dim)
    }

    /// Looks up a preset by name: `affectnet8`, `affectnet7`, or `emotic26`.
    pub fn preset(name: &str) -> Result<LabelSpace> {
        match name {
            "affectnet8" => Ok(LabelSpace::affectnet8()),
            "affectnet7" => Ok(LabelSpace::affectnet7()),
            "emotic26" => Ok(LabelSpace::emotic26()),
            other => Err(Error::UnknownSpace(other.to_string())),
        }
    }

    /// Eight single-label expression categories with valence/arousal reals.
    pub fn affectnet8() -> LabelSpace {
        LabelSpace {
            name: "affectnet8".into(),
            categories: AFFECTNET8_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            multi_label: false,
            continuous_dims: vec![Dim::Valence, Dim::Arousal],
            value_range: ValueRange::UnitReal,
        }
    }

    /// The eight-category preset without `contempt`.
    pub fn affectnet7() -> LabelSpace {
        LabelSpace {
            name: "affectnet7".into(),
            categories: AFFECTNET8_CATEGORIES[..7].iter().map(|s| s.to_string()).collect(),
            multi_label: false,
            continuous_dims: vec![Dim::Valence, Dim::Arousal],
            value_range: ValueRange::UnitReal,
        }
    }

    /// Twenty-six multi-label categories with integer VAD annotations.
    pub fn emotic26() -> LabelSpace {
        LabelSpace {
            name: "emotic26".into(),
            categories: EMOTIC26_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            multi_label: true,
            continuous_dims: vec![Dim::Valence, Dim::Arousal, Dim::Dominance],
            value_range: ValueRange::TenInt,
        }
    }
}

const AFFECTNET8_CATEGORIES: [&str; 8] = [
    "neutral",
    "happiness",
    "sadness",
    "surprise",
    "fear",
    "disgust",
    "anger",
    "contempt",
];

const EMOTIC26_CATEGORIES: [&str; 26] = [
    "affection",
    "anger",
    "annoyance",
    "anticipation",
    "aversion",
    "confidence",
    "disapproval",
    "disconnection",
    "disquietment",
    "doubt_confusion",
    "embarrassment",
    "engagement",
    "esteem",
    "excitement",
    "fatigue",
    "fear",
    "happiness",
    "pain",
    "peace",
    "pleasure",
    "sadness",
    "sensitivity",
    "suffering",
    "surprise",
    "sympathy",
    "yearning",
];

/// One annotated instance: features plus discrete label(s) and continuous
/// values laid out in the order of the space's `continuous_dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectSample {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub continuous: Vec<f64>,
}

impl AffectSample {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, continuous: Vec<f64>) -> Self {
        AffectSample {
            features,
            labels,
            continuous,
        }
    }

    pub fn value(&self, space: &LabelSpace, dim: Dim) -> Option<f64> {
        space.dim_index(dim).map(|i| self.continuous[i])
    }
}

/// A single invariant violation found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    LabelCardinality { count: usize, expected: String },
    LabelOutOfRange { index: usize, num_classes: usize },
    DuplicateLabel { index: usize },
    ValueOutOfRange { dim: Dim, value: f64 },
    NonIntegerValue { dim: Dim, value: f64 },
    DimCount { count: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LabelCardinality { count, expected } => {
                write!(f, "{count} labels present, expected {expected}")
            }
            Violation::LabelOutOfRange { index, num_classes } => {
                write!(f, "label index {index} >= {num_classes}")
            }
            Violation::DuplicateLabel { index } => write!(f, "duplicate label index {index}"),
            Violation::ValueOutOfRange { dim, value } => {
                write!(f, "{dim} = {value} outside the declared range")
            }
            Violation::NonIntegerValue { dim, value } => {
                write!(f, "{dim} = {value} is not an integer annotation")
            }
            Violation::DimCount { count, expected } => {
                write!(f, "{count} continuous values present, expected {expected}")
            }
        }
    }
}

/// Checks every invariant and returns all violations rather than the first.
pub fn validate_sample(sample: &AffectSample, space: &LabelSpace) -> Vec<Violation> {
    let mut violations = Vec::new();
    let k = space.num_classes();

    if space.multi_label {
        if sample.labels.is_empty() {
            violations.push(Violation::LabelCardinality {
                count: 0,
                expected: "at least 1".into(),
            });
        }
    } else if sample.labels.len() != 1 {
        violations.push(Violation::LabelCardinality {
            count: sample.labels.len(),
            expected: "exactly 1".into(),
        });
    }
    for (i, &label) in sample.labels.iter().enumerate() {
        if label >= k {
            violations.push(Violation::LabelOutOfRange {
                index: label,
                num_classes: k,
            });
        }
        if sample.labels[..i].contains(&label) {
            violations.push(Violation::DuplicateLabel { index: label });
        }
    }

    if sample.continuous.len() != space.continuous_dims.len() {
        violations.push(Violation::DimCount {
            count: sample.continuous.len(),
            expected: space.continuous_dims.len(),
        });
    }
    for (dim, &value) in space.continuous_dims.iter().zip(sample.continuous.iter()) {
        if !space.value_range.contains(value) {
            violations.push(Violation::ValueOutOfRange { dim: *dim, value });
        } else if space.value_range == ValueRange::TenInt && value.fract() != 0.0 {
            violations.push(Violation::NonIntegerValue { dim: *dim, value });
        }
    }

    violations
}

/// Normalized inverse-frequency weights for the classification loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub source_counts: Vec<u64>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> ClassWeights {
        ClassWeights {
            weights: vec![1.0 / num_classes as f64; num_classes],
            source_counts: vec![1; num_classes],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// w_i = (1 / counts_i) / sum_j (1 / counts_j). Rare classes get large
/// weights; the output is a probability vector.
pub fn compute_class_weights(counts: &[u64]) -> Result<ClassWeights> {
    if let Some(index) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass {
            index,
            name: format!("class {index}"),
        });
    }
    let reciprocals: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    let total: f64 = reciprocals.iter().sum();
    Ok(ClassWeights {
        weights: reciprocals.iter().map(|r| r / total).collect(),
        source_counts: counts.to_vec(),
    })
}

/// Positive weights for the multi-label binary cross-entropy:
/// p_i = total / counts_i, the inverse relative occurrence of each label.
pub fn compute_pos_weights(counts: &[u64], total: u64) -> Result<Vec<f64>> {
    for (index, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::DegenerateClass {
                index,
                name: format!("class {index}"),
            });
        }
        if c > total {
            return Err(Error::InvalidArgument(format!(
                "count {c} for class {index} exceeds total {total}"
            )));
        }
    }
    Ok(counts.iter().map(|&c| total as f64 / c as f64).collect())
}
