//! Dataset ingestion: tabular manifests standing in for image datasets,
//! synthetic circumplex data generation, and the image augmentation pipeline.
//!
//! Manifest CSV layout (UTF-8, LF, header row required):
//!
//! - single-label spaces: `id,features,label,valence,arousal`
//! - multi-label spaces:  `id,features,labels,valence,arousal,dominance`
//!
//! `features` is either a `;`-separated list of numbers (inline payload,
//! may be empty) or `@<path>` referencing an external file. Labels are
//! category names; multi-label rows separate them with `|`.

pub mod augment;
pub mod synthetic;

use crate::affect::{validate_sample, AffectSample, Dim, LabelSpace};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Which split a manifest belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Feature payload: inline numbers or a reference to an external file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSource {
    Inline(Vec<f64>),
    Path(String),
}

impl FeatureSource {
    pub fn inline(&self) -> Option<&[f64]> {
        match self {
            FeatureSource::Inline(v) => Some(v),
            FeatureSource::Path(_) => None,
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub features: FeatureSource,
    pub labels: Vec<usize>,
    pub continuous: Vec<f64>,
}

impl ManifestRecord {
    pub fn to_sample(&self) -> AffectSample {
        let features = match &self.features {
            FeatureSource::Inline(v) => v.clone(),
            FeatureSource::Path(_) => Vec::new(),
        };
        AffectSample::new(features, self.labels.clone(), self.continuous.clone())
    }
}

/// A validated, in-memory split of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub space: LabelSpace,
    pub split: Split,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn samples(&self) -> Vec<AffectSample> {
        self.records.iter().map(|r| r.to_sample()).collect()
    }

    /// Column index of `dim` within each record's continuous values.
    pub fn dim_index(&self, dim: Dim) -> Option<usize> {
        self.space.dim_index(dim)
    }
}

fn expected_header(space: &LabelSpace) -> String {
    let mut columns = vec!["id", "features"];
    columns.push(if space.multi_label { "labels" } else { "label" });
    let mut header = columns.join(",");
    for dim in &space.continuous_dims {
        header.push(',');
        header.push_str(dim.name());
    }
    header
}

fn parse_features(field: &str) -> Result<FeatureSource> {
    if let Some(path) = field.strip_prefix('@') {
        return Ok(FeatureSource::Path(path.to_string()));
    }
    if field.is_empty() {
        return Ok(FeatureSource::Inline(Vec::new()));
    }
    let values: std::result::Result<Vec<f64>, _> =
        field.split(';').map(|v| v.parse::<f64>()).collect();
    values
        .map(FeatureSource::Inline)
        .map_err(|e| Error::InvalidArgument(format!("bad feature value: {e}")))
}

fn format_features(features: &FeatureSource) -> String {
    match features {
        FeatureSource::Path(p) => format!("@{p}"),
        FeatureSource::Inline(values) => values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    }
}

/// Parses, validates, and collects a manifest from CSV.
///
/// Structural problems fail immediately with the offending row index;
/// invariant violations are collected across all rows and reported together.
pub fn load_manifest(path: &Path, space: &LabelSpace, split: Split) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_manifest(&text, space, split)
}

/// [`load_manifest`] over an in-memory string.
pub fn parse_manifest(text: &str, space: &LabelSpace, split: Split) -> Result<Manifest> {
    let mut lines = text.lines().enumerate();
    let header = expected_header(space);
    match lines.next() {
        Some((_, first)) if first == header => {}
        Some((_, first)) => {
            return Err(Error::Parse {
                row: 0,
                message: format!("expected header '{header}', found '{first}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                row: 0,
                message: "empty manifest file".into(),
            })
        }
    }

    let num_columns = 3 + space.continuous_dims.len();
    let mut records = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    for (row, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != num_columns {
            return Err(Error::Parse {
                row,
                message: format!("expected {num_columns} columns, found {}", fields.len()),
            });
        }
        let id = fields[0].to_string();
        let features = parse_features(fields[1]).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let label_field = fields[2];
        let mut labels = Vec::new();
        for name in label_field.split('|') {
            if name.is_empty() {
                continue;
            }
            match space.category_index(name) {
                Ok(index) => labels.push(index),
                Err(e) => {
                    return Err(Error::Parse {
                        row,
                        message: e.to_string(),
                    })
                }
            }
        }
        let mut continuous = Vec::with_capacity(space.continuous_dims.len());
        for (i, field) in fields[3..].iter().enumerate() {
            let value: f64 = field.parse().map_err(|e| Error::Parse {
                row,
                message: format!("bad {} value '{field}': {e}", space.continuous_dims[i]),
            })?;
            continuous.push(value);
        }
        let record = ManifestRecord {
            id,
            features,
            labels,
            continuous,
        };
        for violation in validate_sample(&record.to_sample(), space) {
            violations.push(format!("row {row}: {violation}"));
        }
        records.push(record);
    }

    // Duplicate ids within a split are a validation problem, not a parse one.
    let mut seen = std::collections::BTreeSet::new();
    for (i, record) in records.iter().enumerate() {
        if !seen.insert(record.id.clone()) {
            violations.push(format!("row {}: duplicate id '{}'", i + 1, record.id));
        }
    }

    if !violations.is_empty() {
        return Err(Error::Validation {
            count: violations.len(),
            details: violations.join("\n"),
        });
    }
    Ok(Manifest {
        space: space.clone(),
        split,
        records,
    })
}

/// Serializes a manifest back to its CSV form.
pub fn manifest_to_csv(manifest: &Manifest) -> String {
    let mut out = expected_header(&manifest.space);
    out.push('\n');
    for record in &manifest.records {
        let labels = record
            .labels
            .iter()
            .map(|&l| manifest.space.categories[l].as_str())
            .collect::<Vec<_>>()
            .join("|");
        out.push_str(&record.id);
        out.push(',');
        out.push_str(&format_features(&record.features));
        out.push(',');
        out.push_str(&labels);
        for value in &record.continuous {
            out.push(',');
            out.push_str(&value.to_string());
        }
        out.push('\n');
    }
    out
}

/// Writes a manifest as CSV.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest_to_csv(manifest))
        .map_err(|e| Error::io(path.display().to_string(), e))
}
