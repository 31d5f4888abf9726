//! Seeded synthetic circumplex datasets.
//!
//! Each class owns a Gaussian over the continuous affect dimensions (in
//! unit [-1, 1] coordinates) and a random feature signature. Sample features
//! are `sum of class signatures + projection of the affect point + noise`,
//! so both the classification and the regression task are learnable from
//! the features alone. Generation is a pure function of (spec, split).

use crate::affect::{scale_from_unit, LabelSpace, ValueRange};
use crate::data::{FeatureSource, Manifest, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Label space reference: preset name or a full inline declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Preset(String),
    Inline(LabelSpace),
}

impl SpaceSpec {
    pub fn resolve(&self) -> Result<LabelSpace> {
        match self {
            SpaceSpec::Preset(name) => LabelSpace::preset(name),
            SpaceSpec::Inline(space) => Ok(space.clone()),
        }
    }
}

/// Gaussian over the continuous dims of one class, in unit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Mean per continuous dim, each in [-1, 1].
    pub mean: Vec<f64>,
    /// Covariance matrix (D x D, positive semi-definite).
    pub cov: Vec<Vec<f64>>,
}

fn default_signal_scale() -> f64 {
    1.0
}

fn default_affect_gain() -> f64 {
    1.0
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub space: SpaceSpec,
    /// One profile per category.
    pub class_profiles: Vec<ClassProfile>,
    /// Class priors, summing to 1.
    pub priors: Vec<f64>,
    pub feature_dim: usize,
    /// Scale of the per-sample feature noise.
    pub noise_scale: f64,
    /// Scale of each class's feature signature.
    #[serde(default = "default_signal_scale")]
    pub signal_scale: f64,
    /// Scale of the affect-to-feature projection.
    #[serde(default = "default_affect_gain")]
    pub affect_gain: f64,
    /// Multi-label mode: distribution over the number of labels per image.
    #[serde(default)]
    pub label_count_dist: Option<Vec<(usize, f64)>>,
    pub seed: u64,
    /// Which splits to emit and how many samples each.
    pub splits: Vec<(Split, usize)>,
}

impl SyntheticSpec {
    /// The default easily-separable 8-class set: the neutral category sits
    /// at the origin and the remaining seven on a ring, with tight
    /// per-class covariance; 8,000 train / 2,000 test samples.
    pub fn default_separable8(seed: u64) -> SyntheticSpec {
        let mut class_profiles = vec![ClassProfile {
            mean: vec![0.0, 0.0],
            cov: vec![vec![0.01, 0.0], vec![0.0, 0.01]],
        }];
        for i in 0..7 {
            let angle = std::f64::consts::TAU * i as f64 / 7.0;
            class_profiles.push(ClassProfile {
                mean: vec![0.7 * angle.cos(), 0.7 * angle.sin()],
                cov: vec![vec![0.01, 0.0], vec![0.0, 0.01]],
            });
        }
        SyntheticSpec {
            name: "separable8".into(),
            space: SpaceSpec::Preset("affectnet8".into()),
            class_profiles,
            priors: vec![0.125; 8],
            feature_dim: 32,
            noise_scale: 0.3,
            signal_scale: 1.0,
            affect_gain: 1.0,
            label_count_dist: None,
            seed,
            splits: vec![(Split::Train, 8000), (Split::Test, 2000)],
        }
    }
}

/// Lower-triangular Cholesky factor; tolerates semi-definite matrices by
/// zeroing degenerate pivots. Fails when the matrix is not PSD.
fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        if cov[i].len() != d {
            return Err(Error::SyntheticSpec(format!(
                "covariance row {i} has {} entries, expected {d}",
                cov[i].len()
            )));
        }
        for j in 0..=i {
            let dot: f64 = l[i][..j].iter().zip(&l[j][..j]).map(|(a, b)| a * b).sum();
            let sum = cov[i][j] - dot;
            if i == j {
                if sum < -1e-12 {
                    return Err(Error::SyntheticSpec(
                        "covariance is not positive semi-definite".into(),
                    ));
                }
                l[i][j] = sum.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = sum / l[j][j];
            } else if sum.abs() > 1e-9 {
                return Err(Error::SyntheticSpec(
                    "covariance is not positive semi-definite".into(),
                ));
            }
        }
    }
    Ok(l)
}

fn check_spec(spec: &SyntheticSpec, space: &LabelSpace) -> Result<()> {
    let k = space.num_classes();
    let d = space.continuous_dims.len();
    if spec.class_profiles.len() != k {
        return Err(Error::SyntheticSpec(format!(
            "{} class profiles for {k} categories",
            spec.class_profiles.len()
        )));
    }
    if spec.priors.len() != k {
        return Err(Error::SyntheticSpec(format!(
            "{} priors for {k} categories",
            spec.priors.len()
        )));
    }
    let prior_sum: f64 = spec.priors.iter().sum();
    if (prior_sum - 1.0).abs() > 1e-9 {
        return Err(Error::SyntheticSpec(format!(
            "priors sum to {prior_sum}, expected 1"
        )));
    }
    if spec.priors.iter().any(|&p| p < 0.0) {
        return Err(Error::SyntheticSpec("negative prior".into()));
    }
    if spec.priors.iter().all(|&p| p == 0.0) {
        return Err(Error::SyntheticSpec("zero prior mass".into()));
    }
    for (i, profile) in spec.class_profiles.iter().enumerate() {
        if profile.mean.len() != d || profile.cov.len() != d {
            return Err(Error::SyntheticSpec(format!(
                "profile {i} does not cover {d} continuous dims"
            )));
        }
        if profile.mean.iter().any(|m| !(-1.0..=1.0).contains(m)) {
            return Err(Error::SyntheticSpec(format!(
                "profile {i} mean leaves the unit range"
            )));
        }
    }
    if let Some(dist) = &spec.label_count_dist {
        if !space.multi_label {
            return Err(Error::SyntheticSpec(
                "label_count_dist requires a multi-label space".into(),
            ));
        }
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::SyntheticSpec(format!(
                "label count distribution sums to {total}, expected 1"
            )));
        }
        if dist.iter().any(|&(k_labels, _)| k_labels == 0 || k_labels > k) {
            return Err(Error::SyntheticSpec(
                "label counts must be in 1..=K".into(),
            ));
        }
    } else if space.multi_label {
        return Err(Error::SyntheticSpec(
            "multi-label space needs a label_count_dist".into(),
        ));
    }
    Ok(())
}

struct FeatureMap {
    /// One signature per class, feature_dim entries each.
    class_signatures: Vec<Vec<f64>>,
    /// Projection of the unit affect point into feature space: D rows.
    affect_projection: Vec<Vec<f64>>,
}

/// The feature map depends only on the spec seed, never on the split, so
/// all splits of one spec live in the same feature space.
fn build_feature_map(spec: &SyntheticSpec, k: usize, d: usize) -> FeatureMap {
    let mut rng = Rng::derive(spec.seed, "feature_map", 0);
    let class_signatures = (0..k)
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| spec.signal_scale * rng.normal())
                .collect()
        })
        .collect();
    let affect_projection = (0..d)
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| spec.affect_gain * rng.normal())
                .collect()
        })
        .collect();
    FeatureMap {
        class_signatures,
        affect_projection,
    }
}

/// Generates one split of the spec. Deterministic: the same (spec, split)
/// always produces a byte-identical manifest.
pub fn gen_split(spec: &SyntheticSpec, split: Split) -> Result<Manifest> {
    let space = spec.space.resolve()?;
    check_spec(spec, &space)?;
    let count = spec
        .splits
        .iter()
        .find(|(s, _)| *s == split)
        .map(|(_, n)| *n)
        .ok_or_else(|| {
            Error::SyntheticSpec(format!("spec does not declare a {split} split"))
        })?;

    let k = space.num_classes();
    let d = space.continuous_dims.len();
    let map = build_feature_map(spec, k, d);
    let factors: Vec<Vec<Vec<f64>>> = spec
        .class_profiles
        .iter()
        .map(|p| cholesky(&p.cov))
        .collect::<Result<_>>()?;

    let mut rng = Rng::derive(spec.seed, "samples", split as u64);
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        // Draw the label set.
        let labels: Vec<usize> = if let Some(dist) = &spec.label_count_dist {
            let weights: Vec<f64> = dist.iter().map(|&(_, p)| p).collect();
            let num_labels = dist[rng.weighted_index(&weights)].0;
            let mut chosen = Vec::with_capacity(num_labels);
            while chosen.len() < num_labels {
                let class = rng.weighted_index(&spec.priors);
                if !chosen.contains(&class) {
                    chosen.push(class);
                }
            }
            chosen
        } else {
            vec![rng.weighted_index(&spec.priors)]
        };

        // Continuous affect point from the primary label's Gaussian.
        let primary = labels[0];
        let profile = &spec.class_profiles[primary];
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut affect_unit = vec![0.0; d];
        for i in 0..d {
            let mut v = profile.mean[i];
            for (j, &zj) in z.iter().enumerate().take(i + 1) {
                v += factors[primary][i][j] * zj;
            }
            affect_unit[i] = v.clamp(-1.0, 1.0);
        }

        // Features: class signatures + affect projection + noise.
        let mut features = vec![0.0; spec.feature_dim];
        for &label in &labels {
            for (f, s) in features.iter_mut().zip(&map.class_signatures[label]) {
                *f += s;
            }
        }
        for (i, &a) in affect_unit.iter().enumerate() {
            for (f, p) in features.iter_mut().zip(&map.affect_projection[i]) {
                *f += a * p;
            }
        }
        for f in features.iter_mut() {
            *f += spec.noise_scale * rng.normal();
        }

        // Store continuous values in the space's own units.
        let continuous: Vec<f64> = affect_unit
            .iter()
            .map(|&v| match space.value_range {
                ValueRange::UnitReal => Ok(v),
                ValueRange::TenInt => {
                    scale_from_unit(v, ValueRange::TenInt).map(|x| x.round().clamp(1.0, 10.0))
                }
            })
            .collect::<Result<_>>()?;

        records.push(ManifestRecord {
            id: format!("{split}-{index:06}"),
            features: FeatureSource::Inline(features),
            labels,
            continuous,
        });
    }

    Ok(Manifest {
        space,
        split,
        records,
    })
}

/// Generates every split declared by the spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<Manifest>> {
    spec.splits.iter().map(|(split, _)| gen_split(spec, *split)).collect()
}
