//! Dataset-distribution statistics emitted as machine-readable plot data.
//!
//! Everything here is pure aggregation over sample slices; reports are
//! deterministic (ordered vectors, no hash maps) so identical inputs
//! serialize to identical bytes.

use crate::affect::{AffectSample, Dim, LabelSpace};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Category counts with relative frequencies reported both per label
/// occurrence and per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryHistogram {
    pub counts: Vec<u64>,
    /// count / total label occurrences.
    pub freq_per_occurrence: Vec<f64>,
    /// count / number of images; equals the occurrence frequency for
    /// single-label spaces.
    pub freq_per_image: Vec<f64>,
}

/// Five-number summary of one continuous dimension within one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Per-category box statistics for each continuous dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaStatistics {
    /// (category, dim, summary); categories with zero samples are omitted
    /// and listed in `warnings` instead.
    pub per_category: Vec<(String, Dim, FiveNumber)>,
    pub warnings: Vec<String>,
}

/// Machine-readable counterpart of the dataset study plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub split_name: String,
    pub label_space: String,
    pub num_samples: usize,
    pub categories: Vec<String>,
    pub category_histogram: CategoryHistogram,
    pub va_stats: VaStatistics,
    /// Multi-label spaces only: count of images carrying exactly k labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_per_image: Option<Vec<(usize, u64)>>,
    /// Equal-width binned counts per continuous dimension.
    pub value_histograms: Vec<(Dim, ValueHistogram)>,
}

/// Counts of category occurrences plus both relative-frequency views.
pub fn category_histogram(samples: &[AffectSample], space: &LabelSpace) -> Result<CategoryHistogram> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("category_histogram".into()));
    }
    let k = space.num_classes();
    let mut counts = vec![0u64; k];
    let mut occurrences = 0u64;
    for sample in samples {
        for &label in &sample.labels {
            if label >= k {
                return Err(Error::Label {
                    index: label,
                    num_classes: k,
                });
            }
            counts[label] += 1;
            occurrences += 1;
        }
    }
    let images = samples.len() as f64;
    Ok(CategoryHistogram {
        freq_per_occurrence: counts.iter().map(|&c| c as f64 / occurrences as f64).collect(),
        freq_per_image: counts.iter().map(|&c| c as f64 / images).collect(),
        counts,
    })
}

/// Linear-interpolation quantile between order statistics (inclusive rule).
/// `sorted` must be non-empty and ascending.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let position = p * (n - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let weight = position - lower as f64;
    sorted[lower] * (1.0 - weight) + sorted[upper] * weight
}

fn five_number(sorted: &[f64]) -> FiveNumber {
    FiveNumber {
        min: sorted[0],
        q1: quantile(sorted, 0.25),
        median: quantile(sorted, 0.5),
        q3: quantile(sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

/// Per-category five-number summaries for every continuous dimension.
/// Multi-label samples contribute to every category they carry.
pub fn va_statistics(samples: &[AffectSample], space: &LabelSpace) -> Result<VaStatistics> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("va_statistics".into()));
    }
    let mut per_category = Vec::new();
    let mut warnings = Vec::new();
    for (class, name) in space.categories.iter().enumerate() {
        let members: Vec<&AffectSample> = samples
            .iter()
            .filter(|s| s.labels.contains(&class))
            .collect();
        if members.is_empty() {
            warnings.push(format!("category '{name}' has no samples; omitted"));
            continue;
        }
        for (j, dim) in space.continuous_dims.iter().enumerate() {
            let mut values: Vec<f64> = members.iter().map(|s| s.continuous[j]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite annotation values"));
            per_category.push((name.clone(), *dim, five_number(&values)));
        }
    }
    Ok(VaStatistics {
        per_category,
        warnings,
    })
}

/// Raw (category, valence, arousal) triples for scatter export, capped at
/// `max_points` samples in dataset order.
pub fn scatter_points(
    samples: &[AffectSample],
    space: &LabelSpace,
    max_points: usize,
) -> Result<Vec<(String, f64, f64)>> {
    let vi = space
        .dim_index(Dim::Valence)
        .ok_or_else(|| Error::UnknownDim("valence".into()))?;
    let ai = space
        .dim_index(Dim::Arousal)
        .ok_or_else(|| Error::UnknownDim("arousal".into()))?;
    Ok(samples
        .iter()
        .take(max_points)
        .flat_map(|s| {
            s.labels.iter().map(move |&l| {
                (
                    space.categories[l].clone(),
                    s.continuous[vi],
                    s.continuous[ai],
                )
            })
        })
        .collect())
}

/// Counts of images carrying exactly k true labels (k >= 1).
pub fn labels_per_image_histogram(
    samples: &[AffectSample],
    space: &LabelSpace,
) -> Result<Vec<(usize, u64)>> {
    if !space.multi_label {
        return Err(Error::UnsupportedSpace {
            space: space.name.clone(),
            required: "multi-label".into(),
            actual: "single-label".into(),
        });
    }
    let max_k = samples.iter().map(|s| s.labels.len()).max().unwrap_or(0);
    let mut counts = vec![0u64; max_k + 1];
    for sample in samples {
        counts[sample.labels.len()] += 1;
    }
    Ok((1..=max_k).map(|k| (k, counts[k])).collect())
}

/// Equal-width binned counts of one continuous dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueHistogram {
    /// (bin_lo, bin_hi, count). Each value lands in the lowest bin whose
    /// upper edge is at or above it; the bottom bin is closed at both ends,
    /// so no sample at either range endpoint is lost.
    pub bins: Vec<(f64, f64, u64)>,
    pub warnings: Vec<String>,
}

/// Bins values of `dim` into `num_bins` equal-width bins over the space's
/// declared range.
pub fn value_histogram(
    samples: &[AffectSample],
    space: &LabelSpace,
    dim: Dim,
    num_bins: usize,
) -> Result<ValueHistogram> {
    if num_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {num_bins}"
        )));
    }
    let dim_index = space
        .dim_index(dim)
        .ok_or_else(|| Error::UnknownDim(dim.name().into()))?;
    let (lo, hi) = space.value_range.bounds();
    let width = (hi - lo) / num_bins as f64;
    let mut counts = vec![0u64; num_bins];
    let mut seen = 0u64;
    for sample in samples {
        let value = sample.continuous[dim_index];
        // Boundary values go to the bin of lower values.
        let mut bin = ((value - lo) / width).ceil() as i64 - 1;
        bin = bin.clamp(0, num_bins as i64 - 1);
        counts[bin as usize] += 1;
        seen += 1;
    }
    let mut warnings = Vec::new();
    if seen == 0 {
        warnings.push(format!("no values for dimension {dim}; all bins zero"));
    }
    Ok(ValueHistogram {
        bins: counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
            .collect(),
        warnings,
    })
}

/// Assembles the full distribution report for one split.
pub fn distribution_report(
    samples: &[AffectSample],
    space: &LabelSpace,
    split_name: &str,
    histogram_bins: usize,
) -> Result<DistributionReport> {
    let category_histogram = category_histogram(samples, space)?;
    let va_stats = va_statistics(samples, space)?;
    let labels_per_image = if space.multi_label {
        Some(labels_per_image_histogram(samples, space)?)
    } else {
        None
    };
    let mut value_histograms = Vec::new();
    for dim in &space.continuous_dims {
        value_histograms.push((*dim, value_histogram(samples, space, *dim, histogram_bins)?));
    }
    Ok(DistributionReport {
        split_name: split_name.to_string(),
        label_space: space.name.clone(),
        num_samples: samples.len(),
        categories: space.categories.clone(),
        category_histogram,
        va_stats,
        labels_per_image,
        value_histograms,
    })
}

/// Scatter export CSV: category,valence,arousal.
pub fn scatter_to_csv(points: &[(String, f64, f64)]) -> String {
    let mut out = String::from("category,valence,arousal\n");
    for (category, v, a) in points {
        out.push_str(&format!("{category},{v},{a}\n"));
    }
    out
}

/// Histogram export CSV: bin_lo,bin_hi,count.
pub fn histogram_to_csv(histogram: &ValueHistogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, count) in &histogram.bins {
        out.push_str(&format!("{lo},{hi},{count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::ValueRange;

    fn single_label_space() -> LabelSpace {
        LabelSpace::affectnet8()
    }

    fn sample(label: usize, v: f64, a: f64) -> AffectSample {
        AffectSample::new(vec![], vec![label], vec![v, a])
    }

    fn multi_space() -> LabelSpace {
        LabelSpace::new(
            "multi",
            vec!["a".into(), "b".into(), "c".into()],
            true,
            vec![Dim::Valence],
            ValueRange::UnitReal,
        )
        .unwrap()
    }

    #[test]
    fn histogram_single_label_frequencies() {
        let samples = vec![sample(0, 0.0, 0.0), sample(0, 0.1, 0.0), sample(1, 0.2, 0.0)];
        let h = category_histogram(&samples, &single_label_space()).unwrap();
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert!((h.freq_per_occurrence[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(h.freq_per_occurrence, h.freq_per_image);
    }

    #[test]
    fn histogram_multi_label_counts_both_ways() {
        let space = multi_space();
        let samples = vec![
            AffectSample::new(vec![], vec![0, 1], vec![0.0]),
            AffectSample::new(vec![], vec![0], vec![0.0]),
        ];
        let h = category_histogram(&samples, &space).unwrap();
        assert_eq!(h.freq_per_image[0], 1.0);
        assert_eq!(h.freq_per_image[1], 0.5);
        assert!((h.freq_per_occurrence[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_rejects_empty_input() {
        assert!(matches!(
            category_histogram(&[], &single_label_space()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn histogram_counts_sum_to_entities() {
        let samples = vec![sample(0, 0.0, 0.0), sample(3, 0.0, 0.0), sample(3, 0.0, 0.0)];
        let h = category_histogram(&samples, &single_label_space()).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
    }

    #[test]
    fn va_single_sample_collapses_summary() {
        let samples = vec![sample(0, 0.2, 0.2)];
        let stats = va_statistics(&samples, &single_label_space()).unwrap();
        let (_, _, summary) = &stats.per_category[0];
        assert_eq!(summary.min, 0.2);
        assert_eq!(summary.q1, 0.2);
        assert_eq!(summary.median, 0.2);
        assert_eq!(summary.q3, 0.2);
        assert_eq!(summary.max, 0.2);
        assert!(!stats.warnings.is_empty());
    }

    #[test]
    fn va_quartiles_by_interpolation_rule() {
        // Values 1..5 in a TenInt space: q1 = 2, median = 3, q3 = 4.
        let space = LabelSpace::new(
            "ten",
            vec!["a".into(), "b".into()],
            false,
            vec![Dim::Valence],
            ValueRange::TenInt,
        )
        .unwrap();
        let samples: Vec<AffectSample> = (1..=5)
            .map(|v| AffectSample::new(vec![], vec![0], vec![v as f64]))
            .collect();
        let stats = va_statistics(&samples, &space).unwrap();
        let (_, _, summary) = &stats.per_category[0];
        assert_eq!(summary.q1, 2.0);
        assert_eq!(summary.median, 3.0);
        assert_eq!(summary.q3, 4.0);
        assert_eq!(summary.min, 1.0);
        assert_eq!(summary.max, 5.0);
    }

    #[test]
    fn labels_per_image_counts() {
        let space = multi_space();
        let samples = vec![
            AffectSample::new(vec![], vec![0], vec![0.0]),
            AffectSample::new(vec![], vec![0, 1], vec![0.0]),
            AffectSample::new(vec![], vec![0, 1, 2], vec![0.0]),
        ];
        let h = labels_per_image_histogram(&samples, &space).unwrap();
        assert_eq!(h, vec![(1, 1), (2, 1), (3, 1)]);
    }

    #[test]
    fn labels_per_image_all_singletons() {
        let space = multi_space();
        let samples: Vec<AffectSample> = (0..5)
            .map(|_| AffectSample::new(vec![], vec![1], vec![0.0]))
            .collect();
        let h = labels_per_image_histogram(&samples, &space).unwrap();
        assert_eq!(h, vec![(1, 5)]);
    }

    #[test]
    fn labels_per_image_requires_multi_label() {
        let samples = vec![sample(0, 0.0, 0.0)];
        assert!(matches!(
            labels_per_image_histogram(&samples, &single_label_space()),
            Err(Error::UnsupportedSpace { .. })
        ));
    }

    #[test]
    fn value_histogram_boundary_goes_to_lower_bin() {
        let samples = vec![sample(0, -1.0, 0.0), sample(0, 0.0, 0.0), sample(0, 1.0, 0.0)];
        let h = value_histogram(&samples, &single_label_space(), Dim::Valence, 2).unwrap();
        let counts: Vec<u64> = h.bins.iter().map(|b| b.2).collect();
        assert_eq!(counts, vec![2, 1]);
    }

    #[test]
    fn value_histogram_counts_sum_exactly() {
        let samples: Vec<AffectSample> = (0..37)
            .map(|i| sample(0, -1.0 + 2.0 * (i as f64 / 36.0), 0.0))
            .collect();
        let h = value_histogram(&samples, &single_label_space(), Dim::Valence, 10).unwrap();
        assert_eq!(h.bins.iter().map(|b| b.2).sum::<u64>(), 37);
    }

    #[test]
    fn value_histogram_uniform_values_fill_bins_evenly() {
        let mut rng = crate::rng::Rng::new(77);
        let samples: Vec<AffectSample> = (0..10_000)
            .map(|_| sample(0, rng.uniform_in(-1.0, 1.0), 0.0))
            .collect();
        let h = value_histogram(&samples, &single_label_space(), Dim::Valence, 10).unwrap();
        for &(lo, hi, count) in &h.bins {
            assert!(
                (count as i64 - 1000).abs() <= 100,
                "bin [{lo}, {hi}] holds {count}"
            );
        }
    }

    #[test]
    fn value_histogram_empty_input_warns() {
        let h = value_histogram(&[], &single_label_space(), Dim::Valence, 4).unwrap();
        assert!(h.bins.iter().all(|b| b.2 == 0));
        assert!(!h.warnings.is_empty());
    }

    #[test]
    fn value_histogram_unknown_dim_rejected() {
        let samples = vec![sample(0, 0.0, 0.0)];
        assert!(matches!(
            value_histogram(&samples, &single_label_space(), Dim::Dominance, 4),
            Err(Error::UnknownDim(_))
        ));
    }

    #[test]
    fn report_is_deterministic() {
        let samples = vec![sample(0, 0.3, -0.2), sample(4, -0.6, 0.9), sample(2, 0.0, 0.0)];
        let space = single_label_space();
        let a = distribution_report(&samples, &space, "train", 4).unwrap();
        let b = distribution_report(&samples, &space, "train", 4).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn scatter_csv_header() {
        let points = vec![("neutral".to_string(), 0.1, -0.2)];
        let csv = scatter_to_csv(&points);
        assert!(csv.starts_with("category,valence,arousal\n"));
        assert!(csv.contains("neutral,0.1,-0.2"));
    }
}
