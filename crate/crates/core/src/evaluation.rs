//! Baseline detectors and detection metrics.
//!
//! All scores follow one orientation: higher means more in-distribution,
//! and an input is accepted as ID when `score >= tau`.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::distance::squared_distance;
use crate::error::{Error, Result};
use crate::head::LinearHead;
use crate::index::ClassIndex;
use crate::scorer::TrainStatistics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Id,
    Ood,
}

pub fn classify(score: f64, tau: f64) -> Verdict {
    if score >= tau {
        Verdict::Id
    } else {
        Verdict::Ood
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", values[i]))),
        None => Ok(()),
    }
}

/// Maximum softmax probability.
pub fn msp_score(logits: &[f64]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Invalid("msp needs at least two logits".into()));
    }
    check_finite(logits, "logits")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    Ok(1.0 / denom)
}

/// Negative free energy, `T * log Σ exp(l / T)`.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Invalid(format!("temperature must be positive, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(Error::Invalid("energy needs at least one logit".into()));
    }
    check_finite(logits, "logits")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) / temperature;
    let sum: f64 = logits.iter().map(|&l| (l / temperature - max).exp()).sum();
    Ok(temperature * (max + sum.ln()))
}

fn unit(z: &[f64]) -> Vec<f64> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        z.iter().map(|v| v / norm).collect()
    } else {
        z.to_vec()
    }
}

/// Negative distance to the `k`-th nearest training row, on unit-normalised
/// features. `idx` must have been built from a unit-normalised dataset
/// (see [`KnnBaseline`]); `z` is normalised here.
pub fn knn_score(idx: &ClassIndex, z: &[f64], k: usize) -> Result<f64> {
    Ok(-idx.kth_nearest_global(&unit(z), k)?.sqrt())
}

/// KNN baseline over unit-normalised training features, every row included.
#[derive(Debug, Clone)]
pub struct KnnBaseline {
    index: ClassIndex,
    pub k: usize,
}

impl KnnBaseline {
    pub const DEFAULT_K: usize = 50;

    pub fn fit(train: &FeatureDataset, k: usize) -> Result<Self> {
        let index = ClassIndex::build(&train.unit_normalized(), None, false)?;
        if k == 0 || k > index.len() {
            return Err(Error::KTooLarge { k, rows: index.len() });
        }
        Ok(Self { index, k })
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        knn_score(&self.index, z, self.k)
    }
}

/// Mean closed-form distance to the boundary between the predicted class
/// and every other class of a linear head, divided by `‖z − μ_train‖`.
/// Class pairs with identical weight rows have no boundary and are skipped.
pub fn fdbd_score(head: &LinearHead, stats: &TrainStatistics, z: &[f64]) -> Result<f64> {
    if z.len() != head.dim() || stats.dim() != head.dim() {
        return Err(Error::DimensionMismatch(format!(
            "query length {}, head {}, mean {}",
            z.len(),
            head.dim(),
            stats.dim()
        )));
    }
    let normalizer = squared_distance(z, &stats.mu_train).sqrt();
    if normalizer == 0.0 {
        return Err(Error::Degenerate(
            "input coincides with the training mean; the normaliser is zero".into(),
        ));
    }
    let pred = head.predict_unchecked(z);
    let wp = head.weight_row(pred);
    let bp = head.bias()[pred] as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut skipped = Vec::new();
    for c in (0..head.classes()).filter(|&c| c != pred) {
        let wc = head.weight_row(c);
        let mut dot = bp - head.bias()[c] as f64;
        let mut norm2 = 0.0;
        for ((&a, &b), &x) in wp.iter().zip(wc).zip(z) {
            let dw = a as f64 - b as f64;
            dot += dw * x;
            norm2 += dw * dw;
        }
        if norm2 == 0.0 {
            skipped.push(c);
            continue;
        }
        total += dot.abs() / norm2.sqrt();
        count += 1;
    }
    if !skipped.is_empty() {
        log::warn!("fdbd: classes {skipped:?} share the predicted class's weights; skipped");
    }
    if count == 0 {
        return Err(Error::NoTargets);
    }
    Ok(total / count as f64 / normalizer)
}

/// Area under the ROC curve with ID as the positive class: the fraction of
/// (id, ood) pairs where the ID score is larger, ties counting one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() {
        return Err(Error::EmptyScores("id"));
    }
    if ood_scores.is_empty() {
        return Err(Error::EmptyScores("ood"));
    }
    check_finite(id_scores, "id")?;
    check_finite(ood_scores, "ood")?;
    let mut ood = ood_scores.to_vec();
    ood.sort_by(f64::total_cmp);
    // doubled counts stay integral: 2 * wins + ties
    let mut twice: u128 = 0;
    for &s in id_scores {
        let below = ood.partition_point(|&o| o < s);
        let not_above = ood.partition_point(|&o| o <= s);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = id_scores.len() as u128 * ood.len() as u128;
    Ok(twice as f64 / (2 * pairs) as f64)
}

/// False-positive rate at 95% true-positive rate.
///
/// `tau` is the largest attained ID score for which at least 95% of ID
/// scores satisfy `score >= tau`; the FPR is the fraction of OOD scores that
/// also satisfy it. Returns `(fpr95, tau)`.
pub fn fpr_at_95_tpr(id_scores: &[f64], ood_scores: &[f64]) -> Result<(f64, f64)> {
    if id_scores.is_empty() {
        return Err(Error::EmptyScores("id"));
    }
    if ood_scores.is_empty() {
        return Err(Error::EmptyScores("ood"));
    }
    check_finite(id_scores, "id")?;
    check_finite(ood_scores, "ood")?;
    let mut id = id_scores.to_vec();
    id.sort_by(f64::total_cmp);
    let n = id.len();
    let required = (95 * n).div_ceil(100);
    let tau = id[n - required];
    let accepted = ood_scores.iter().filter(|&&s| s >= tau).count();
    Ok((accepted as f64 / ood_scores.len() as f64, tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub fpr95: f64,
    pub threshold_tau: f64,
    pub id_count: usize,
    pub ood_count: usize,
}

pub fn detection_metrics(id_scores: &[f64], ood_scores: &[f64]) -> Result<DetectionMetrics> {
    let auroc = auroc(id_scores, ood_scores)?;
    let (fpr95, threshold_tau) = fpr_at_95_tpr(id_scores, ood_scores)?;
    Ok(DetectionMetrics {
        auroc,
        fpr95,
        threshold_tau,
        id_count: id_scores.len(),
        ood_count: ood_scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msp_values() {
        assert!((msp_score(&[0.0, 0.0, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((msp_score(&[100.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let e = [1f64.exp(), 2f64.exp(), 3f64.exp()];
        let expected = e[2] / (e[0] + e[1] + e[2]);
        assert!((msp_score(&[1.0, 2.0, 3.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.66524).abs() < 1e-5);
        assert!(msp_score(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn energy_values() {
        assert!((energy_score(&[0.0, 0.0], 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((energy_score(&[1000.0, 0.0, -5.0], 1.0).unwrap() - 1000.0).abs() < 1e-12);
        assert!(energy_score(&[1.0], 0.0).is_err());
        assert!(energy_score(&[f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[3.0, 4.0, 5.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[], &[1.0]), Err(Error::EmptyScores("id"))));
        assert!(matches!(auroc(&[1.0], &[]), Err(Error::EmptyScores("ood"))));
    }

    #[test]
    fn fpr95_sweep_example() {
        let id: Vec<f64> = (1..=100).map(f64::from).collect();
        let (fpr, tau) = fpr_at_95_tpr(&id, &[5.5, 6.0, 7.0, 100.0]).unwrap();
        assert_eq!(tau, 6.0);
        assert_eq!(fpr, 0.75);
        let (fpr, _) = fpr_at_95_tpr(&id, &[0.0, -1.0]).unwrap();
        assert_eq!(fpr, 0.0);
        let (fpr, _) = fpr_at_95_tpr(&id, &id).unwrap();
        assert!(fpr >= 0.95);
    }

    #[test]
    fn classify_boundary() {
        assert_eq!(classify(1.0, 1.0), Verdict::Id);
        assert_eq!(classify(1.0 - 1e-12, 1.0), Verdict::Ood);
    }

    #[test]
    fn fdbd_hand_case() {
        let head = LinearHead::new(vec![1.0, 0.0, -1.0, 0.0], vec![0.0, 0.0], 2).unwrap();
        let stats = TrainStatistics { mu_train: vec![0.0, 1.0] };
        let s = fdbd_score(&head, &stats, &[1.0, 0.0]).unwrap();
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // on the boundary
        assert_eq!(fdbd_score(&head, &stats, &[0.0, 3.0]).unwrap(), 0.0);
        let at_mean = TrainStatistics { mu_train: vec![1.0, 0.0] };
        assert!(matches!(fdbd_score(&head, &at_mean, &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fdbd_skips_coincident_rows() {
        let head = LinearHead::new(vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0], vec![0.0, 0.0, 0.0], 2).unwrap();
        let stats = TrainStatistics { mu_train: vec![0.0, 1.0] };
        // class 1 duplicates class 0, so only the class-2 boundary counts
        let s = fdbd_score(&head, &stats, &[1.0, 0.0]).unwrap();
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn knn_baseline() {
        let ds = FeatureDataset::new(vec![1.0, 0.0, 0.0, 2.0, -3.0, 0.0], 2, vec![0, 1, 0], 2, None, None).unwrap();
        let knn = KnnBaseline::fit(&ds, 1).unwrap();
        assert_eq!(knn.score(&[5.0, 0.0]).unwrap(), 0.0);
        let near = knn.score(&[1.0, 0.1]).unwrap();
        let far = knn.score(&[1.0, 1.0]).unwrap();
        assert!(far < near);
        assert!(KnnBaseline::fit(&ds, 4).is_err());
    }
}
