//! Counterfactual-distance OOD score.
//!
//! For an embedding `z` predicted as class `p`, the score averages the
//! Euclidean distance from `z` to a counterfactual of every other class and
//! divides by `‖z − μ_train‖`:
//!
//! ```text
//! score(z) = (Σ_{y ≠ p} ‖CF(z, y) − z‖ / |targets|) / ‖z − μ_train‖
//! ```
//!
//! Larger scores mean the input sits further from the decision boundaries,
//! i.e. more in-distribution. Turning `average` and `normalize` off yields
//! the plain accumulated distance. Feeding raw inputs instead of embeddings
//! gives the input-space variant of the same measure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counterfactual::{counterfactual, Method};
use crate::dataset::FeatureDataset;
use crate::distance::squared_distance;
use crate::error::{Error, Result};
use crate::head::LinearHead;
use crate::index::ClassIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub method: Method,
    /// Number of target classes; `None` means all `C − 1`.
    pub k_classes: Option<usize>,
    /// Divide by the distance to the training mean.
    pub normalize: bool,
    /// Divide by the number of counterfactuals computed.
    pub average: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            method: Method::Nnce,
            k_classes: None,
            normalize: true,
            average: true,
        }
    }
}

impl ScoreConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Plain accumulated distance: no averaging, no normalisation.
    pub fn raw(method: Method) -> Self {
        Self {
            method,
            k_classes: None,
            normalize: false,
            average: false,
        }
    }
}

/// Mean training feature vector, over every training row (unfiltered).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStatistics {
    pub mu_train: Vec<f64>,
}

impl TrainStatistics {
    pub fn dim(&self) -> usize {
        self.mu_train.len()
    }

    /// `‖z − μ_train‖`.
    pub fn normalizer(&self, z: &[f64]) -> Result<f64> {
        crate::distance::get_distance(z, &self.mu_train)
    }
}

pub fn compute_mu_train(ds: &FeatureDataset) -> TrainStatistics {
    let mut sum = vec![0.0f64; ds.dim()];
    for i in 0..ds.rows() {
        for (s, &v) in sum.iter_mut().zip(ds.row(i)) {
            *s += v as f64;
        }
    }
    let n = ds.rows() as f64;
    TrainStatistics {
        mu_train: sum.into_iter().map(|s| s / n).collect(),
    }
}

/// Score of one input plus the distances that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInput {
    pub predicted_class: usize,
    pub score: f64,
    pub per_class_distances: BTreeMap<usize, f64>,
    pub normalizer: f64,
    /// Target classes skipped because the index holds no rows for them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_classes: Vec<usize>,
}

/// The `k` non-predicted classes with the highest logits, descending, ties
/// to the lowest class. With `k = C − 1` every other class is returned in
/// ascending order and logits are not consulted.
pub fn select_target_classes(
    logits: Option<&[f64]>,
    predicted: usize,
    k: usize,
    classes: usize,
) -> Result<Vec<usize>> {
    if classes < 2 || predicted >= classes {
        return Err(Error::Invalid(format!(
            "predicted class {predicted} with {classes} classes"
        )));
    }
    if k == 0 || k > classes - 1 {
        return Err(Error::Invalid(format!(
            "k_classes must lie in 1..={}, got {k}",
            classes - 1
        )));
    }
    if k == classes - 1 {
        return Ok((0..classes).filter(|&c| c != predicted).collect());
    }
    let logits = logits.ok_or(Error::MissingLogits { k, classes })?;
    if logits.len() != classes {
        return Err(Error::DimensionMismatch(format!(
            "{} logits for {classes} classes",
            logits.len()
        )));
    }
    let mut others: Vec<usize> = (0..classes).filter(|&c| c != predicted).collect();
    others.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    others.truncate(k);
    Ok(others)
}

fn check_inputs(idx: &ClassIndex, head: &LinearHead, stats: &TrainStatistics, z: &[f64]) -> Result<()> {
    let d = z.len();
    if idx.dim() != d || head.dim() != d || stats.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "query length {d}, index {}, head {}, mean {}",
            idx.dim(),
            head.dim(),
            stats.dim()
        )));
    }
    if head.classes() != idx.classes() {
        return Err(Error::DimensionMismatch(format!(
            "head has {} classes, index has {}",
            head.classes(),
            idx.classes()
        )));
    }
    Ok(())
}

/// Scores `z` against an explicit list of target classes. Distances are
/// accumulated in ascending class order whatever order `targets` arrives in.
pub fn score_with_targets(
    idx: &ClassIndex,
    head: &LinearHead,
    stats: &TrainStatistics,
    z: &[f64],
    targets: &[usize],
    cfg: &ScoreConfig,
) -> Result<ScoredInput> {
    check_inputs(idx, head, stats, z)?;
    let predicted = head.predict_unchecked(z);
    let normalizer = squared_distance(z, &stats.mu_train).sqrt();
    if cfg.normalize && normalizer == 0.0 {
        return Err(Error::Degenerate(
            "input coincides with the training mean; the normaliser is zero".into(),
        ));
    }
    let mut order: Vec<usize> = targets.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut per_class_distances = BTreeMap::new();
    let mut skipped_classes = Vec::new();
    for &t in &order {
        if t == predicted || t >= idx.classes() {
            return Err(Error::Invalid(format!(
                "target class {t} is the predicted class or out of range"
            )));
        }
        if idx.class_len(t) == 0 {
            skipped_classes.push(t);
            continue;
        }
        let cf = counterfactual(cfg.method, idx, head, z, t)?;
        per_class_distances.insert(t, cf.distance);
    }
    if per_class_distances.is_empty() {
        return Err(Error::NoTargets);
    }
    if !skipped_classes.is_empty() {
        log::warn!("skipped empty target classes {skipped_classes:?}");
    }
    let mut score = 0.0;
    for d in per_class_distances.values() {
        score += d;
    }
    if cfg.average {
        score /= per_class_distances.len() as f64;
    }
    if cfg.normalize {
        score /= normalizer;
    }
    Ok(ScoredInput {
        predicted_class: predicted,
        score,
        per_class_distances,
        normalizer,
        skipped_classes,
    })
}

/// Scores a single input. `logits` are only consulted for a top-k run; when
/// absent the head's own logits are used.
pub fn score_input(
    idx: &ClassIndex,
    head: &LinearHead,
    stats: &TrainStatistics,
    z: &[f64],
    logits: Option<&[f64]>,
    cfg: &ScoreConfig,
) -> Result<ScoredInput> {
    check_inputs(idx, head, stats, z)?;
    let classes = head.classes();
    let predicted = head.predict_unchecked(z);
    let k = cfg.k_classes.unwrap_or(classes - 1);
    let targets = if k == classes - 1 {
        select_target_classes(None, predicted, k, classes)?
    } else {
        match logits {
            Some(l) => select_target_classes(Some(l), predicted, k, classes)?,
            None => {
                let own = head.logits_unchecked(z);
                select_target_classes(Some(&own), predicted, k, classes)?
            }
        }
    };
    score_with_targets(idx, head, stats, z, &targets, cfg)
}

/// Everything needed to score inputs, bundled.
#[derive(Debug, Clone)]
pub struct Detector {
    pub index: ClassIndex,
    pub head: LinearHead,
    pub stats: TrainStatistics,
    pub config: ScoreConfig,
}

impl Detector {
    /// Builds the index and training mean from a training set.
    pub fn fit(train: &FeatureDataset, head: LinearHead, filter_misclassified: bool, config: ScoreConfig) -> Result<Self> {
        let index = ClassIndex::build(train, Some(&head), filter_misclassified)?;
        Ok(Self {
            index,
            head,
            stats: compute_mu_train(train),
            config,
        })
    }

    pub fn score(&self, z: &[f64], logits: Option<&[f64]>) -> Result<ScoredInput> {
        score_input(&self.index, &self.head, &self.stats, z, logits, &self.config)
    }

    pub fn score_batch(&self, ds: &FeatureDataset, threads: Option<usize>) -> Result<Vec<ScoredInput>> {
        score_batch(ds, &self.index, &self.head, &self.stats, &self.config, threads)
    }
}

fn score_row(
    ds: &FeatureDataset,
    i: usize,
    idx: &ClassIndex,
    head: &LinearHead,
    stats: &TrainStatistics,
    cfg: &ScoreConfig,
) -> Result<ScoredInput> {
    let z = ds.row_f64(i);
    let logits: Option<Vec<f64>> = ds.logits_row(i).map(|l| l.iter().map(|&v| v as f64).collect());
    score_input(idx, head, stats, &z, logits.as_deref(), cfg).map_err(|e| e.at_row(i))
}

/// Scores every row of `ds`, in row order. `threads = None` uses the global
/// rayon pool; `Some(1)` runs serially. Output never depends on the thread
/// count. The first failing row (lowest index) is reported.
pub fn score_batch(
    ds: &FeatureDataset,
    idx: &ClassIndex,
    head: &LinearHead,
    stats: &TrainStatistics,
    cfg: &ScoreConfig,
    threads: Option<usize>,
) -> Result<Vec<ScoredInput>> {
    if ds.dim() != idx.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test dimension {} differs from training dimension {}",
            ds.dim(),
            idx.dim()
        )));
    }
    let run = || -> Vec<Result<ScoredInput>> {
        (0..ds.rows())
            .into_par_iter()
            .map(|i| score_row(ds, i, idx, head, stats, cfg))
            .collect()
    };
    let results = match threads {
        Some(1) => (0..ds.rows())
            .map(|i| score_row(ds, i, idx, head, stats, cfg))
            .collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}
