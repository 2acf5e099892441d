//! Seeded Gaussian-cluster benchmark.
//!
//! `C` isotropic clusters (standard deviation `sigma`) whose means are
//! pairwise `separation * sigma` apart where the geometry allows it:
//!
//! * `d >= c`: means on scaled coordinate axes (a regular simplex);
//! * `2 <= d < c`: means on a regular polygon in the first two coordinates,
//!   neighbouring means `separation * sigma` apart;
//! * `d == 1`: means on a line.
//!
//! OOD points come in two flavours: midpoints between two cluster means with
//! a little jitter (right on a decision boundary), and far-field points on a
//! shell well outside every cluster. The head is the least-squares fit of
//! one-hot targets on the training features.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::head::LinearHead;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_count: usize,
    pub ood_mid_count: usize,
    pub ood_far_count: usize,
    /// Distance between neighbouring cluster means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    /// Standard deviation of the midpoint jitter, in units of `sigma`.
    pub jitter: f64,
    /// Far-field shell radius as a multiple of the largest mean norm.
    pub far_radius: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            dim: 2,
            train_per_class: 500,
            test_count: 500,
            ood_mid_count: 500,
            ood_far_count: 500,
            separation: 10.0,
            sigma: 1.0,
            jitter: 0.5,
            far_radius: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthBenchmark {
    pub means: Vec<Vec<f64>>,
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    pub ood_mid: FeatureDataset,
    pub ood_far: FeatureDataset,
    pub head: LinearHead,
}

pub fn cluster_means(classes: usize, dim: usize, separation: f64, sigma: f64) -> Vec<Vec<f64>> {
    let gap = separation * sigma;
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim >= classes {
                m[c] = gap / std::f64::consts::SQRT_2;
            } else if dim >= 2 {
                let radius = gap / (2.0 * (std::f64::consts::PI / classes as f64).sin());
                let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            } else {
                m[0] = gap * c as f64;
            }
            m
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, center: &[f64], scale: f64) -> Vec<f32> {
    center
        .iter()
        .map(|&m| {
            let e: f64 = rng.sample(StandardNormal);
            (m + scale * e) as f32
        })
        .collect()
}

/// Least-squares fit of one-hot targets, `[X 1] W^T ≈ Y`, with a tiny ridge
/// term for conditioning.
pub fn fit_least_squares_head(ds: &FeatureDataset) -> Result<LinearHead> {
    let (n, d, c) = (ds.rows(), ds.dim(), ds.classes());
    let p = d + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, c);
    const CHUNK: usize = 2048;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let rows = end - start;
        let a = DMatrix::<f64>::from_fn(rows, p, |r, j| {
            if j < d {
                ds.row(start + r)[j] as f64
            } else {
                1.0
            }
        });
        let y = DMatrix::<f64>::from_fn(rows, c, |r, k| (ds.label(start + r) == k) as u8 as f64);
        gram += a.tr_mul(&a);
        rhs += a.tr_mul(&y);
        start = end;
    }
    let ridge = 1e-8 * (gram.trace() / p as f64).max(1e-12);
    for j in 0..p {
        gram[(j, j)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("least-squares system is not positive definite".into()))?;
    let coef = chol.solve(&rhs); // p x c
    let mut weights = Vec::with_capacity(c * d);
    let mut bias = Vec::with_capacity(c);
    for k in 0..c {
        let col: DVector<f64> = coef.column(k).into_owned();
        weights.extend(col.iter().take(d).map(|&v| v as f32));
        bias.push(col[d] as f32);
    }
    LinearHead::new(weights, bias, d)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthBenchmark> {
    let (c, d) = (cfg.classes, cfg.dim);
    if c < 2 || d == 0 || cfg.train_per_class == 0 {
        return Err(Error::Invalid(
            "synthetic benchmark needs >= 2 classes, >= 1 dimension and >= 1 training row per class".into(),
        ));
    }
    if cfg.test_count == 0 || cfg.ood_mid_count == 0 || cfg.ood_far_count == 0 {
        return Err(Error::Invalid("every synthetic split needs at least one row".into()));
    }
    if !(cfg.sigma > 0.0 && cfg.separation > 0.0) {
        return Err(Error::Invalid("sigma and separation must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = cluster_means(c, d, cfg.separation, cfg.sigma);

    let mut features = Vec::with_capacity(c * cfg.train_per_class * d);
    let mut labels = Vec::with_capacity(c * cfg.train_per_class);
    for (k, m) in means.iter().enumerate() {
        for _ in 0..cfg.train_per_class {
            features.extend(gaussian(&mut rng, m, cfg.sigma));
            labels.push(k);
        }
    }
    let train_refs = (0..labels.len()).map(|i| format!("train/{i}")).collect();
    let train = FeatureDataset::new(features, d, labels, c, None, None)?;
    let head = fit_least_squares_head(&train)?;
    let train = with_logits(train, &head, train_refs)?;

    let mut features = Vec::with_capacity(cfg.test_count * d);
    let mut labels = Vec::with_capacity(cfg.test_count);
    for i in 0..cfg.test_count {
        let k = i % c;
        features.extend(gaussian(&mut rng, &means[k], cfg.sigma));
        labels.push(k);
    }
    let refs = (0..labels.len()).map(|i| format!("test/{i}")).collect();
    let test = with_logits(FeatureDataset::new(features, d, labels, c, None, None)?, &head, refs)?;

    let pairs: Vec<(usize, usize)> = (0..c)
        .flat_map(|a| (a + 1..c).map(move |b| (a, b)))
        .collect();
    let mut features = Vec::with_capacity(cfg.ood_mid_count * d);
    for _ in 0..cfg.ood_mid_count {
        let &(a, b) = pairs.choose(&mut rng).expect("c >= 2");
        let mid: Vec<f64> = means[a].iter().zip(&means[b]).map(|(x, y)| 0.5 * (x + y)).collect();
        features.extend(gaussian(&mut rng, &mid, cfg.jitter * cfg.sigma));
    }
    let ood_mid = ood_dataset(features, d, c, &head, "ood_mid")?;

    let center: Vec<f64> = (0..d)
        .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / c as f64)
        .collect();
    let spread = means
        .iter()
        .map(|m| m.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max)
        .max(cfg.separation * cfg.sigma);
    let radius = cfg.far_radius * spread;
    let mut features = Vec::with_capacity(cfg.ood_far_count * d);
    for _ in 0..cfg.ood_far_count {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let point: Vec<f64> = dir.iter().zip(&center).map(|(v, o)| o + radius * v / norm).collect();
        features.extend(gaussian(&mut rng, &point, cfg.jitter * cfg.sigma));
    }
    let ood_far = ood_dataset(features, d, c, &head, "ood_far")?;

    Ok(SynthBenchmark {
        means,
        train,
        test,
        ood_mid,
        ood_far,
        head,
    })
}

fn head_logits(ds: &FeatureDataset, head: &LinearHead) -> Vec<f32> {
    (0..ds.rows())
        .flat_map(|i| head.logits_unchecked(ds.row(i)).into_iter().map(|v| v as f32))
        .collect()
}

fn with_logits(ds: FeatureDataset, head: &LinearHead, refs: Vec<String>) -> Result<FeatureDataset> {
    let logits = head_logits(&ds, head);
    let d = ds.dim();
    let c = ds.classes();
    let labels = ds.labels().to_vec();
    FeatureDataset::new(ds.features().to_vec(), d, labels, c, Some(logits), Some(refs))
}

/// OOD rows carry the head's prediction as their label.
fn ood_dataset(features: Vec<f32>, d: usize, c: usize, head: &LinearHead, tag: &str) -> Result<FeatureDataset> {
    let labels = features
        .chunks_exact(d)
        .map(|row| head.predict_unchecked(row))
        .collect::<Vec<_>>();
    let refs = (0..labels.len()).map(|i| format!("{tag}/{i}")).collect();
    let ds = FeatureDataset::new(features, d, labels, c, None, None)?;
    with_logits(ds, head, refs)
}
