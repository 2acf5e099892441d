//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the library's search, scoring or metric code.
#![allow(dead_code, clippy::needless_range_loop)]

use cfood::{FeatureDataset, LinearHead};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Squared distance summed into eight interleaved partial sums, combined
/// pairwise. Written index-by-index rather than chunk-by-chunk.
pub fn sq_dist(z: &[f64], row: &[f32]) -> f64 {
    assert_eq!(z.len(), row.len());
    let mut lane = [0.0f64; 8];
    for j in 0..z.len() {
        let d = z[j] - row[j] as f64;
        lane[j & 7] += d * d;
    }
    let lo = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    let hi = (lane[4] + lane[5]) + (lane[6] + lane[7]);
    lo + hi
}

pub fn sq_dist64(a: &[f64], b: &[f64]) -> f64 {
    let mut lane = [0.0f64; 8];
    for j in 0..a.len() {
        let d = a[j] - b[j];
        lane[j & 7] += d * d;
    }
    ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]))
}

pub fn logits(head: &LinearHead, z: &[f64]) -> Vec<f64> {
    (0..head.classes())
        .map(|c| {
            let w = head.weight_row(c);
            let mut s = head.bias()[c] as f64;
            for j in 0..z.len() {
                s += w[j] as f64 * z[j];
            }
            s
        })
        .collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(head: &LinearHead, z: &[f64]) -> usize {
    argmax(&logits(head, z))
}

pub fn row64(ds: &FeatureDataset, i: usize) -> Vec<f64> {
    ds.row(i).iter().map(|&v| v as f64).collect()
}

/// Rows usable as counterfactuals: every row, or with `head` only those the
/// head classifies as their own label.
pub fn eligible(ds: &FeatureDataset, head: Option<&LinearHead>) -> Vec<bool> {
    (0..ds.rows())
        .map(|i| match head {
            Some(h) => predict(h, &row64(ds, i)) == ds.label(i),
            None => true,
        })
        .collect()
}

/// All (squared distance, index) pairs of `class` sorted by distance then
/// index.
pub fn ranked_in_class(ds: &FeatureDataset, ok: &[bool], z: &[f64], class: usize) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = (0..ds.rows())
        .filter(|&i| ok[i] && ds.label(i) == class)
        .map(|i| (sq_dist(z, ds.row(i)), i))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

pub fn ranked_global(ds: &FeatureDataset, ok: &[bool], z: &[f64]) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = (0..ds.rows())
        .filter(|&i| ok[i])
        .map(|i| (sq_dist(z, ds.row(i)), i))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

pub fn mean(ds: &FeatureDataset) -> Vec<f64> {
    let mut m = vec![0.0; ds.dim()];
    for i in 0..ds.rows() {
        for (acc, &v) in m.iter_mut().zip(ds.row(i)) {
            *acc += v as f64;
        }
    }
    m.iter().map(|s| s / ds.rows() as f64).collect()
}

/// Mean counterfactual distance over the other classes, divided by the
/// distance to the training mean. `None` when no other class has rows.
pub fn eq4_score(
    ds: &FeatureDataset,
    head: &LinearHead,
    filter: bool,
    z: &[f64],
    average: bool,
    normalize: bool,
) -> Option<(usize, f64)> {
    let ok = eligible(ds, filter.then_some(head));
    let pred = predict(head, z);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ds.classes() {
        if c == pred {
            continue;
        }
        let mut best = f64::INFINITY;
        for i in 0..ds.rows() {
            if ok[i] && ds.label(i) == c {
                best = best.min(sq_dist(z, ds.row(i)));
            }
        }
        if best.is_finite() {
            total += best.sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let mut s = total;
    if average {
        s /= count as f64;
    }
    if normalize {
        let mu = mean(ds);
        s /= sq_dist64(z, &mu).sqrt();
    }
    Some((pred, s))
}

/// Fraction of (id, ood) pairs ordered correctly, ties counting half.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// Sweeps every candidate threshold and keeps the largest one whose TPR is
/// still at least 95%.
pub fn sweep_fpr95(id: &[f64], ood: &[f64]) -> (f64, f64) {
    let mut best: Option<f64> = None;
    for &t in id {
        let tp = id.iter().filter(|&&s| s >= t).count();
        if 100 * tp >= 95 * id.len() && best.is_none_or(|b| t > b) {
            best = Some(t);
        }
    }
    let t = best.expect("the smallest ID score always qualifies");
    let fp = ood.iter().filter(|&&s| s >= t).count();
    (fp as f64 / ood.len() as f64, t)
}

/// Random dataset with every class present. `grid` draws small integer
/// coordinates so equal distances are common.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, d: usize, c: usize, grid: bool) -> FeatureDataset {
    let features: Vec<f32> = (0..n * d)
        .map(|_| {
            if grid {
                r.random_range(-2i32..=2) as f32
            } else {
                r.random_range(-1.0f32..1.0)
            }
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { r.random_range(0..c) }).collect();
    FeatureDataset::new(features, d, labels, c, None, None).unwrap()
}

/// Gaussian clusters around random centres, `spread` apart on average.
pub fn clustered_dataset(r: &mut ChaCha8Rng, n: usize, d: usize, c: usize, spread: f32) -> FeatureDataset {
    let centres: Vec<Vec<f32>> = (0..c)
        .map(|_| (0..d).map(|_| r.random_range(-spread..spread)).collect())
        .collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = if i < c { i } else { r.random_range(0..c) };
        for j in 0..d {
            let e: f32 = r.sample(rand_distr::StandardNormal);
            features.push(centres[k][j] + e);
        }
        labels.push(k);
    }
    FeatureDataset::new(features, d, labels, c, None, None).unwrap()
}

pub fn random_head(r: &mut ChaCha8Rng, d: usize, c: usize) -> LinearHead {
    let w = (0..c * d).map(|_| r.random_range(-1.0f32..1.0)).collect();
    let b = (0..c).map(|_| r.random_range(-0.5f32..0.5)).collect();
    LinearHead::new(w, b, d).unwrap()
}

/// Nearest-class-mean classifier written as a linear head:
/// `w_c = m_c`, `b_c = -|m_c|^2 / 2`.
pub fn centroid_head(ds: &FeatureDataset) -> LinearHead {
    let (d, c) = (ds.dim(), ds.classes());
    let mut sums = vec![0.0f64; c * d];
    let mut counts = vec![0usize; c];
    for i in 0..ds.rows() {
        let k = ds.label(i);
        counts[k] += 1;
        for (s, &v) in sums[k * d..(k + 1) * d].iter_mut().zip(ds.row(i)) {
            *s += v as f64;
        }
    }
    let mut w = Vec::with_capacity(c * d);
    let mut b = Vec::with_capacity(c);
    for k in 0..c {
        let m: Vec<f64> = sums[k * d..(k + 1) * d].iter().map(|s| s / counts[k].max(1) as f64).collect();
        b.push((-0.5 * m.iter().map(|v| v * v).sum::<f64>()) as f32);
        w.extend(m.iter().map(|&v| v as f32));
    }
    LinearHead::new(w, b, d).unwrap()
}

pub fn random_query(r: &mut ChaCha8Rng, d: usize, grid: bool, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            if grid {
                r.random_range(-2i32..=2) as f64
            } else {
                r.random_range(-scale..scale)
            }
        })
        .collect()
}
