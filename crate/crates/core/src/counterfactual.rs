//! Counterfactual search toward a target class.
//!
//! Two searches are provided:
//!
//! * **NNCE** returns the nearest indexed training row of the target class
//!   (the nearest unlike neighbour).
//! * **NICE** starts from the query and copies features from the NNCE anchor
//!   one at a time. At each step it takes the position that most increases
//!   `logit[target] - logit[current prediction]` under the linear head
//!   (lowest position on ties), and stops at the first candidate the head
//!   assigns to the target class. Every feature of an embedding counts as a
//!   substitutable position.
//!
//! Because NICE only ever copies anchor values, its distance to the query is
//! a partial sum of the NNCE distance terms and can never exceed it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::squared_distance;
use crate::error::{Error, Result};
use crate::head::{argmax, LinearHead};
use crate::index::ClassIndex;

pub use crate::distance::get_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Nnce,
    Nice,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nnce => "nnce",
            Method::Nice => "nice",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nnce" => Ok(Method::Nnce),
            "nice" => Ok(Method::Nice),
            other => Err(Error::Invalid(format!(
                "unknown counterfactual method {other:?} (expected nnce or nice)"
            ))),
        }
    }
}

/// A point across the decision boundary toward `target_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub target_class: usize,
    pub point: Vec<f64>,
    /// Euclidean distance from the query to `point`.
    pub distance: f64,
    /// Training row the search anchored on.
    pub source_index: usize,
    /// Positions copied from the anchor, ascending. NICE only.
    pub substituted_features: Option<Vec<usize>>,
}

/// Nearest unlike neighbour of `z` in class `target`.
pub fn nnce(idx: &ClassIndex, z: &[f64], target: usize) -> Result<Counterfactual> {
    let hit = idx.nearest_in_class(z, target)?;
    let row = idx
        .row_by_index(target, hit.index)
        .expect("hit comes from this class block");
    Ok(Counterfactual {
        target_class: target,
        point: row.iter().map(|&v| v as f64).collect(),
        distance: hit.sq_distance.sqrt(),
        source_index: hit.index,
        substituted_features: None,
    })
}

/// Greedy feature substitution from `z` toward its NNCE anchor of class
/// `target`.
pub fn nice(idx: &ClassIndex, head: &LinearHead, z: &[f64], target: usize) -> Result<Counterfactual> {
    if head.dim() != idx.dim() {
        return Err(Error::DimensionMismatch(format!(
            "head dimension {} differs from index dimension {}",
            head.dim(),
            idx.dim()
        )));
    }
    if target >= head.classes() {
        return Err(Error::Invalid(format!(
            "target class {target} is outside 0..{}",
            head.classes()
        )));
    }
    let anchor = nnce(idx, z, target)?;
    let point = nice_from_anchor(head, z, &anchor.point, target)
        .ok_or(Error::NoFlip {
            target,
            anchor: anchor.source_index,
        })?;
    let substituted: Vec<usize> = (0..z.len()).filter(|&j| point[j] != z[j]).collect();
    Ok(Counterfactual {
        target_class: target,
        distance: squared_distance(z, &point).sqrt(),
        point,
        source_index: anchor.source_index,
        substituted_features: Some(substituted),
    })
}

/// Core greedy loop. Returns `None` when even the full anchor is not
/// predicted as `target`.
fn nice_from_anchor(head: &LinearHead, z: &[f64], anchor: &[f64], target: usize) -> Option<Vec<f64>> {
    let mut cand = z.to_vec();
    // Positions where the anchor equals the query are no-op substitutions.
    let mut open: Vec<usize> = (0..z.len()).filter(|&j| anchor[j] != z[j]).collect();
    let mut logits = head.logits_unchecked(&cand);
    let weight = |c: usize, j: usize| head.weight_row(c)[j] as f64;

    loop {
        let mut pred = argmax(&logits);
        if pred == target {
            // Incremental logits can drift; confirm against a fresh pass.
            logits = head.logits_unchecked(&cand);
            pred = argmax(&logits);
            if pred == target {
                return Some(cand);
            }
        }
        if open.is_empty() {
            return None;
        }
        let mut best_slot = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for (slot, &j) in open.iter().enumerate() {
            let gain = (weight(target, j) - weight(pred, j)) * (anchor[j] - cand[j]);
            if gain > best_gain {
                best_gain = gain;
                best_slot = slot;
            }
        }
        // `open` stays sorted, so the first maximum is the lowest position.
        let j = open.remove(best_slot);
        let delta = anchor[j] - cand[j];
        cand[j] = anchor[j];
        for (c, l) in logits.iter_mut().enumerate() {
            *l += weight(c, j) * delta;
        }
        if open.is_empty() {
            // cand is now bitwise the anchor; recompute exactly.
            logits = head.logits_unchecked(&cand);
        }
    }
}

/// Runs the chosen search.
pub fn counterfactual(
    method: Method,
    idx: &ClassIndex,
    head: &LinearHead,
    z: &[f64],
    target: usize,
) -> Result<Counterfactual> {
    match method {
        Method::Nnce => nnce(idx, z, target),
        Method::Nice => nice(idx, head, z, target),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureDataset;

    fn two_point_index() -> ClassIndex {
        let ds = FeatureDataset::new(vec![0.0, 0.0, 0.0, 3.0], 2, vec![0, 1], 2, None, None).unwrap();
        ClassIndex::build(&ds, None, false).unwrap()
    }

    #[test]
    fn nnce_hand_case() {
        let cf = nnce(&two_point_index(), &[1.0, 0.0], 1).unwrap();
        assert_eq!(cf.point, vec![0.0, 3.0]);
        assert_eq!(cf.distance, 10f64.sqrt());
        assert_eq!(cf.source_index, 1);
        assert!(cf.substituted_features.is_none());
    }

    #[test]
    fn nnce_self_is_zero() {
        assert_eq!(nnce(&two_point_index(), &[0.0, 3.0], 1).unwrap().distance, 0.0);
    }

    #[test]
    fn nice_single_difference_returns_anchor() {
        // anchor (0,3) differs from the query (0,-1) only in feature 1
        let head = LinearHead::new(vec![0.0, -1.0, 0.0, 1.0], vec![0.0, 0.0], 2).unwrap();
        let ds = FeatureDataset::new(vec![0.0, -2.0, 0.0, 3.0], 2, vec![0, 1], 2, None, None).unwrap();
        let idx = ClassIndex::build(&ds, Some(&head), true).unwrap();
        let cf = nice(&idx, &head, &[0.0, -1.0], 1).unwrap();
        assert_eq!(cf.point, vec![0.0, 3.0]);
        assert_eq!(cf.substituted_features, Some(vec![1]));
    }

    #[test]
    fn nice_stops_after_dominant_feature() {
        // identity head: class = larger coordinate
        let head = LinearHead::new(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2).unwrap();
        // class 1 anchor at (0.5, 4): swapping feature 1 alone already flips (2,1) -> (2,4)
        let ds = FeatureDataset::new(vec![5.0, 0.0, 0.5, 4.0], 2, vec![0, 1], 2, None, None).unwrap();
        let idx = ClassIndex::build(&ds, Some(&head), true).unwrap();
        let z = [2.0, 1.0];
        let cf = nice(&idx, &head, &z, 1).unwrap();
        assert_eq!(cf.point, vec![2.0, 4.0]);
        assert_eq!(cf.substituted_features, Some(vec![1]));
        assert_eq!(cf.distance, 3.0);
        assert!(cf.distance <= nnce(&idx, &z, 1).unwrap().distance);
        assert_eq!(head.predict(&cf.point).unwrap(), 1);
    }

    #[test]
    fn nice_without_filtering_can_fail() {
        let head = LinearHead::new(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2).unwrap();
        // the only class-1 row is predicted as class 0
        let ds = FeatureDataset::new(vec![0.0, 0.0, 5.0, 1.0], 2, vec![0, 1], 2, None, None).unwrap();
        let idx = ClassIndex::build(&ds, Some(&head), false).unwrap();
        assert!(matches!(
            nice(&idx, &head, &[2.0, 1.0], 1),
            Err(Error::NoFlip { target: 1, anchor: 1 })
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("NICE".parse::<Method>().unwrap(), Method::Nice);
        assert_eq!(Method::Nnce.to_string(), "nnce");
        assert!("milp".parse::<Method>().is_err());
    }
}
