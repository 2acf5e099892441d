//! Nearest-like / nearest-unlike neighbour explanations.
//!
//! A report lists the `k` training inputs of the predicted class closest to
//! the query, followed by one block per other class holding that class's `k`
//! closest inputs. Blocks are ordered by their closest member, so the first
//! block names the class the query could most plausibly have been. Inputs
//! are referenced by the opaque refs stored with the training set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{classify, Verdict};
use crate::head::LinearHead;
use crate::index::ClassIndex;
use crate::scorer::{score_input, ScoreConfig, TrainStatistics};

/// With more classes than this, only the closest [`MAX_BLOCKS_LARGE`]
/// unlike blocks are kept.
pub const ALL_BLOCKS_UP_TO: usize = 10;
pub const MAX_BLOCKS_LARGE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikeNeighbour {
    pub input_ref: String,
    pub class: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlikeNeighbour {
    pub input_ref: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlikeBlock {
    pub class: usize,
    pub neighbours: Vec<UnlikeNeighbour>,
}

impl UnlikeBlock {
    pub fn nearest_distance(&self) -> f64 {
        self.neighbours.first().map_or(f64::INFINITY, |n| n.distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub query_ref: String,
    pub predicted_class: usize,
    pub verdict: Verdict,
    pub score: f64,
    pub normalizer: f64,
    pub like_neighbours: Vec<LikeNeighbour>,
    pub unlike_blocks: Vec<UnlikeBlock>,
    /// Classes with no indexed training rows, left out of the report.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omitted_classes: Vec<usize>,
}

/// Builds the report for one query embedding.
///
/// `train_refs` maps original training indices to input refs; its absence
/// is an error since the report would have nothing to show.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    idx: &ClassIndex,
    head: &LinearHead,
    stats: &TrainStatistics,
    train_refs: Option<&[String]>,
    z: &[f64],
    query_ref: &str,
    k: usize,
    tau: f64,
    cfg: &ScoreConfig,
) -> Result<ExplanationReport> {
    let refs = train_refs.ok_or(Error::MissingRefs)?;
    if refs.len() != idx.source_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} training refs for an index over {} rows",
            refs.len(),
            idx.source_rows()
        )));
    }
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let scored = score_input(idx, head, stats, z, None, cfg)?;
    let predicted = scored.predicted_class;
    let mut omitted = Vec::new();

    let like_neighbours = if idx.class_len(predicted) == 0 {
        omitted.push(predicted);
        Vec::new()
    } else {
        idx.k_nearest_in_class(z, predicted, k)?
            .into_iter()
            .map(|n| LikeNeighbour {
                input_ref: refs[n.index].clone(),
                class: predicted,
                distance: n.distance(),
            })
            .collect()
    };

    let mut unlike_blocks = Vec::new();
    for class in (0..idx.classes()).filter(|&c| c != predicted) {
        if idx.class_len(class) == 0 {
            omitted.push(class);
            continue;
        }
        let neighbours = idx
            .k_nearest_in_class(z, class, k)?
            .into_iter()
            .map(|n| UnlikeNeighbour {
                input_ref: refs[n.index].clone(),
                distance: n.distance(),
            })
            .collect();
        unlike_blocks.push(UnlikeBlock { class, neighbours });
    }
    unlike_blocks.sort_by(|a, b| {
        a.nearest_distance()
            .total_cmp(&b.nearest_distance())
            .then(a.class.cmp(&b.class))
    });
    if idx.classes() > ALL_BLOCKS_UP_TO {
        unlike_blocks.truncate(MAX_BLOCKS_LARGE);
    }
    omitted.sort_unstable();

    Ok(ExplanationReport {
        query_ref: query_ref.to_owned(),
        predicted_class: predicted,
        verdict: classify(scored.score, tau),
        score: scored.score,
        normalizer: scored.normalizer,
        like_neighbours,
        unlike_blocks,
        omitted_classes: omitted,
    })
}

/// Plain-text layout: the query, one row of like neighbours, then one row per
/// unlike class, nearest first.
pub fn render_text(report: &ExplanationReport) -> String {
    let mut out = String::new();
    let verdict = match report.verdict {
        Verdict::Id => "ID",
        Verdict::Ood => "OOD",
    };
    let _ = writeln!(
        out,
        "query {}  predicted {}  {}  score {:.4}  (normaliser {:.4})",
        report.query_ref, report.predicted_class, verdict, report.score, report.normalizer
    );
    let _ = write!(out, "  like    [{}]", report.predicted_class);
    for n in &report.like_neighbours {
        let _ = write!(out, "  {} ({:.4})", n.input_ref, n.distance);
    }
    out.push('\n');
    for block in &report.unlike_blocks {
        let _ = write!(out, "  unlike  [{}]", block.class);
        for n in &block.neighbours {
            let _ = write!(out, "  {} ({:.4})", n.input_ref, n.distance);
        }
        out.push('\n');
    }
    if !report.omitted_classes.is_empty() {
        let _ = writeln!(out, "  omitted (no training rows): {:?}", report.omitted_classes);
    }
    out
}
