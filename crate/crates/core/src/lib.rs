//! Post-hoc out-of-distribution detection by counterfactual distance.
//!
//! An input's embedding is scored by how far it has to move to reach each
//! other class, measured with nearest-neighbour counterfactuals over the
//! training set and normalised by its distance to the training mean. Inputs
//! far from every decision boundary score high and are accepted as
//! in-distribution; inputs sitting near boundaries score low.
//!
//! ```no_run
//! use cfood::{load_dataset, load_head, Detector, ScoreConfig};
//!
//! let train = load_dataset("train.cfod")?;
//! let head = load_head("head.cfhd")?;
//! let detector = Detector::fit(&train, head, true, ScoreConfig::default())?;
//! let scored = detector.score(&[0.1, 0.2, 0.3], None)?;
//! println!("{} -> {}", scored.predicted_class, scored.score);
//! # Ok::<(), cfood::Error>(())
//! ```

pub mod cli;
pub mod convert;
pub mod counterfactual;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod head;
pub mod index;
pub mod manifest;
pub mod scorer;
pub mod synth;

pub use counterfactual::{nice, nnce, Counterfactual, Method};
pub use dataset::{load_dataset, save_dataset, FeatureDataset};
pub use distance::get_distance;
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{
    auroc, classify, detection_metrics, energy_score, fdbd_score, fpr_at_95_tpr, knn_score, msp_score,
    DetectionMetrics, KnnBaseline, Verdict,
};
pub use explain::{build_report, render_text, ExplanationReport};
pub use head::{load_head, predict, save_head, LinearHead};
pub use index::{ClassIndex, Neighbour};
pub use manifest::{DatasetManifest, Space};
pub use scorer::{
    compute_mu_train, score_batch, score_input, select_target_classes, Detector, ScoreConfig, ScoredInput,
    TrainStatistics,
};
