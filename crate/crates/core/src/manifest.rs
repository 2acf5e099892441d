//! JSON manifests describing a dataset binary, its head and its refs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, read_refs, FeatureDataset};
use crate::error::{Error, Result};
use crate::head::{load_head, LinearHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    InputSpace,
    EmbeddingSpace,
}

/// Relative paths are resolved against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub features_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refs_path: Option<PathBuf>,
    pub n: u64,
    pub d: u64,
    pub c: u64,
    pub space: Space,
}

/// A manifest together with everything it points at.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub dataset: FeatureDataset,
    pub head: Option<LinearHead>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads the dataset (and head, when named) and checks the declared
    /// dimensions against the binary headers.
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedManifest> {
        let path = path.as_ref();
        let manifest = Self::read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut dataset = load_dataset(resolve(base, &manifest.features_path))?;
        let declared = (manifest.n, manifest.d, manifest.c);
        let actual = (
            dataset.rows() as u64,
            dataset.dim() as u64,
            dataset.classes() as u64,
        );
        if declared != actual {
            return Err(Error::Manifest(format!(
                "manifest declares (n, d, c) = {declared:?} but the binary holds {actual:?}"
            )));
        }
        if let Some(refs) = &manifest.refs_path {
            dataset = dataset.with_input_refs(read_refs(&resolve(base, refs))?)?;
        }
        let head = match &manifest.head_path {
            Some(p) => {
                let head = load_head(resolve(base, p))?;
                if head.dim() != dataset.dim() || head.classes() != dataset.classes() {
                    return Err(Error::Manifest(format!(
                        "head is {}x{} but the dataset has c={}, d={}",
                        head.classes(),
                        head.dim(),
                        dataset.classes(),
                        dataset.dim()
                    )));
                }
                Some(head)
            }
            None => None,
        };
        Ok(LoadedManifest {
            manifest,
            dataset,
            head,
        })
    }

    pub fn describe(ds: &FeatureDataset, features_path: PathBuf, space: Space) -> Self {
        Self {
            features_path,
            head_path: None,
            refs_path: None,
            n: ds.rows() as u64,
            d: ds.dim() as u64,
            c: ds.classes() as u64,
            space,
        }
    }
}

/// Loads either a manifest (`.json`) or a bare `CFOD` binary.
pub fn load_any(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        DatasetManifest::load(path)
    } else {
        let dataset = load_dataset(path)?;
        let manifest = DatasetManifest::describe(&dataset, path.to_path_buf(), Space::EmbeddingSpace);
        Ok(LoadedManifest {
            manifest,
            dataset,
            head: None,
        })
    }
}
