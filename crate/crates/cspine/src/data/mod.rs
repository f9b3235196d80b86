//! Synthetic CT phantoms, on-disk case format, manifests, and
//! cross-validation splits.

mod caseio;
mod phantom;
mod split;
mod stats;

pub use caseio::{read_case, write_case, CASE_MAGIC, CASE_VERSION};
pub use phantom::{generate_case, generate_case_geo, PhantomGeometry};
pub use split::{build_test_sets, kfold_split, FoldPlan, FoldSplit};
pub use stats::{manifest_stats, ManifestStats};

use serde::{Deserialize, Serialize};

use crate::preprocess::HuSlice;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("case file format error: {0}")]
    Format(String),
    #[error("stratification failed: {0}")]
    Stratification(String),
    #[error("test set has no positive cases")]
    DegenerateTestSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive fracture bounding box in original slice coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractureBox {
    pub r0: u16,
    pub r1: u16,
    pub c0: u16,
    pub c1: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

/// A case: N axial slices with image-level and case-level labels, plus
/// ground-truth fracture boxes (synthetic only) and a demographic stub.
#[derive(Debug, Clone, PartialEq)]
pub struct HUVolume {
    pub case_id: String,
    pub slices: Vec<HuSlice>,
    pub image_labels: Vec<u8>,
    pub case_label: u8,
    pub fracture_boxes: Vec<Vec<FractureBox>>,
    pub age: f32,
    pub sex: Sex,
}

impl HUVolume {
    /// Case label is the max over image labels; boxes appear exactly on
    /// positive slices.
    pub fn check_label_consistency(&self) -> Result<(), DataError> {
        let max = self.image_labels.iter().copied().max().unwrap_or(0);
        if self.case_label != max {
            return Err(DataError::Param(format!(
                "case label {} != max image label {max}",
                self.case_label
            )));
        }
        for (i, (boxes, &y)) in self.fracture_boxes.iter().zip(&self.image_labels).enumerate() {
            if (y == 1) != !boxes.is_empty() {
                return Err(DataError::Param(format!(
                    "slice {i}: label {y} but {} boxes",
                    boxes.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub n_slices: usize,
    pub case_label: u8,
    pub positive_slices: usize,
    pub seed: u64,
    pub age: f32,
    pub sex: Sex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ManifestCounts {
    pub cases: usize,
    pub positive_cases: usize,
    pub negative_cases: usize,
    pub images: usize,
    pub positive_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub counts: ManifestCounts,
}

impl Manifest {
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Self {
        let counts = ManifestCounts {
            cases: entries.len(),
            positive_cases: entries.iter().filter(|e| e.case_label == 1).count(),
            negative_cases: entries.iter().filter(|e| e.case_label == 0).count(),
            images: entries.iter().map(|e| e.n_slices).sum(),
            positive_images: entries.iter().map(|e| e.positive_slices).sum(),
        };
        Manifest { entries, counts }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DataError> {
        let json = std::fs::read_to_string(path)?;
        let manifest: Manifest =
            serde_json::from_str(&json).map_err(|e| DataError::Format(e.to_string()))?;
        let recomputed = Manifest::from_entries(manifest.entries.clone()).counts;
        if manifest.counts != recomputed {
            return Err(DataError::Format(
                "manifest counts do not match entries".into(),
            ));
        }
        Ok(manifest)
    }
}
