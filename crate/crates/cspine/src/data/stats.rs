//! Dataset summary statistics: class percentages by sex and mean±std
//! age per class.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DataError, Manifest, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    /// Percentages of the whole dataset, summing to 100.
    pub female_negative_pct: f64,
    pub female_positive_pct: f64,
    pub male_negative_pct: f64,
    pub male_positive_pct: f64,
    pub age_negative_mean: f64,
    /// Population standard deviation (a single case reports 0).
    pub age_negative_std: f64,
    pub age_positive_mean: f64,
    pub age_positive_std: f64,
}

fn mean_std(ages: &[f64]) -> (f64, f64) {
    if ages.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = ages.len() as f64;
    let mean = ages.iter().sum::<f64>() / n;
    let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn manifest_stats(manifest: &Manifest) -> Result<ManifestStats, DataError> {
    if manifest.entries.is_empty() {
        return Err(DataError::Param("empty manifest".into()));
    }
    let total = manifest.entries.len() as f64;
    let count = |sex: Sex, label: u8| {
        manifest
            .entries
            .iter()
            .filter(|e| e.sex == sex && e.case_label == label)
            .count() as f64
    };
    let ages = |label: u8| -> Vec<f64> {
        manifest
            .entries
            .iter()
            .filter(|e| e.case_label == label)
            .map(|e| e.age as f64)
            .collect()
    };
    let (neg_mean, neg_std) = mean_std(&ages(0));
    let (pos_mean, pos_std) = mean_std(&ages(1));
    Ok(ManifestStats {
        female_negative_pct: 100.0 * count(Sex::Female, 0) / total,
        female_positive_pct: 100.0 * count(Sex::Female, 1) / total,
        male_negative_pct: 100.0 * count(Sex::Male, 0) / total,
        male_positive_pct: 100.0 * count(Sex::Male, 1) / total,
        age_negative_mean: neg_mean,
        age_negative_std: neg_std,
        age_positive_mean: pos_mean,
        age_positive_std: pos_std,
    })
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>12} {:>12}", "", "Negative", "Positive")?;
        writeln!(
            f,
            "{:<18} {:>11.2}% {:>11.2}%",
            "Female", self.female_negative_pct, self.female_positive_pct
        )?;
        writeln!(
            f,
            "{:<18} {:>11.2}% {:>11.2}%",
            "Male", self.male_negative_pct, self.male_positive_pct
        )?;
        write!(
            f,
            "{:<18} {:>6.2}±{:<5.2} {:>6.2}±{:<5.2}",
            "Age (mean±std)",
            self.age_negative_mean,
            self.age_negative_std,
            self.age_positive_mean,
            self.age_positive_std
        )
    }
}
