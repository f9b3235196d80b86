//! Stratified k-fold cross-validation plans and balanced/imbalanced
//! test-set construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

/// Stratified k-fold split. Positives and negatives are each shuffled
/// (seeded) and dealt round-robin, negatives continuing at the fold
/// where the positives stopped, so total fold sizes differ by at most 1.
/// Per fold: that fold is the test set, the rest train, with 10% of the
/// training cases (seeded, at least 1) held out as validation.
pub fn kfold_split(
    cases: &[(String, u8)],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::Param(format!("need k >= 2, got {k}")));
    }
    if cases.len() < k {
        return Err(DataError::Param(format!(
            "need at least {k} cases, got {}",
            cases.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<&str> = cases
        .iter()
        .filter(|(_, y)| *y == 1)
        .map(|(id, _)| id.as_str())
        .collect();
    let mut negatives: Vec<&str> = cases
        .iter()
        .filter(|(_, y)| *y != 1)
        .map(|(id, _)| id.as_str())
        .collect();
    for (name, class) in [("positive", &positives), ("negative", &negatives)] {
        if class.len() < k {
            return Err(DataError::Stratification(format!(
                "{} {name} cases cannot fill {k} folds",
                class.len()
            )));
        }
    }
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut test_sets: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut idx = 0usize;
    for id in positives.iter().chain(negatives.iter()) {
        test_sets[idx % k].push((*id).to_string());
        idx += 1;
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let test = test_sets[f].clone();
        let mut pool: Vec<String> = (0..k)
            .filter(|&g| g != f)
            .flat_map(|g| test_sets[g].iter().cloned())
            .collect();
        pool.shuffle(&mut rng);
        let n_val = ((pool.len() as f64) * 0.1).round().max(1.0) as usize;
        let validation = pool.split_off(pool.len() - n_val);
        folds.push(FoldSplit {
            test,
            train: pool,
            validation,
        });
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Build the two evaluation sets of one test fold. The imbalanced set is
/// the whole fold; the balanced set keeps every positive plus an
/// equal-count seeded uniform subsample of the negatives, preserving
/// fold order (so an already balanced fold passes through unchanged).
pub fn build_test_sets(
    test_cases: &[(String, u8)],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), DataError> {
    let n_pos = test_cases.iter().filter(|(_, y)| *y == 1).count();
    if n_pos == 0 {
        return Err(DataError::DegenerateTestSet);
    }
    let imbalanced: Vec<String> = test_cases.iter().map(|(id, _)| id.clone()).collect();

    let neg_indices: Vec<usize> = test_cases
        .iter()
        .enumerate()
        .filter(|(_, (_, y))| *y != 1)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = neg_indices.clone();
    sampled.shuffle(&mut rng);
    sampled.truncate(n_pos.min(neg_indices.len()));
    let keep: std::collections::HashSet<usize> = sampled.into_iter().collect();

    let balanced: Vec<String> = test_cases
        .iter()
        .enumerate()
        .filter(|(i, (_, y))| *y == 1 || keep.contains(i))
        .map(|(_, (id, _))| id.clone())
        .collect();
    Ok((imbalanced, balanced))
}
