//! K-fold cross-validation protocol: per fold, two-phase training and
//! evaluation on balanced/imbalanced test sets at image and case level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{build_test_sets, kfold_split, HUVolume};
use crate::metrics::{
    aggregate_folds, binary_metrics, confusion, roc_auc, AggregateReport, FoldMetrics,
};
use crate::nn::ModelCheckpoint;
use crate::preprocess::{preprocess_case, PreprocessedCase};
use crate::scalar::Scalar;

use super::infer::{case_score, extract_case};
use super::train::{train_case_classifier, train_image_classifier};
use super::{CasePrediction, LogEntry, PipelineError, TrainConfig};

/// Everything produced for one fold.
pub struct FoldRun {
    pub fold: usize,
    pub cnn_ckpt: ModelCheckpoint,
    pub blstm_ckpt: ModelCheckpoint,
    pub cnn_log: Vec<LogEntry>,
    pub blstm_log: Vec<LogEntry>,
    /// Test-fold case ids of each evaluation set.
    pub imbalanced_ids: Vec<String>,
    pub balanced_ids: Vec<String>,
    /// Case predictions over the full (imbalanced) test fold.
    pub predictions: Vec<CasePrediction>,
    pub image_imbalanced: FoldMetrics,
    pub image_balanced: FoldMetrics,
    pub case_imbalanced: FoldMetrics,
    pub case_balanced: FoldMetrics,
}

/// Aggregated cross-fold reports, image level and case level, each on
/// the balanced and imbalanced test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReports {
    pub image_imbalanced: AggregateReport,
    pub image_balanced: AggregateReport,
    pub case_imbalanced: AggregateReport,
    pub case_balanced: AggregateReport,
}

pub struct CvRun {
    pub folds: Vec<FoldRun>,
    pub reports: CvReports,
}

fn metrics_from_scores(
    scores: &[f64],
    truths: &[u8],
    threshold: f64,
) -> Result<FoldMetrics, PipelineError> {
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
    let cm = confusion(&preds, truths)?;
    let bm = binary_metrics(&cm)?;
    let auc = roc_auc(scores, truths).ok().map(|(a, _)| a);
    Ok(FoldMetrics::from_parts(&bm, auc))
}

/// Run the full cross-validation protocol over preprocessed-on-demand
/// volumes. Deterministic in `config.seed`.
pub fn run_cv<E: Scalar>(
    volumes: &[HUVolume],
    k: usize,
    config: &TrainConfig,
) -> Result<CvRun, PipelineError> {
    config.validate()?;
    let labeled: Vec<(String, u8)> = volumes
        .iter()
        .map(|v| (v.case_id.clone(), v.case_label))
        .collect();
    let plan = kfold_split(&labeled, k, config.seed)?;

    let mut cases: HashMap<&str, PreprocessedCase> = HashMap::new();
    for v in volumes {
        cases.insert(v.case_id.as_str(), preprocess_case(v, config.cnn.input_side)?);
    }
    let label_of: HashMap<&str, u8> = labeled.iter().map(|(id, y)| (id.as_str(), *y)).collect();

    let mut folds = Vec::with_capacity(k);
    for (f, split) in plan.folds.iter().enumerate() {
        let fold_config = TrainConfig { fold: f as u32, ..config.clone() };
        let gather = |ids: &[String]| -> Vec<PreprocessedCase> {
            ids.iter().map(|id| cases[id.as_str()].clone()).collect()
        };
        let train_cases = gather(&split.train);
        let val_cases = gather(&split.validation);

        let (cnn_ckpt, cnn_log) =
            train_image_classifier::<E>(&train_cases, &val_cases, &fold_config)?;
        let (blstm_ckpt, blstm_log) =
            train_case_classifier::<E>(&cnn_ckpt, &train_cases, &val_cases, &fold_config)?;

        let test_labeled: Vec<(String, u8)> = split
            .test
            .iter()
            .map(|id| (id.clone(), label_of[id.as_str()]))
            .collect();
        let (imbalanced_ids, balanced_ids) =
            build_test_sets(&test_labeled, config.seed.wrapping_add(f as u64))?;

        // score every test case once; both sets reuse the same scores
        let (cnn_config, cnn_params) = cnn_ckpt.restore_cnn::<E>()?;
        let clf = blstm_ckpt.restore_blstm::<E>()?;
        let mut case_scores: HashMap<&str, f64> = HashMap::new();
        let mut image_scores: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut predictions = Vec::new();
        for id in &imbalanced_ids {
            let case = &cases[id.as_str()];
            let extracted = extract_case(&cnn_config, &cnn_params, case)?;
            let score = case_score(&extracted.features, &clf)?;
            case_scores.insert(id.as_str(), score);
            image_scores.insert(id.as_str(), extracted.image_scores.clone());
            predictions.push(CasePrediction {
                case_id: id.clone(),
                score,
                label: u8::from(score > config.threshold),
                image_scores: extracted.image_scores,
            });
        }

        let eval_sets = |ids: &[String]| -> Result<(FoldMetrics, FoldMetrics), PipelineError> {
            let mut cscores = Vec::new();
            let mut ctruths = Vec::new();
            let mut iscores = Vec::new();
            let mut itruths = Vec::new();
            for id in ids {
                cscores.push(case_scores[id.as_str()]);
                ctruths.push(label_of[id.as_str()]);
                iscores.extend(image_scores[id.as_str()].iter().copied());
                itruths.extend(cases[id.as_str()].image_labels.iter().copied());
            }
            Ok((
                metrics_from_scores(&iscores, &itruths, config.threshold)?,
                metrics_from_scores(&cscores, &ctruths, config.threshold)?,
            ))
        };
        let (image_imbalanced, case_imbalanced) = eval_sets(&imbalanced_ids)?;
        let (image_balanced, case_balanced) = eval_sets(&balanced_ids)?;

        folds.push(FoldRun {
            fold: f,
            cnn_ckpt,
            blstm_ckpt,
            cnn_log,
            blstm_log,
            imbalanced_ids,
            balanced_ids,
            predictions,
            image_imbalanced,
            image_balanced,
            case_imbalanced,
            case_balanced,
        });
    }

    let collect = |pick: fn(&FoldRun) -> FoldMetrics| -> Vec<FoldMetrics> {
        folds.iter().map(pick).collect()
    };
    let reports = CvReports {
        image_imbalanced: aggregate_folds(&collect(|f| f.image_imbalanced))?,
        image_balanced: aggregate_folds(&collect(|f| f.image_balanced))?,
        case_imbalanced: aggregate_folds(&collect(|f| f.case_imbalanced))?,
        case_balanced: aggregate_folds(&collect(|f| f.case_balanced))?,
    };
    Ok(CvRun { folds, reports })
}

impl CvReports {
    /// Two aligned text tables in the fixed metric column order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("image-level\n");
        out.push_str(&self.image_imbalanced.to_text("imbalanced"));
        out.push_str(
            self.image_balanced
                .to_text("balanced")
                .lines()
                .nth(1)
                .unwrap_or(""),
        );
        out.push_str("\n\ncase-level\n");
        out.push_str(&self.case_imbalanced.to_text("imbalanced"));
        out.push_str(
            self.case_balanced
                .to_text("balanced")
                .lines()
                .nth(1)
                .unwrap_or(""),
        );
        out.push('\n');
        out
    }
}
