//! Feature extraction and case-level inference.

use crate::nn::{cnn_forward, CaseClassifierParams, CnnParams, ModelCheckpoint, ResidualCnnConfig};
use crate::preprocess::{preprocess_case, PreprocessedCase, PreprocessedSlice};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{CasePrediction, PipelineError};

/// Stack slices into an inference batch, [B, 3, S, S].
///
/// Channels are shifted from [0,1] to [-0.5, 0.5]: zero-centered inputs
/// break the early-training symmetry far more reliably than the raw
/// all-nonnegative window values.
pub(crate) fn slices_to_tensor<E: Scalar>(slices: &[&PreprocessedSlice]) -> Tensor<E> {
    let side = slices[0].side;
    let mut data = Vec::with_capacity(slices.len() * 3 * side * side);
    for slice in slices {
        for ch in &slice.channels {
            data.extend(ch.iter().map(|&v| E::from_f64(v - 0.5)));
        }
    }
    Tensor::new(&[slices.len(), 3, side, side], data).expect("consistent slice dims")
}

/// Per-slice pooled features plus image-head scores of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFeatures<E: Scalar> {
    /// [N][feature_dim], cranio-caudal slice order, detached.
    pub features: Vec<Vec<E>>,
    pub image_scores: Vec<f64>,
}

/// Run the frozen CNN over every slice of a case (inference mode: no
/// dropout, no augmentation).
pub fn extract_case<E: Scalar>(
    config: &ResidualCnnConfig,
    params: &CnnParams<E>,
    case: &PreprocessedCase,
) -> Result<CaseFeatures<E>, PipelineError> {
    if case.slices.is_empty() {
        return Err(PipelineError::EmptyCase);
    }
    let refs: Vec<&PreprocessedSlice> = case.slices.iter().collect();
    let x = slices_to_tensor::<E>(&refs).detached();
    let out = cnn_forward(&x, config, params)?;
    let fd = config.feature_dim;
    let fdata = out.features.data();
    let features = (0..case.slices.len())
        .map(|i| fdata[i * fd..(i + 1) * fd].to_vec())
        .collect();
    let image_scores = out
        .logit
        .sigmoid()
        .data()
        .iter()
        .map(|v| v.as_f64())
        .collect();
    Ok(CaseFeatures {
        features,
        image_scores,
    })
}

/// Case score from a feature sequence: BLSTM readout -> affine head ->
/// sigmoid. Inference mode (no dropout).
pub fn case_score<E: Scalar>(
    features: &[Vec<E>],
    clf: &CaseClassifierParams<E>,
) -> Result<f64, PipelineError> {
    if features.is_empty() {
        return Err(PipelineError::EmptyCase);
    }
    let seq: Vec<Tensor<E>> = features
        .iter()
        .map(|f| Tensor::new(&[1, f.len()], f.clone()).expect("row vector"))
        .collect();
    let readout = crate::nn::blstm_forward(&seq, &clf.blstm.fwd, &clf.blstm.bwd, &[seq.len()])?;
    let logit = readout.affine(&clf.head_weight, &clf.head_bias)?;
    Ok(logit.sigmoid().item().as_f64())
}

/// Full case inference: preprocess, extract features, score, threshold.
pub fn infer_case<E: Scalar>(
    cnn_ckpt: &ModelCheckpoint,
    blstm_ckpt: &ModelCheckpoint,
    volume: &crate::data::HUVolume,
    threshold: f64,
) -> Result<CasePrediction, PipelineError> {
    let (config, params) = cnn_ckpt.restore_cnn::<E>()?;
    let clf = blstm_ckpt.restore_blstm::<E>()?;
    let case = preprocess_case(volume, config.input_side)?;
    let extracted = extract_case(&config, &params, &case)?;
    let score = case_score(&extracted.features, &clf)?;
    Ok(CasePrediction {
        case_id: case.case_id,
        score,
        label: u8::from(score > threshold),
        image_scores: extracted.image_scores,
    })
}
