//! Two-phase training: image-level CNN, then case-level BLSTM over
//! frozen features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    bce_loss, cnn_forward, dropout, AdamConfig, AdamState, ArchDescriptor, CaseClassifierParams,
    CnnParams, ModelCheckpoint, TrainMeta,
};
use crate::preprocess::{augment, PreprocessedCase, PreprocessedSlice};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::infer::{extract_case, slices_to_tensor};
use super::{LogEntry, PipelineError, TrainConfig};

fn label_tensor<E: Scalar>(labels: &[u8]) -> Tensor<E> {
    let data: Vec<E> = labels.iter().map(|&y| E::from_f64(y as f64)).collect();
    Tensor::new(&[labels.len(), 1], data).expect("label column")
}

/// Mean BCE and accuracy of the image head over all slices of `cases`,
/// inference mode. With `oversample_positive` set, both statistics are
/// class-balanced (per-class means averaged) so that model selection
/// matches the balanced training stream instead of rewarding the
/// all-negative classifier on a mostly negative slice pool.
fn eval_images<E: Scalar>(
    config: &TrainConfig,
    params: &CnnParams<E>,
    cases: &[PreprocessedCase],
) -> Result<(f64, f64), PipelineError> {
    // per-class [neg, pos] accumulators
    let mut loss_sum = [0.0f64; 2];
    let mut correct = [0usize; 2];
    let mut count = [0usize; 2];
    for case in cases {
        let refs: Vec<&PreprocessedSlice> = case.slices.iter().collect();
        for (chunk, labels) in refs.chunks(32).zip(case.image_labels.chunks(32)) {
            let x = slices_to_tensor::<E>(chunk).detached();
            let p = cnn_forward(&x, &config.cnn, params)?.logit.sigmoid();
            for (s, &y) in p.data().iter().zip(labels) {
                let s = s.as_f64();
                let k = y as usize;
                // per-sample BCE with the same clamping as bce_loss
                let q = s.clamp(1e-7, 1.0 - 1e-7);
                loss_sum[k] -= if y == 1 { q.ln() } else { (1.0 - q).ln() };
                correct[k] += usize::from((s > config.threshold) == (y == 1));
                count[k] += 1;
            }
        }
    }
    let total = count[0] + count[1];
    if total == 0 {
        return Err(PipelineError::DegenerateTraining("no images to evaluate".into()));
    }
    if config.oversample_positive && count[0] > 0 && count[1] > 0 {
        let loss = (loss_sum[0] / count[0] as f64 + loss_sum[1] / count[1] as f64) / 2.0;
        let acc = (correct[0] as f64 / count[0] as f64 + correct[1] as f64 / count[1] as f64) / 2.0;
        Ok((loss, acc))
    } else {
        Ok((
            (loss_sum[0] + loss_sum[1]) / total as f64,
            (correct[0] + correct[1]) as f64 / total as f64,
        ))
    }
}

/// Phase 1: train the image-level CNN over seeded shuffled image
/// batches with augmentation, Adam with step decay, and early stopping
/// on validation image loss. Returns the best checkpoint and the log.
pub fn train_image_classifier<E: Scalar>(
    train: &[PreprocessedCase],
    val: &[PreprocessedCase],
    config: &TrainConfig,
) -> Result<(ModelCheckpoint, Vec<LogEntry>), PipelineError> {
    config.validate()?;
    if val.is_empty() {
        return Err(PipelineError::Param("validation set is empty".into()));
    }
    // (case, slice) index of every training image, split by label
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (ci, case) in train.iter().enumerate() {
        for (si, &y) in case.image_labels.iter().enumerate() {
            if y == 1 {
                positives.push((ci, si));
            } else {
                negatives.push((ci, si));
            }
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(PipelineError::DegenerateTraining(format!(
            "{} positive / {} negative training images",
            positives.len(),
            negatives.len()
        )));
    }

    let mut params = CnnParams::<E>::init(&config.cnn, config.fold_seed())?;
    let mut adam = AdamState::new(
        &params.params_mut(),
        AdamConfig {
            decay_period: config.decay_period,
            decay_gamma: config.decay_gamma,
            ..AdamConfig::with_lr(config.phase1.lr)
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.fold_seed().wrapping_add(1));

    let mut log = Vec::new();
    let mut best: Option<(f64, Vec<(String, Tensor<E>)>, u32)> = None;
    let mut stale = 0usize;
    for epoch in 0..config.phase1.epochs {
        // epoch stream: all negatives plus positives cycled up to parity
        let mut items: Vec<(usize, usize)> = if config.oversample_positive {
            let mut v = negatives.clone();
            v.extend(positives.iter().cycle().take(negatives.len()));
            v
        } else {
            positives.iter().chain(negatives.iter()).copied().collect()
        };
        items.shuffle(&mut rng);
        if let Some(cap) = config.batches_per_epoch {
            items.truncate(cap * config.phase1.batch);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        let mut seen = 0usize;
        for batch in items.chunks(config.phase1.batch) {
            let augmented: Vec<PreprocessedSlice> = batch
                .iter()
                .map(|&(ci, si)| augment(&train[ci].slices[si], &mut rng))
                .collect();
            let refs: Vec<&PreprocessedSlice> = augmented.iter().collect();
            let x = slices_to_tensor::<E>(&refs).detached();
            let labels: Vec<u8> = batch
                .iter()
                .map(|&(ci, si)| train[ci].image_labels[si])
                .collect();
            let p = cnn_forward(&x, &config.cnn, &params)?.logit.sigmoid();
            let loss = bce_loss(&p, &label_tensor(&labels))?;
            loss.backward()?;
            adam.step(&mut params.params_mut(), epoch)?;
            epoch_loss += loss.item().as_f64() * labels.len() as f64;
            for (s, &y) in p.data().iter().zip(&labels) {
                epoch_correct += usize::from((s.as_f64() > config.threshold) == (y == 1));
            }
            seen += labels.len();
        }
        let lr = adam.lr_at(epoch);
        log.push(LogEntry {
            epoch,
            split: "train".into(),
            loss: epoch_loss / seen as f64,
            acc: epoch_correct as f64 / seen as f64,
            lr,
        });

        let (val_loss, val_acc) = eval_images(config, &params, val)?;
        log.push(LogEntry { epoch, split: "val".into(), loss: val_loss, acc: val_acc, lr });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, params.named(), epoch as u32));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.phase1.patience {
                break;
            }
        }
    }

    let (_, named, best_epoch) = best.expect("at least one epoch ran");
    let ckpt = ModelCheckpoint::from_named(
        ArchDescriptor::Cnn(config.cnn.clone()),
        TrainMeta { epoch: best_epoch, seed: config.seed, fold: config.fold },
        &named,
    )?;
    Ok((ckpt, log))
}

/// Padded batch forward for the case classifier. `training` enables
/// dropout.
fn case_batch_scores<E: Scalar>(
    features: &[&Vec<Vec<E>>],
    clf: &CaseClassifierParams<E>,
    p_drop: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<E>, PipelineError> {
    let batch = features.len();
    let fd = clf.input_dim;
    let max_len = features.iter().map(|f| f.len()).max().unwrap();
    let valid_lens: Vec<usize> = features.iter().map(|f| f.len()).collect();
    let seq: Vec<Tensor<E>> = (0..max_len)
        .map(|t| {
            let mut data = Vec::with_capacity(batch * fd);
            for f in features {
                match f.get(t) {
                    Some(row) => data.extend_from_slice(row),
                    None => data.extend(std::iter::repeat_n(E::zero(), fd)),
                }
            }
            Tensor::new(&[batch, fd], data).expect("padded step")
        })
        .collect();
    let readout = crate::nn::blstm_forward(&seq, &clf.blstm.fwd, &clf.blstm.bwd, &valid_lens)?;
    let dropped = dropout(&readout, p_drop, training, rng)?;
    Ok(dropped.affine(&clf.head_weight, &clf.head_bias)?.sigmoid())
}

fn eval_cases<E: Scalar>(
    features: &[Vec<Vec<E>>],
    labels: &[u8],
    clf: &CaseClassifierParams<E>,
    threshold: f64,
) -> Result<(f64, f64), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused at inference
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for (chunk, ls) in features.chunks(8).zip(labels.chunks(8)) {
        let refs: Vec<&Vec<Vec<E>>> = chunk.iter().collect();
        let p = case_batch_scores(&refs, clf, 0.0, false, &mut rng)?;
        let loss = bce_loss(&p, &label_tensor(ls))?;
        total_loss += loss.item().as_f64() * ls.len() as f64;
        for (s, &y) in p.data().iter().zip(ls) {
            correct += usize::from((s.as_f64() > threshold) == (y == 1));
        }
    }
    Ok((
        total_loss / labels.len() as f64,
        correct as f64 / labels.len() as f64,
    ))
}

/// Phase 2: train the BLSTM case classifier on feature sequences from
/// the frozen CNN checkpoint. The CNN receives no updates.
pub fn train_case_classifier<E: Scalar>(
    cnn_ckpt: &ModelCheckpoint,
    train: &[PreprocessedCase],
    val: &[PreprocessedCase],
    config: &TrainConfig,
) -> Result<(ModelCheckpoint, Vec<LogEntry>), PipelineError> {
    config.validate()?;
    if val.is_empty() {
        return Err(PipelineError::Param("validation set is empty".into()));
    }
    let (cnn_config, cnn_params) = cnn_ckpt.restore_cnn::<E>()?;
    let featurize = |cases: &[PreprocessedCase]| -> Result<Vec<Vec<Vec<E>>>, PipelineError> {
        cases
            .iter()
            .map(|c| Ok(extract_case(&cnn_config, &cnn_params, c)?.features))
            .collect()
    };
    let train_feats = featurize(train)?;
    let val_feats = featurize(val)?;
    let train_labels: Vec<u8> = train.iter().map(|c| c.case_label).collect();
    let val_labels: Vec<u8> = val.iter().map(|c| c.case_label).collect();
    if !train_labels.contains(&1) || !train_labels.contains(&0) {
        return Err(PipelineError::DegenerateTraining(
            "training cases are single-class".into(),
        ));
    }

    let mut clf =
        CaseClassifierParams::<E>::init(cnn_config.feature_dim, config.hidden_units, config.fold_seed());
    let mut adam = AdamState::new(
        &clf.params_mut(),
        AdamConfig {
            decay_period: config.decay_period,
            decay_gamma: config.decay_gamma,
            ..AdamConfig::with_lr(config.phase2.lr)
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.fold_seed().wrapping_add(2));

    let mut log = Vec::new();
    let mut best: Option<(f64, Vec<(String, Tensor<E>)>, u32)> = None;
    let mut stale = 0usize;
    for epoch in 0..config.phase2.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for batch in order.chunks(config.phase2.batch) {
            let refs: Vec<&Vec<Vec<E>>> = batch.iter().map(|&i| &train_feats[i]).collect();
            let labels: Vec<u8> = batch.iter().map(|&i| train_labels[i]).collect();
            let p = case_batch_scores(&refs, &clf, config.dropout, true, &mut rng)?;
            let loss = bce_loss(&p, &label_tensor(&labels))?;
            loss.backward()?;
            adam.step(&mut clf.params_mut(), epoch)?;
            epoch_loss += loss.item().as_f64() * labels.len() as f64;
            for (s, &y) in p.data().iter().zip(&labels) {
                epoch_correct += usize::from((s.as_f64() > config.threshold) == (y == 1));
            }
        }
        let lr = adam.lr_at(epoch);
        log.push(LogEntry {
            epoch,
            split: "train".into(),
            loss: epoch_loss / train.len() as f64,
            acc: epoch_correct as f64 / train.len() as f64,
            lr,
        });

        let (val_loss, val_acc) = eval_cases(&val_feats, &val_labels, &clf, config.threshold)?;
        log.push(LogEntry { epoch, split: "val".into(), loss: val_loss, acc: val_acc, lr });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, clf.named(), epoch as u32));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.phase2.patience {
                break;
            }
        }
    }

    let (_, named, best_epoch) = best.expect("at least one epoch ran");
    let ckpt = ModelCheckpoint::from_named(
        ArchDescriptor::Blstm {
            input_dim: cnn_config.feature_dim,
            hidden_dim: config.hidden_units,
        },
        TrainMeta { epoch: best_epoch, seed: config.seed, fold: config.fold },
        &named,
    )?;
    Ok((ckpt, log))
}
