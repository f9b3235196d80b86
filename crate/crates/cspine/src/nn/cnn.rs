//! Residual CNN feature extractor with an image-level classification head.
//!
//! Stand-in for the full-scale backbone: a configurable stack of
//! conv-relu-conv residual blocks, global average pooling to a feature
//! vector, and an affine head producing one logit per image. The final
//! stage's activation maps are returned for Grad-CAM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_fan_in, NnError};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Architecture of the residual CNN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualCnnConfig {
    pub in_channels: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub input_side: usize,
    pub feature_dim: usize,
}

impl Default for ResidualCnnConfig {
    /// Desk-scale default: 3 stages of one block each, 64x64 input,
    /// 64-wide features.
    fn default() -> Self {
        ResidualCnnConfig {
            in_channels: 3,
            stage_widths: vec![8, 16, 64],
            blocks_per_stage: vec![1, 1, 1],
            input_side: 64,
            feature_dim: 64,
        }
    }
}

impl ResidualCnnConfig {
    /// Preset mirroring the full-scale backbone's 2048-wide features.
    pub fn full_scale() -> Self {
        ResidualCnnConfig {
            in_channels: 3,
            stage_widths: vec![256, 512, 1024, 2048],
            blocks_per_stage: vec![3, 4, 6, 3],
            input_side: 384,
            feature_dim: 2048,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.blocks_per_stage.len() {
            return Err(NnError::Param(format!(
                "stage_widths ({}) and blocks_per_stage ({}) must be equal-length and nonempty",
                self.stage_widths.len(),
                self.blocks_per_stage.len()
            )));
        }
        if self.in_channels == 0
            || self.input_side == 0
            || self.stage_widths.iter().any(|&w| w == 0)
            || self.blocks_per_stage.iter().any(|&b| b == 0)
        {
            return Err(NnError::Param("all extents must be positive".into()));
        }
        if self.feature_dim != *self.stage_widths.last().unwrap() {
            return Err(NnError::Param(format!(
                "feature_dim {} must equal final stage width {}",
                self.feature_dim,
                self.stage_widths.last().unwrap()
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct ConvParams<E: Scalar> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Scalar> ConvParams<E> {
    fn init(out_ch: usize, in_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvParams {
            weight: uniform_fan_in(&[out_ch, in_ch, k, k], in_ch * k * k, rng),
            bias: uniform_fan_in(&[out_ch], in_ch * k * k, rng),
        }
    }
}

/// One residual unit: conv3x3-relu-conv3x3 plus shortcut, relu after add.
/// The shortcut is identity unless channels or resolution change, in which
/// case it is a strided 1x1 convolution.
#[derive(Clone)]
pub struct BlockParams<E: Scalar> {
    pub conv1: ConvParams<E>,
    pub conv2: ConvParams<E>,
    pub shortcut: Option<ConvParams<E>>,
    pub stride: usize,
}

impl<E: Scalar> BlockParams<E> {
    fn init(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let shortcut = if in_ch != out_ch || stride != 1 {
            Some(ConvParams::init(out_ch, in_ch, 1, rng))
        } else {
            None
        };
        BlockParams {
            conv1: ConvParams::init(out_ch, in_ch, 3, rng),
            conv2: ConvParams::init(out_ch, out_ch, 3, rng),
            shortcut,
            stride,
        }
    }
}

/// All parameters of the CNN, in a fixed named order.
#[derive(Clone)]
pub struct CnnParams<E: Scalar> {
    pub stem: ConvParams<E>,
    pub stages: Vec<Vec<BlockParams<E>>>,
    pub head_weight: Tensor<E>,
    pub head_bias: Tensor<E>,
}

impl<E: Scalar> CnnParams<E> {
    /// Zero-valued parameters with the config's shapes; used as the
    /// template for checkpoint validation and restore.
    pub fn zeros(config: &ResidualCnnConfig) -> Result<Self, NnError> {
        let mut p = Self::init(config, 0)?;
        for t in p.params_mut() {
            *t = Tensor::param(t.shape(), vec![E::zero(); t.len()]).expect("same shape");
        }
        Ok(p)
    }

    pub fn init(config: &ResidualCnnConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = ConvParams::init(config.stage_widths[0], config.in_channels, 3, &mut rng);
        let mut stages = Vec::new();
        let mut in_ch = config.stage_widths[0];
        for (&width, &blocks) in config.stage_widths.iter().zip(&config.blocks_per_stage) {
            let mut stage = Vec::new();
            for b in 0..blocks {
                // every stage halves the spatial extent in its first block
                let stride = if b == 0 { 2 } else { 1 };
                stage.push(BlockParams::init(in_ch, width, stride, &mut rng));
                in_ch = width;
            }
            stages.push(stage);
        }
        let head_weight = uniform_fan_in(&[config.feature_dim, 1], config.feature_dim, &mut rng);
        let head_bias = uniform_fan_in(&[1], config.feature_dim, &mut rng);
        Ok(CnnParams {
            stem,
            stages,
            head_weight,
            head_bias,
        })
    }

    /// Parameters in checkpoint order with their canonical names.
    pub fn named(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = vec![
            ("stem.w".to_string(), self.stem.weight.clone()),
            ("stem.b".to_string(), self.stem.bias.clone()),
        ];
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                let p = format!("stage{s}.block{b}");
                out.push((format!("{p}.conv1.w"), block.conv1.weight.clone()));
                out.push((format!("{p}.conv1.b"), block.conv1.bias.clone()));
                out.push((format!("{p}.conv2.w"), block.conv2.weight.clone()));
                out.push((format!("{p}.conv2.b"), block.conv2.bias.clone()));
                if let Some(sc) = &block.shortcut {
                    out.push((format!("{p}.shortcut.w"), sc.weight.clone()));
                    out.push((format!("{p}.shortcut.b"), sc.bias.clone()));
                }
            }
        }
        out.push(("head.w".to_string(), self.head_weight.clone()));
        out.push(("head.b".to_string(), self.head_bias.clone()));
        out
    }

    /// Mutable references in the same order as [`CnnParams::named`],
    /// for optimizer updates and checkpoint restore.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<E>> {
        let mut out: Vec<&mut Tensor<E>> = vec![&mut self.stem.weight, &mut self.stem.bias];
        for stage in &mut self.stages {
            for block in stage {
                out.push(&mut block.conv1.weight);
                out.push(&mut block.conv1.bias);
                out.push(&mut block.conv2.weight);
                out.push(&mut block.conv2.bias);
                if let Some(sc) = &mut block.shortcut {
                    out.push(&mut sc.weight);
                    out.push(&mut sc.bias);
                }
            }
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }
}

/// relu(conv-relu-conv(x) + shortcut(x)).
pub fn residual_block<E: Scalar>(
    x: &Tensor<E>,
    params: &BlockParams<E>,
) -> Result<Tensor<E>, TensorError> {
    let branch = x
        .conv2d(&params.conv1.weight, &params.conv1.bias, params.stride, 1)?
        .relu()
        .conv2d(&params.conv2.weight, &params.conv2.bias, 1, 1)?;
    let shortcut = match &params.shortcut {
        Some(sc) => x.conv2d(&sc.weight, &sc.bias, params.stride, 0)?,
        None => x.clone(),
    };
    Ok(branch.add(&shortcut)?.relu())
}

/// Outputs of a full CNN forward pass.
pub struct CnnForward<E: Scalar> {
    /// Pooled per-image feature vectors, [N, feature_dim].
    pub features: Tensor<E>,
    /// Image-level logits, [N, 1].
    pub logit: Tensor<E>,
    /// Final-stage activation maps, retained for Grad-CAM.
    pub last_maps: Tensor<E>,
}

/// Stem conv -> residual stages -> global average pool -> affine head.
pub fn cnn_forward<E: Scalar>(
    x: &Tensor<E>,
    config: &ResidualCnnConfig,
    params: &CnnParams<E>,
) -> Result<CnnForward<E>, TensorError> {
    match x.shape() {
        [_, c, h, w] if *c == config.in_channels && *h == config.input_side && *w == config.input_side => {}
        other => {
            return Err(TensorError::shape(format!(
                "cnn_forward: expected [N,{},{},{}], got {:?}",
                config.in_channels, config.input_side, config.input_side, other
            )))
        }
    }
    let mut t = x.conv2d(&params.stem.weight, &params.stem.bias, 1, 1)?.relu();
    for stage in &params.stages {
        for block in stage {
            t = residual_block(&t, block)?;
        }
    }
    let last_maps = t;
    let features = last_maps.global_avg_pool()?;
    let logit = features.affine(&params.head_weight, &params.head_bias)?;
    Ok(CnnForward {
        features,
        logit,
        last_maps,
    })
}
