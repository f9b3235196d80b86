//! Binary model checkpoints.
//!
//! Layout: magic `CSPN`, u16 version, length-prefixed JSON descriptor
//! (architecture + training metadata), u32 tensor count, then per tensor
//! a length-prefixed UTF-8 name, u8 rank, u32 dims, and raw 32-bit
//! little-endian values; a CRC32 of everything after the magic closes
//! the file. All integers little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::{CnnParams, ResidualCnnConfig};
use super::lstm::CaseClassifierParams;
use super::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSPN";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchDescriptor {
    Cnn(ResidualCnnConfig),
    Blstm { input_dim: usize, hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub epoch: u32,
    pub seed: u64,
    pub fold: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub version: u16,
    pub arch: ArchDescriptor,
    pub meta: TrainMeta,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchDescriptor,
    meta: TrainMeta,
}

/// Canonical (name, shape) list the architecture demands.
fn expected_entries(arch: &ArchDescriptor) -> Result<Vec<(String, Vec<usize>)>, NnError> {
    let named: Vec<(String, Tensor<f32>)> = match arch {
        ArchDescriptor::Cnn(config) => CnnParams::<f32>::zeros(config)?.named(),
        ArchDescriptor::Blstm {
            input_dim,
            hidden_dim,
        } => CaseClassifierParams::<f32>::zeros(*input_dim, *hidden_dim).named(),
    };
    Ok(named
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect())
}

impl ModelCheckpoint {
    pub fn from_named<E: Scalar>(
        arch: ArchDescriptor,
        meta: TrainMeta,
        named: &[(String, Tensor<E>)],
    ) -> Result<Self, NnError> {
        let ckpt = ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            arch,
            meta,
            tensors: named
                .iter()
                .map(|(n, t)| NamedTensor {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                    values: t
                        .data()
                        .iter()
                        .map(|v| f32::from_le_bytes(v.to_f32_le()))
                        .collect(),
                })
                .collect(),
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Check the tensor table against the architecture descriptor:
    /// exactly one entry per expected parameter, with matching shape.
    pub fn validate(&self) -> Result<(), NnError> {
        let expected = expected_entries(&self.arch)?;
        if self.tensors.len() != expected.len() {
            return Err(NnError::CorruptCheckpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), entry) in expected.iter().zip(&self.tensors) {
            if &entry.name != name {
                return Err(NnError::CorruptCheckpoint(format!(
                    "expected tensor '{name}', found '{}'",
                    entry.name
                )));
            }
            if &entry.shape != shape {
                return Err(NnError::CorruptCheckpoint(format!(
                    "tensor '{name}': shape {:?} does not match architecture shape {shape:?}",
                    entry.shape
                )));
            }
            let n: usize = shape.iter().product();
            if entry.values.len() != n {
                return Err(NnError::CorruptCheckpoint(format!(
                    "tensor '{name}': {} values for shape {shape:?}",
                    entry.values.len()
                )));
            }
        }
        Ok(())
    }

    /// Rebuild tensors in table order at the requested precision.
    pub fn to_tensors<E: Scalar>(&self) -> Vec<Tensor<E>> {
        self.tensors
            .iter()
            .map(|t| {
                let data: Vec<E> = t.values.iter().map(|&v| E::from_f64(v as f64)).collect();
                Tensor::param(&t.shape, data).expect("validated shape")
            })
            .collect()
    }

    pub fn restore_cnn<E: Scalar>(&self) -> Result<(ResidualCnnConfig, CnnParams<E>), NnError> {
        let config = match &self.arch {
            ArchDescriptor::Cnn(c) => c.clone(),
            other => {
                return Err(NnError::CorruptCheckpoint(format!(
                    "expected a CNN checkpoint, found {other:?}"
                )))
            }
        };
        self.validate()?;
        let mut params = CnnParams::<E>::zeros(&config)?;
        for (slot, restored) in params.params_mut().into_iter().zip(self.to_tensors()) {
            *slot = restored;
        }
        Ok((config, params))
    }

    pub fn restore_blstm<E: Scalar>(&self) -> Result<CaseClassifierParams<E>, NnError> {
        let (input_dim, hidden_dim) = match &self.arch {
            ArchDescriptor::Blstm {
                input_dim,
                hidden_dim,
            } => (*input_dim, *hidden_dim),
            other => {
                return Err(NnError::CorruptCheckpoint(format!(
                    "expected a BLSTM checkpoint, found {other:?}"
                )))
            }
        };
        self.validate()?;
        let mut params = CaseClassifierParams::<E>::zeros(input_dim, hidden_dim);
        for (slot, restored) in params.params_mut().into_iter().zip(self.to_tensors()) {
            *slot = restored;
        }
        Ok(params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let payload_start = buf.len();
        buf.extend_from_slice(&self.version.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            arch: self.arch.clone(),
            meta: self.meta,
        })
        .expect("serializable header");
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(t.name.as_bytes());
            buf.push(t.shape.len() as u8);
            for &d in &t.shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf[payload_start..]);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NnError::Format(format!("bad magic {magic:02x?}")));
        }
        if bytes.len() < 8 {
            return Err(NnError::CorruptCheckpoint("truncated file".into()));
        }
        let crc_stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let crc_actual = crc32fast::hash(&bytes[4..bytes.len() - 4]);
        if crc_stored != crc_actual {
            return Err(NnError::CorruptCheckpoint(format!(
                "CRC mismatch: stored {crc_stored:08x}, computed {crc_actual:08x}"
            )));
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let header_len = r.u32("header length")? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| NnError::CorruptCheckpoint(format!("bad header JSON: {e}")))?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
                .map_err(|e| NnError::CorruptCheckpoint(format!("bad tensor name: {e}")))?;
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dim")? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(4 * n, &format!("values of '{name}'"))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                name,
                shape,
                values,
            });
        }
        let ckpt = ModelCheckpoint {
            version,
            arch: header.arch,
            meta: header.meta,
            tensors,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.validate()?;
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::CorruptCheckpoint(format!(
                "truncated while reading {what}"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, NnError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelCheckpoint {
        let config = ResidualCnnConfig {
            in_channels: 1,
            stage_widths: vec![2],
            blocks_per_stage: vec![1],
            input_side: 4,
            feature_dim: 2,
        };
        let params = CnnParams::<f32>::init(&config, 99).unwrap();
        ModelCheckpoint::from_named(
            ArchDescriptor::Cnn(config),
            TrainMeta {
                epoch: 3,
                seed: 99,
                fold: 1,
            },
            &params.named(),
        )
        .unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ckpt = sample();
        let bytes1 = ckpt.to_bytes();
        let loaded = ModelCheckpoint::from_bytes(&bytes1).unwrap();
        let bytes2 = loaded.to_bytes();
        assert_eq!(bytes1, bytes2);
        assert_eq!(loaded, ckpt);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = sample().to_bytes();
        let err = ModelCheckpoint::from_bytes(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, NnError::CorruptCheckpoint(_)));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bytes),
            Err(NnError::Format(_))
        ));
    }

    #[test]
    fn tampered_shape_names_the_tensor() {
        let mut ckpt = sample();
        ckpt.tensors[0].shape = vec![1, 1, 3, 3];
        let err = ckpt.validate().unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("stem.w"), "{msg}");
    }

    #[test]
    fn flipped_payload_byte_fails_crc() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = ModelCheckpoint::from_bytes(&bytes).unwrap_err();
        assert!(format!("{err}").contains("CRC"));
    }

    #[test]
    fn restore_round_trips_parameter_bits() {
        let ckpt = sample();
        let (config, params) = ckpt.restore_cnn::<f32>().unwrap();
        let again = ModelCheckpoint::from_named(
            ArchDescriptor::Cnn(config),
            ckpt.meta,
            &params.named(),
        )
        .unwrap();
        assert_eq!(ckpt.to_bytes(), again.to_bytes());
    }

    #[test]
    fn blstm_checkpoint_round_trip() {
        let params = CaseClassifierParams::<f32>::init(4, 3, 7);
        let ckpt = ModelCheckpoint::from_named(
            ArchDescriptor::Blstm {
                input_dim: 4,
                hidden_dim: 3,
            },
            TrainMeta::default(),
            &params.named(),
        )
        .unwrap();
        let loaded = ModelCheckpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        let restored = loaded.restore_blstm::<f32>().unwrap();
        assert_eq!(
            restored.head_weight.data(),
            params.head_weight.data()
        );
        assert_eq!(restored.blstm.fwd.w_i.data(), params.blstm.fwd.w_i.data());
    }
}
