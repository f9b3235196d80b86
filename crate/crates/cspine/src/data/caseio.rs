//! Binary case-file format.
//!
//! Layout: magic "CSVL", u16 version, u32 N, u32 H, u32 W, case label u8,
//! N image-label bytes, per-slice box tables (count u16, boxes as four
//! u16: r0 r1 c0 c1), N*H*W little-endian i16 HU values, CRC32 over all
//! preceding bytes. All integers little-endian.

use std::path::Path;

use crate::preprocess::HuSlice;

use super::{DataError, FractureBox, HUVolume, Sex};

pub const CASE_MAGIC: &[u8; 4] = b"CSVL";
pub const CASE_VERSION: u16 = 1;

pub fn write_case(path: &Path, volume: &HUVolume) -> Result<(), DataError> {
    volume.check_label_consistency()?;
    let n = volume.slices.len();
    if n == 0 {
        return Err(DataError::Param("volume has no slices".into()));
    }
    let h = volume.slices[0].height;
    let w = volume.slices[0].width;
    if volume.slices.iter().any(|s| s.height != h || s.width != w) {
        return Err(DataError::Param("slices differ in dimensions".into()));
    }
    if volume.image_labels.len() != n || volume.fracture_boxes.len() != n {
        return Err(DataError::Param("label/box tables do not match N".into()));
    }

    let mut buf: Vec<u8> = Vec::with_capacity(32 + n * h * w * 2);
    buf.extend_from_slice(CASE_MAGIC);
    buf.extend_from_slice(&CASE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.push(volume.case_label);
    buf.extend_from_slice(&volume.image_labels);
    for boxes in &volume.fracture_boxes {
        buf.extend_from_slice(&(boxes.len() as u16).to_le_bytes());
        for b in boxes {
            for v in [b.r0, b.r1, b.c0, b.c1] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for slice in &volume.slices {
        for &px in &slice.pixels {
            buf.extend_from_slice(&px.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Format("truncated case file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i16(&mut self) -> Result<i16, DataError> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

/// Read a case file. Demographics are not stored in the file (the
/// manifest owns them); they come back zeroed, and the case id is taken
/// from the file stem.
pub fn read_case(path: &Path) -> Result<HUVolume, DataError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 2 + 12 + 1 + 4 {
        return Err(DataError::Format("file too short".into()));
    }
    let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(DataError::Format(format!(
            "CRC mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }

    let mut r = Reader { bytes: payload, pos: 0 };
    if r.take(4)? != CASE_MAGIC {
        return Err(DataError::Format("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CASE_VERSION {
        return Err(DataError::Format(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(DataError::Format("zero dimension in header".into()));
    }
    let case_label = r.u8()?;
    let image_labels = r.take(n)?.to_vec();
    let mut fracture_boxes = Vec::with_capacity(n);
    for _ in 0..n {
        let count = r.u16()? as usize;
        let mut boxes = Vec::with_capacity(count);
        for _ in 0..count {
            boxes.push(FractureBox {
                r0: r.u16()?,
                r1: r.u16()?,
                c0: r.u16()?,
                c1: r.u16()?,
            });
        }
        fracture_boxes.push(boxes);
    }
    let mut slices = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pixels = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            pixels.push(r.i16()?);
        }
        slices.push(HuSlice::new(h, w, pixels));
    }
    if r.pos != payload.len() {
        return Err(DataError::Format("trailing bytes after payload".into()));
    }

    let case_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    let volume = HUVolume {
        case_id,
        slices,
        image_labels,
        case_label,
        fracture_boxes,
        age: 0.0,
        sex: Sex::Female,
    };
    volume.check_label_consistency().map_err(|e| match e {
        DataError::Param(m) => DataError::Format(m),
        other => other,
    })?;
    Ok(volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_case;

    fn roundtrip(volume: &HUVolume) -> HUVolume {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("{}.csvl", volume.case_id));
        write_case(&path, volume).unwrap();
        read_case(&path).unwrap()
    }

    #[test]
    fn write_read_roundtrip_is_lossless() {
        for (seed, positive) in [(1u64, true), (2, false), (3, true)] {
            let v = generate_case(seed, positive, 6, 32).unwrap();
            let back = roundtrip(&v);
            assert_eq!(back.slices, v.slices);
            assert_eq!(back.image_labels, v.image_labels);
            assert_eq!(back.case_label, v.case_label);
            assert_eq!(back.fracture_boxes, v.fracture_boxes);
        }
    }

    #[test]
    fn flipped_payload_byte_fails_crc() {
        let v = generate_case(7, true, 5, 32).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csvl");
        write_case(&path, &v).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        match read_case(&path) {
            Err(DataError::Format(msg)) => assert!(msg.contains("CRC")),
            other => panic!("expected CRC failure, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let v = generate_case(9, false, 4, 32).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csvl");
        write_case(&path, &v).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        // re-seal so the CRC passes and the magic check itself fires
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        match read_case(&path) {
            Err(DataError::Format(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let v = generate_case(11, true, 4, 32).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csvl");
        write_case(&path, &v).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
        assert!(matches!(read_case(&path), Err(DataError::Format(_))));
    }

    #[test]
    fn roundtrip_many_random_volumes() {
        for seed in 0..100u64 {
            let positive = seed % 3 != 0;
            let v = generate_case(seed, positive, 4 + (seed % 4) as usize, 32).unwrap();
            let back = roundtrip(&v);
            assert_eq!(back.slices, v.slices, "seed {seed}");
            assert_eq!(back.fracture_boxes, v.fracture_boxes, "seed {seed}");
        }
    }
}
