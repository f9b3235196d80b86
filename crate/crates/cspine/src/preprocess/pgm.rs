//! Binary PGM (P5) export for visual inspection.

use std::io::Write;
use std::path::Path;

/// Write a [0,1] image as an 8-bit binary PGM.
pub fn write_pgm(path: &Path, data: &[f64], height: usize, width: usize) -> std::io::Result<()> {
    assert_eq!(data.len(), height * width);
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&path, &[0.0, 1.0, 0.5, 0.25], 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 64]);
    }
}
