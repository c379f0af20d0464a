//! VXF1: the engine's flat binary dump for intermediate pipeline stages.
//!
//! Layout, little-endian: magic `VXF1`, 3 x u32 dims, 3 x f32 spacing,
//! then nx*ny*nz f32 voxels in the engine's x-fastest order. Spacing is
//! stored at f32 precision.

use crate::volume::{Volume3, VolumeError};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"VXF1";

#[derive(Debug, Error)]
pub enum VxfError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a VXF1 file: bad magic")]
    BadMagic,
    #[error("truncated VXF1 file: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub fn write_vxf(v: &Volume3, path: impl AsRef<Path>) -> Result<(), VxfError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let (nx, ny, nz) = v.dims();
    for n in [nx, ny, nz] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    let (sx, sy, sz) = v.spacing();
    for s in [sx, sy, sz] {
        w.write_all(&(s as f32).to_le_bytes())?;
    }
    for &x in v.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vxf(path: impl AsRef<Path>) -> Result<Volume3, VxfError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(VxfError::BadMagic);
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let dims = (u32_at(4) as usize, u32_at(8) as usize, u32_at(12) as usize);
    let spacing = (f32_at(16) as f64, f32_at(20) as f64, f32_at(24) as f64);
    let expected = 28 + dims.0 * dims.1 * dims.2 * 4;
    if bytes.len() != expected {
        return Err(VxfError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    let data = bytes[28..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Volume3::new(dims, spacing, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vxf");
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        let v = Volume3::new((2, 3, 4), (0.5, 1.0, 1.5), data).unwrap();
        write_vxf(&v, &path).unwrap();
        assert_eq!(read_vxf(&path).unwrap(), v);
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vxf");
        std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
        assert!(matches!(read_vxf(&path), Err(VxfError::BadMagic)));
    }

    #[test]
    fn truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vxf");
        let v = Volume3::zeros((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        write_vxf(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_vxf(&path), Err(VxfError::Truncated { .. })));
    }
}
