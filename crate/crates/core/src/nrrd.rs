//! NRRD volume I/O.
//!
//! Supports the subset the skull datasets ship in: 3-D scalar grids of
//! uint8/int16/float32, raw or gzip encoded, little-endian. Spacing is read
//! from `space directions` (must be axis-aligned) or `spacings` and defaults
//! to 1 mm. Detached headers and other exotica are rejected with the
//! offending header field named.

use crate::volume::{Volume3, VolumeError};
use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NrrdError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an NRRD file: missing NRRD magic")]
    BadMagic,
    #[error("unsupported NRRD {field}: {value:?}")]
    Unsupported { field: &'static str, value: String },
    #[error("malformed NRRD {field}: {value:?}")]
    Malformed { field: &'static str, value: String },
    #[error("missing required NRRD field {0:?}")]
    MissingField(&'static str),
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("values not representable as {ty}: voxel {index} is {value}")]
    NotRepresentable {
        ty: &'static str,
        index: usize,
        value: f32,
    },
}

/// Scalar type of the on-disk payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrrdType {
    Uint8,
    Int16,
    Float32,
}

impl NrrdType {
    fn byte_size(self) -> usize {
        match self {
            NrrdType::Uint8 => 1,
            NrrdType::Int16 => 2,
            NrrdType::Float32 => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            NrrdType::Uint8 => "uint8",
            NrrdType::Int16 => "short",
            NrrdType::Float32 => "float",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrrdEncoding {
    Raw,
    Gzip,
}

fn parse_type(value: &str) -> Result<NrrdType, NrrdError> {
    match value {
        "uchar" | "unsigned char" | "uint8" | "uint8_t" => Ok(NrrdType::Uint8),
        "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
            Ok(NrrdType::Int16)
        }
        "float" | "float32" => Ok(NrrdType::Float32),
        _ => Err(NrrdError::Unsupported {
            field: "type",
            value: value.to_string(),
        }),
    }
}

fn parse_encoding(value: &str) -> Result<NrrdEncoding, NrrdError> {
    match value {
        "raw" => Ok(NrrdEncoding::Raw),
        "gzip" | "gz" => Ok(NrrdEncoding::Gzip),
        _ => Err(NrrdError::Unsupported {
            field: "encoding",
            value: value.to_string(),
        }),
    }
}

/// Parse `space directions: (sx,0,0) (0,sy,0) (0,0,sz)` into spacing.
fn parse_space_directions(value: &str) -> Result<(f64, f64, f64), NrrdError> {
    let malformed = || NrrdError::Malformed {
        field: "space directions",
        value: value.to_string(),
    };
    let mut vectors = Vec::new();
    for tok in value.split(')').map(str::trim).filter(|t| !t.is_empty()) {
        let tok = tok.trim_start_matches(|c: char| c == '(' || c.is_whitespace());
        if tok == "none" {
            continue;
        }
        let comps: Vec<f64> = tok
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed())?;
        if comps.len() != 3 {
            return Err(malformed());
        }
        vectors.push(comps);
    }
    if vectors.len() != 3 {
        return Err(malformed());
    }
    let mut spacing = [0.0f64; 3];
    for (axis, v) in vectors.iter().enumerate() {
        for (j, &c) in v.iter().enumerate() {
            if j == axis {
                spacing[axis] = c.abs();
            } else if c != 0.0 {
                return Err(NrrdError::Unsupported {
                    field: "space directions",
                    value: format!("non-axis-aligned direction {value:?}"),
                });
            }
        }
    }
    Ok((spacing[0], spacing[1], spacing[2]))
}

/// Read a 3-D scalar NRRD volume.
pub fn load_nrrd(path: impl AsRef<Path>) -> Result<Volume3, NrrdError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    load_nrrd_bytes(&bytes)
}

pub fn load_nrrd_bytes(bytes: &[u8]) -> Result<Volume3, NrrdError> {
    // Header is ASCII lines up to the first blank line.
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or(NrrdError::Malformed {
                field: "header",
                value: "no blank line terminating the header".to_string(),
            })?;
        let line = std::str::from_utf8(&bytes[pos..line_end])
            .map_err(|_| NrrdError::BadMagic)?
            .trim_end_matches('\r');
        pos = line_end + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line.to_string());
    }
    if lines.is_empty() || !lines[0].starts_with("NRRD") {
        return Err(NrrdError::BadMagic);
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut ty: Option<NrrdType> = None;
    let mut encoding: Option<NrrdEncoding> = None;
    let mut spacing = (1.0f64, 1.0, 1.0);

    for line in &lines[1..] {
        if line.starts_with('#') {
            continue;
        }
        // "key:=value" pairs are metadata we can ignore; fields are "key: value".
        if let Some(idx) = line.find(":=") {
            let _ = idx;
            continue;
        }
        let Some(idx) = line.find(':') else { continue };
        let key = line[..idx].trim().to_ascii_lowercase();
        let value = line[idx + 1..].trim();
        match key.as_str() {
            "dimension" => {
                if value != "3" {
                    return Err(NrrdError::Unsupported {
                        field: "dimension",
                        value: value.to_string(),
                    });
                }
            }
            "sizes" => {
                let s: Vec<usize> = value
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| NrrdError::Malformed {
                        field: "sizes",
                        value: value.to_string(),
                    })?;
                if s.len() != 3 {
                    return Err(NrrdError::Malformed {
                        field: "sizes",
                        value: value.to_string(),
                    });
                }
                dims = Some((s[0], s[1], s[2]));
            }
            "type" => ty = Some(parse_type(value)?),
            "encoding" => encoding = Some(parse_encoding(value)?),
            "endian" => {
                if value.eq_ignore_ascii_case("big") {
                    return Err(NrrdError::Unsupported {
                        field: "endian",
                        value: value.to_string(),
                    });
                }
            }
            "spacings" => {
                let s: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| NrrdError::Malformed {
                        field: "spacings",
                        value: value.to_string(),
                    })?;
                if s.len() != 3 {
                    return Err(NrrdError::Malformed {
                        field: "spacings",
                        value: value.to_string(),
                    });
                }
                spacing = (s[0], s[1], s[2]);
            }
            "space directions" => spacing = parse_space_directions(value)?,
            "data file" | "datafile" => {
                return Err(NrrdError::Unsupported {
                    field: "data file",
                    value: value.to_string(),
                });
            }
            _ => {}
        }
    }

    let dims = dims.ok_or(NrrdError::MissingField("sizes"))?;
    let ty = ty.ok_or(NrrdError::MissingField("type"))?;
    let encoding = encoding.ok_or(NrrdError::MissingField("encoding"))?;

    // The header is untrusted; refuse size products that overflow.
    let expected = dims
        .0
        .checked_mul(dims.1)
        .and_then(|v| v.checked_mul(dims.2))
        .and_then(|v| v.checked_mul(ty.byte_size()))
        .ok_or_else(|| NrrdError::Malformed {
            field: "sizes",
            value: format!("{} {} {}", dims.0, dims.1, dims.2),
        })?;
    let payload: Vec<u8> = match encoding {
        NrrdEncoding::Raw => bytes[pos..].to_vec(),
        NrrdEncoding::Gzip => {
            let mut out = Vec::new();
            GzDecoder::new(&bytes[pos..]).read_to_end(&mut out)?;
            out
        }
    };
    if payload.len() != expected {
        return Err(NrrdError::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }

    let data: Vec<f32> = match ty {
        NrrdType::Uint8 => payload.iter().map(|&b| b as f32).collect(),
        NrrdType::Int16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        NrrdType::Float32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    Ok(Volume3::new(dims, spacing, data)?)
}

/// Write a volume as NRRD with explicit type and encoding.
///
/// Output bytes are a pure function of the volume and options (gzip mtime is
/// pinned), so identical volumes produce identical files.
pub fn save_nrrd_with(
    v: &Volume3,
    path: impl AsRef<Path>,
    ty: NrrdType,
    encoding: NrrdEncoding,
) -> Result<(), NrrdError> {
    let bytes = nrrd_bytes(v, ty, encoding)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn nrrd_bytes(v: &Volume3, ty: NrrdType, encoding: NrrdEncoding) -> Result<Vec<u8>, NrrdError> {
    let (nx, ny, nz) = v.dims();
    let (sx, sy, sz) = v.spacing();
    let mut header = String::new();
    header.push_str("NRRD0004\n");
    header.push_str(&format!("type: {}\n", ty.name()));
    header.push_str("dimension: 3\n");
    header.push_str(&format!("sizes: {nx} {ny} {nz}\n"));
    header.push_str(&format!("spacings: {sx} {sy} {sz}\n"));
    if ty != NrrdType::Uint8 {
        header.push_str("endian: little\n");
    }
    header.push_str(match encoding {
        NrrdEncoding::Raw => "encoding: raw\n",
        NrrdEncoding::Gzip => "encoding: gzip\n",
    });
    header.push('\n');

    let mut payload = Vec::with_capacity(v.voxel_count() * ty.byte_size());
    match ty {
        NrrdType::Uint8 => {
            for (index, &value) in v.data().iter().enumerate() {
                if !(0.0..=255.0).contains(&value) || value.fract() != 0.0 {
                    return Err(NrrdError::NotRepresentable {
                        ty: "uint8",
                        index,
                        value,
                    });
                }
                payload.push(value as u8);
            }
        }
        NrrdType::Int16 => {
            for (index, &value) in v.data().iter().enumerate() {
                if value < i16::MIN as f32 || value > i16::MAX as f32 || value.fract() != 0.0 {
                    return Err(NrrdError::NotRepresentable {
                        ty: "short",
                        index,
                        value,
                    });
                }
                payload.extend_from_slice(&(value as i16).to_le_bytes());
            }
        }
        NrrdType::Float32 => {
            for &value in v.data() {
                payload.extend_from_slice(&value.to_le_bytes());
            }
        }
    }

    let mut out = header.into_bytes();
    match encoding {
        NrrdEncoding::Raw => out.extend_from_slice(&payload),
        NrrdEncoding::Gzip => {
            let mut enc = GzBuilder::new()
                .mtime(0)
                .write(&mut out, Compression::new(6));
            enc.write_all(&payload)?;
            enc.finish()?;
        }
    }
    Ok(out)
}

/// Default writer: float32 payload, gzip encoded.
pub fn save_nrrd(v: &Volume3, path: impl AsRef<Path>) -> Result<(), NrrdError> {
    save_nrrd_with(v, path, NrrdType::Float32, NrrdEncoding::Gzip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_header_round() {
        let mut bytes =
            b"NRRD0004\ndimension: 3\nsizes: 2 2 2\ntype: uint8\nencoding: raw\n\n".to_vec();
        bytes.extend_from_slice(&[1u8; 8]);
        let v = load_nrrd_bytes(&bytes).unwrap();
        assert_eq!(v.dims(), (2, 2, 2));
        assert_eq!(v.spacing(), (1.0, 1.0, 1.0));
        assert!(v.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut bytes =
            b"NRRD0004\ndimension: 3\nsizes: 2 2 2\ntype: uint8\nencoding: raw\n\n".to_vec();
        bytes.extend_from_slice(&[1u8; 7]);
        match load_nrrd_bytes(&bytes) {
            Err(NrrdError::TruncatedPayload {
                expected: 8,
                got: 7,
            }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_fields_are_named() {
        let bytes = b"NRRD0004\ndimension: 4\nsizes: 2 2 2 2\ntype: uint8\nencoding: raw\n\n";
        match load_nrrd_bytes(bytes) {
            Err(NrrdError::Unsupported {
                field: "dimension", ..
            }) => {}
            other => panic!("{other:?}"),
        }
        let bytes = b"NRRD0004\ndimension: 3\nsizes: 2 2 2\ntype: double\nencoding: raw\n\n";
        match load_nrrd_bytes(bytes) {
            Err(NrrdError::Unsupported { field: "type", .. }) => {}
            other => panic!("{other:?}"),
        }
        let bytes = b"NRRD0004\ndimension: 3\nsizes: 2 2 2\ntype: uint8\nencoding: hex\n\n";
        match load_nrrd_bytes(bytes) {
            Err(NrrdError::Unsupported {
                field: "encoding", ..
            }) => {}
            other => panic!("{other:?}"),
        }
        let bytes =
            b"NRRD0004\ndimension: 3\nsizes: 2 2 2\ntype: short\nendian: big\nencoding: raw\n\n";
        match load_nrrd_bytes(bytes) {
            Err(NrrdError::Unsupported {
                field: "endian", ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn space_directions_give_spacing() {
        let mut bytes = b"NRRD0004\ndimension: 3\nsizes: 1 1 1\ntype: uint8\nencoding: raw\nspace directions: (0.4,0,0) (0,0.5,0) (0,0,0.6)\n\n".to_vec();
        bytes.push(0);
        let v = load_nrrd_bytes(&bytes).unwrap();
        assert_eq!(v.spacing(), (0.4, 0.5, 0.6));
    }

    #[test]
    fn non_axis_aligned_directions_rejected() {
        let mut bytes = b"NRRD0004\ndimension: 3\nsizes: 1 1 1\ntype: uint8\nencoding: raw\nspace directions: (0.4,0.1,0) (0,0.5,0) (0,0,0.6)\n\n".to_vec();
        bytes.push(0);
        assert!(matches!(
            load_nrrd_bytes(&bytes),
            Err(NrrdError::Unsupported {
                field: "space directions",
                ..
            })
        ));
    }

    #[test]
    fn all_zero_mask_raw_payload() {
        let v = Volume3::zeros((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
        let bytes = nrrd_bytes(&v, NrrdType::Uint8, NrrdEncoding::Raw).unwrap();
        let header_end = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        assert_eq!(&bytes[header_end..], &[0u8; 64][..]);
    }

    #[test]
    fn save_path_errors_surface() {
        let v = Volume3::zeros((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(save_nrrd(&v, ""), Err(NrrdError::Io(_))));
        assert!(load_nrrd("/does/not/exist.nrrd").is_err());
    }

    #[test]
    fn uint8_rejects_fractional_values() {
        let v = Volume3::new((1, 1, 1), (1.0, 1.0, 1.0), vec![0.5]).unwrap();
        assert!(matches!(
            nrrd_bytes(&v, NrrdType::Uint8, NrrdEncoding::Raw),
            Err(NrrdError::NotRepresentable { ty: "uint8", .. })
        ));
    }

    #[test]
    fn gzip_round_trip_in_memory() {
        let data: Vec<f32> = (0..27).map(|i| (i as f32) * 0.25 - 2.0).collect();
        let v = Volume3::new((3, 3, 3), (0.5, 1.0, 2.0), data).unwrap();
        let bytes = nrrd_bytes(&v, NrrdType::Float32, NrrdEncoding::Gzip).unwrap();
        let back = load_nrrd_bytes(&bytes).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn int16_round_trip() {
        let data: Vec<f32> = vec![-32768.0, -1.0, 0.0, 1.0, 255.0, 32767.0, 5.0, -5.0];
        let v = Volume3::new((2, 2, 2), (1.0, 1.0, 1.0), data).unwrap();
        let bytes = nrrd_bytes(&v, NrrdType::Int16, NrrdEncoding::Raw).unwrap();
        assert_eq!(load_nrrd_bytes(&bytes).unwrap(), v);
    }

    #[test]
    fn deterministic_bytes() {
        let mut v = Volume3::zeros((8, 8, 8), (1.0, 1.0, 1.0)).unwrap();
        v.set(3, 3, 3, 1.0);
        let a = nrrd_bytes(&v, NrrdType::Uint8, NrrdEncoding::Gzip).unwrap();
        let b = nrrd_bytes(&v, NrrdType::Uint8, NrrdEncoding::Gzip).unwrap();
        assert_eq!(a, b);
    }
}
