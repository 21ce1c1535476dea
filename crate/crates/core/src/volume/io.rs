//! Volume file formats.
//!
//! * RawJson: a `<name>.json` sidecar naming a little-endian flat payload.
//! * NRRD: attached-header `NRRD0004` files with raw little-endian data. Only
//!   the fields `type`, `dimension`, `sizes`, `encoding`, `endian` and
//!   `spacings` are understood; anything else is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Volume3D, VolumeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    RawJson,
    Nrrd,
}

impl VolumeFormat {
    /// `.nrrd` selects NRRD, everything else is treated as a RawJson sidecar.
    pub fn from_path(path: &Path) -> VolumeFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("nrrd") => VolumeFormat::Nrrd,
            _ => VolumeFormat::RawJson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJsonHeader {
    dims: [usize; 3],
    spacing: [f64; 3],
    kind: VolumeKind,
    dtype: Dtype,
    data_file: String,
}

pub fn read_volume(path: &Path, format: VolumeFormat) -> Result<Volume3D> {
    match format {
        VolumeFormat::RawJson => read_raw_json(path),
        VolumeFormat::Nrrd => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_nrrd(&bytes)
        }
    }
}

pub fn write_volume(vol: &Volume3D, path: &Path, format: VolumeFormat) -> Result<()> {
    match format {
        VolumeFormat::RawJson => write_raw_json(vol, path),
        VolumeFormat::Nrrd => fs::write(path, encode_nrrd(vol)).map_err(|e| Error::io(path, e)),
    }
}

fn read_raw_json(path: &Path) -> Result<Volume3D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: RawJsonHeader = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_owned)
            .unwrap_or_else(|| "header".to_owned());
        Error::parse(field, msg)
    })?;
    let [d, h, w] = header.dims;
    if d == 0 || h == 0 || w == 0 {
        return Err(Error::parse(
            "dims",
            format!("must be positive, got {:?}", header.dims),
        ));
    }
    let data_path = resolve_data_file(path, &header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let data = decode_payload(&bytes, header.dtype, d * h * w)?;
    Volume3D::with_spacing((d, h, w), header.spacing, header.kind, data)
}

fn resolve_data_file(sidecar: &Path, data_file: &str) -> PathBuf {
    let p = Path::new(data_file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        sidecar.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn decode_payload(bytes: &[u8], dtype: Dtype, n: usize) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(dtype.size()) || bytes.len() / dtype.size() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: bytes.len() / dtype.size(),
        });
    }
    Ok(match dtype {
        Dtype::U8 => bytes.iter().map(|b| f32::from(*b)).collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    })
}

fn encode_payload(vol: &Volume3D, dtype: Dtype) -> Vec<u8> {
    match dtype {
        Dtype::U8 => vol.data().iter().map(|v| *v as u8).collect(),
        Dtype::F32 => vol.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

fn write_raw_json(vol: &Volume3D, path: &Path) -> Result<()> {
    let dtype = match vol.kind() {
        VolumeKind::Binary => Dtype::U8,
        VolumeKind::Probability => Dtype::F32,
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::param("path", format!("no file name in {}", path.display())))?;
    let data_name = format!("{stem}.raw");
    let data_path = path.with_file_name(&data_name);
    let (d, h, w) = vol.dims();
    let header = RawJsonHeader {
        dims: [d, h, w],
        spacing: vol.spacing(),
        kind: vol.kind(),
        dtype,
        data_file: data_name,
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&data_path, encode_payload(vol, dtype)).map_err(|e| Error::io(&data_path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const NRRD_MAGIC: &str = "NRRD0004";

/// Parses an attached-header NRRD file held in memory.
pub fn parse_nrrd(bytes: &[u8]) -> Result<Volume3D> {
    let (header, payload) = split_nrrd(bytes)?;
    let mut lines = header.lines();
    match lines.next() {
        Some(m) if m.trim_end() == NRRD_MAGIC => {}
        other => {
            return Err(Error::parse(
                "magic",
                format!("expected {NRRD_MAGIC}, found {:?}", other.unwrap_or("")),
            ))
        }
    }

    let mut dtype = None;
    let mut dimension = None;
    let mut sizes: Option<[usize; 3]> = None;
    let mut encoding = None;
    let mut endian = None;
    let mut spacings = None;

    for line in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if line.contains(":=") {
            let key = line.split(":=").next().unwrap_or("").trim();
            return Err(Error::Unsupported {
                field: "key/value".into(),
                value: key.into(),
            });
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::parse("header", format!("malformed line {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "type" => {
                dtype = Some(match value {
                    "uint8" | "uchar" | "unsigned char" | "uint8_t" => Dtype::U8,
                    "float" => Dtype::F32,
                    _ => {
                        return Err(Error::Unsupported {
                            field: "type".into(),
                            value: value.into(),
                        })
                    }
                })
            }
            "dimension" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| Error::parse("dimension", format!("not an integer: {value:?}")))?;
                if n != 3 {
                    return Err(Error::Unsupported {
                        field: "dimension".into(),
                        value: value.into(),
                    });
                }
                dimension = Some(n);
            }
            "sizes" => sizes = Some(parse_triple("sizes", value)?),
            "encoding" => {
                if value != "raw" {
                    return Err(Error::Unsupported {
                        field: "encoding".into(),
                        value: value.into(),
                    });
                }
                encoding = Some(());
            }
            "endian" => {
                if value != "little" {
                    return Err(Error::Unsupported {
                        field: "endian".into(),
                        value: value.into(),
                    });
                }
                endian = Some(());
            }
            "spacings" => spacings = Some(parse_triple::<f64>("spacings", value)?),
            other => {
                return Err(Error::Unsupported {
                    field: "field".into(),
                    value: other.into(),
                })
            }
        }
    }

    let dtype = dtype.ok_or_else(|| Error::parse("type", "missing"))?;
    dimension.ok_or_else(|| Error::parse("dimension", "missing"))?;
    let [w, h, d] = sizes.ok_or_else(|| Error::parse("sizes", "missing"))?;
    encoding.ok_or_else(|| Error::parse("encoding", "missing"))?;
    if dtype == Dtype::F32 {
        endian.ok_or_else(|| Error::parse("endian", "missing"))?;
    }
    if w == 0 || h == 0 || d == 0 {
        return Err(Error::parse("sizes", "must be positive"));
    }
    let spacing = match spacings {
        Some([sx, sy, sz]) => [sz, sy, sx],
        None => [1.0; 3],
    };
    let data = decode_payload(payload, dtype, d * h * w)?;
    let kind = match dtype {
        Dtype::U8 => VolumeKind::Binary,
        Dtype::F32 => VolumeKind::Probability,
    };
    Volume3D::with_spacing((d, h, w), spacing, kind, data)
}

fn split_nrrd(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::parse("header", "no blank line terminating the header"))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::parse("header", "not valid UTF-8"))?;
    Ok((header, &bytes[end + 2..]))
}

fn parse_triple<T: std::str::FromStr + Copy>(field: &'static str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = value
        .split_whitespace()
        .map(|s| s.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(field, format!("non-numeric entry in {value:?}")))?;
    match parts.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::parse(
            field,
            format!("expected 3 entries, got {}", parts.len()),
        )),
    }
}

pub fn encode_nrrd(vol: &Volume3D) -> Vec<u8> {
    let (d, h, w) = vol.dims();
    let [sz, sy, sx] = vol.spacing();
    let (ty, dtype) = match vol.kind() {
        VolumeKind::Binary => ("uint8", Dtype::U8),
        VolumeKind::Probability => ("float", Dtype::F32),
    };
    let mut out = format!(
        "{NRRD_MAGIC}\ntype: {ty}\ndimension: 3\nsizes: {w} {h} {d}\nspacings: {sx} {sy} {sz}\nencoding: raw\nendian: little\n\n"
    )
    .into_bytes();
    out.extend(encode_payload(vol, dtype));
    out
}
