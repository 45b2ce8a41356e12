//! Grid file formats.
//!
//! `SPRT` binary layout (all integers little-endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `53 50 52 54`        |
//! | 4      | 2    | version (1)                |
//! | 6      | 1    | dtype (0 = i32, 1 = f32)   |
//! | 7      | 1    | reserved (0)               |
//! | 8      | 4    | rows R                     |
//! | 12     | 4    | cols C                     |
//! | 16     | 4    | depth D                    |
//! | 20     | 4·N  | elements, row-major        |

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{DType, Dims, Grid3, GridData};

pub const SPRT_MAGIC: [u8; 4] = *b"SPRT";
pub const SPRT_VERSION: u16 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_sprt(grid: &Grid3) -> Vec<u8> {
    let dims = grid.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + dims.len() * 4);
    out.extend_from_slice(&SPRT_MAGIC);
    out.extend_from_slice(&SPRT_VERSION.to_le_bytes());
    out.push(grid.dtype().code());
    out.push(0);
    for extent in [dims.rows, dims.cols, dims.depth] {
        out.extend_from_slice(&(extent as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.le_bytes());
    out
}

pub fn decode_sprt(bytes: &[u8]) -> Result<Grid3> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "SPRT header truncated ({} bytes)",
            bytes.len()
        )));
    }
    if bytes[0..4] != SPRT_MAGIC {
        return Err(Error::Format("bad SPRT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SPRT_VERSION {
        return Err(Error::Format(format!("unsupported SPRT version {version}")));
    }
    let dtype = DType::from_code(bytes[6])
        .ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[6])))?;
    if bytes[7] != 0 {
        return Err(Error::Format("reserved byte must be 0".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let dims = Dims::new(word(8), word(12), word(16));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != dims.len() * 4 {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {} for {dims}",
            payload.len(),
            dims.len() * 4
        )));
    }
    let words = payload
        .chunks_exact(4)
        .map(|w| <[u8; 4]>::try_from(w).unwrap());
    let data = match dtype {
        DType::I32 => GridData::I32(words.map(i32::from_le_bytes).collect()),
        DType::F32 => GridData::F32(words.map(f32::from_le_bytes).collect()),
    };
    Grid3::new(dims, data)
}

pub fn write_sprt(path: impl AsRef<Path>, grid: &Grid3) -> Result<()> {
    fs::write(path, encode_sprt(grid))?;
    Ok(())
}

pub fn read_sprt(path: impl AsRef<Path>) -> Result<Grid3> {
    decode_sprt(&fs::read(path)?)
}

/// Parses comma-separated planes: one grid row per line, planes separated by
/// one or more blank lines. Lines starting with `#` are ignored.
pub fn parse_csv_planes(text: &str, dtype: DType) -> Result<Grid3> {
    let mut planes: Vec<Vec<Vec<&str>>> = vec![Vec::new()];
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !planes.last().unwrap().is_empty() {
                planes.push(Vec::new());
            }
            continue;
        }
        planes
            .last_mut()
            .unwrap()
            .push(line.split(',').map(str::trim).collect());
    }
    if planes.last().is_some_and(Vec::is_empty) {
        planes.pop();
    }
    let rows = planes.first().map_or(0, Vec::len);
    let cols = planes.first().and_then(|p| p.first()).map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Format("CSV grid is empty".into()));
    }
    for (d, plane) in planes.iter().enumerate() {
        if plane.len() != rows || plane.iter().any(|row| row.len() != cols) {
            return Err(Error::Shape(format!("CSV plane {d} is not {rows}x{cols}")));
        }
    }
    let cells = planes.iter().flatten().flatten();
    let bad = |s: &str| Error::Format(format!("bad CSV value {s:?}"));
    let data = match dtype {
        DType::I32 => GridData::I32(
            cells
                .map(|s| s.parse::<i32>().map_err(|_| bad(s)))
                .collect::<Result<_>>()?,
        ),
        DType::F32 => GridData::F32(
            cells
                .map(|s| s.parse::<f32>().map_err(|_| bad(s)))
                .collect::<Result<_>>()?,
        ),
    };
    Grid3::new(Dims::new(rows, cols, planes.len()), data)
}

/// Hex SHA-256 of the grid's SPRT encoding.
pub fn checksum(grid: &Grid3) -> String {
    let digest = Sha256::digest(encode_sprt(grid));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
