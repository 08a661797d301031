//! Field snapshots: one JSON header line, then `n^d` interleaved `(re, im)` binary64
//! values in row-major order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, Space};
use crate::C64;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub version: u32,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub t: f64,
    pub equation: String,
    pub epsilon: f64,
    /// `physical` for `u(t, x)`, `lens` for `B(t, v)`.
    pub frame: String,
    pub endianness: Endianness,
    /// Hex SHA-256 of the payload bytes.
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Context recorded alongside the values.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMeta {
    pub equation: String,
    pub epsilon: f64,
    pub frame: String,
}

pub fn write_snapshot(field: &ComplexField, meta: &SnapshotMeta, path: &Path) -> Result<()> {
    write_snapshot_with(field, meta, path, Endianness::Little)
}

pub fn write_snapshot_with(field: &ComplexField, meta: &SnapshotMeta, path: &Path, endianness: Endianness) -> Result<()> {
    field.expect(Space::Physical)?;
    let mut payload = Vec::with_capacity(16 * field.values.len());
    for v in &field.values {
        for x in [v.re, v.im] {
            match endianness {
                Endianness::Little => payload.extend_from_slice(&x.to_le_bytes()),
                Endianness::Big => payload.extend_from_slice(&x.to_be_bytes()),
            }
        }
    }
    let header = SnapshotHeader {
        version: SNAPSHOT_VERSION,
        d: field.grid.d,
        n: field.grid.n,
        l: field.grid.l,
        t: field.t,
        equation: meta.equation.clone(),
        epsilon: meta.epsilon,
        frame: meta.frame.clone(),
        endianness,
        checksum: sha256_hex(&payload),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    f.write_all(&payload)?;
    f.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(ComplexField, SnapshotHeader)> {
    let bytes = std::fs::read(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corrupt(format!("{}: missing header line", path.display())))?;
    let header: SnapshotHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Corrupt(format!("{}: bad header: {e}", path.display())))?;
    if header.version != SNAPSHOT_VERSION {
        return Err(Error::Corrupt(format!(
            "{}: snapshot version {} (supported: {SNAPSHOT_VERSION})",
            path.display(),
            header.version
        )));
    }
    let grid = GridSpec::new(header.d, header.n, header.l)?;
    let payload = &bytes[split + 1..];
    if payload.len() != 16 * grid.len() {
        return Err(Error::Corrupt(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            16 * grid.len(),
            payload.len()
        )));
    }
    if sha256_hex(payload) != header.checksum {
        return Err(Error::Corrupt(format!("{}: checksum mismatch", path.display())));
    }
    let decode = |c: &[u8]| {
        let a: [u8; 8] = c.try_into().expect("8-byte chunk");
        match header.endianness {
            Endianness::Little => f64::from_le_bytes(a),
            Endianness::Big => f64::from_be_bytes(a),
        }
    };
    let values = payload.chunks_exact(16).map(|c| C64::new(decode(&c[..8]), decode(&c[8..]))).collect();
    Ok((ComplexField::new(grid, Space::Physical, header.t, values)?, header))
}
