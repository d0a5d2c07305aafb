//! Shared framing: `magic (8 bytes) | version (u32 LE) | header length (u64 LE)
//! | JSON header | little-endian f32 payload`.

use std::path::Path;

use crate::{Error, Result};

pub(crate) fn encode(magic: &[u8; 8], version: u32, header: &[u8], payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + header.len() + payload.len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns `(header, payload)` after checking magic and version.
pub(crate) fn decode<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32, what: &str) -> Result<(&'a [u8], Vec<f32>)> {
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(Error::Format(format!("not a {what} file")));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != version {
        return Err(Error::Format(format!("{what} version {found} is not supported (expected {version})")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let rest = &bytes[20..];
    if len > rest.len() {
        return Err(Error::Format(format!("{what} header is truncated")));
    }
    let (header, payload) = rest.split_at(len);
    if payload.len() % 4 != 0 {
        return Err(Error::Format(format!("{what} payload is not a whole number of f32 values")));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn json_error(what: &str) -> impl Fn(serde_json::Error) -> Error + '_ {
    move |e| Error::Format(format!("{what} header: {e}"))
}
