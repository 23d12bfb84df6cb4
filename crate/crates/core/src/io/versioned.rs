//! JSON documents wrapped in a `{format, version}` header.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct Out<'a, T> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    payload: &'a T,
}

#[derive(Deserialize)]
struct Head {
    format: String,
    version: u32,
}

pub fn encode<T: Serialize>(format: &str, version: u32, payload: &T) -> Result<String> {
    serde_json::to_string_pretty(&Out { format, version, payload })
        .map_err(|e| Error::InvalidInput(format!("cannot serialize {format}: {e}")))
}

/// Checks the header before decoding the payload.
pub fn decode<T: DeserializeOwned>(text: &str, path: &Path, format: &'static str, version: u32) -> Result<T> {
    let at = |e: &serde_json::Error| line_offset(text, e.line(), e.column());
    let head: Head = serde_json::from_str(text).map_err(|e| Error::parse(path, at(&e), e.to_string()))?;
    if head.format != format {
        return Err(Error::parse(path, 0, format!("expected format {format:?}, found {:?}", head.format)));
    }
    if head.version != version {
        return Err(Error::UnsupportedVersion { what: format, found: head.version, expected: version });
    }
    serde_json::from_str(text).map_err(|e| Error::parse(path, at(&e), e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, format: &str, version: u32, payload: &T) -> Result<()> {
    std::fs::write(path, encode(format, version, payload)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, format: &'static str, version: u32) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text, path, format, version)
}

/// Byte offset of a 1-based line and column.
pub(crate) fn line_offset(text: &str, line: usize, column: usize) -> u64 {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)) as u64
}
