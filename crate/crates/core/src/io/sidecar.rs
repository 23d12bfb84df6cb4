//! Line-oriented text sidecars for segment ids and kernel bindings.

use std::fmt::Write as _;
use std::path::Path;

use crate::binding::BindingRecord;
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').enumerate().filter_map(move |(n, raw)| {
        let at = offset;
        offset += raw.len();
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((n + 1, at, line))
    })
}

/// One object id per kernel, one per line.
pub fn load_segments(path: &Path) -> Result<Vec<u32>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segments(&text, path)
}

pub fn parse_segments(text: &str, path: &Path) -> Result<Vec<u32>> {
    data_lines(text)
        .map(|(n, at, line)| {
            line.parse::<u32>()
                .map_err(|_| Error::parse(path, at as u64, format!("line {n}: bad object id {line:?}")))
        })
        .collect()
}

pub fn save_segments(ids: &[u32], path: &Path) -> Result<()> {
    let mut s = String::from("# object id per kernel\n");
    for id in ids {
        writeln!(s, "{id}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `kernel_index face_index w0 w1 w2 normal_offset` per line.
pub fn load_bindings(path: &Path) -> Result<Vec<BindingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bindings(&text, path)
}

pub fn parse_bindings(text: &str, path: &Path) -> Result<Vec<BindingRecord>> {
    data_lines(text)
        .map(|(n, at, line)| {
            let err = |m: String| Error::parse(path, at as u64, format!("line {n}: {m}"));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad index {s:?}")));
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
            Ok(BindingRecord {
                kernel_index: idx(f[0])?,
                face_index: idx(f[1])?,
                barycentric: [num(f[2])?, num(f[3])?, num(f[4])?],
                normal_offset: num(f[5])?,
            })
        })
        .collect()
}

pub fn encode_bindings(records: &[BindingRecord]) -> String {
    let mut s = String::from("# kernel_index face_index w0 w1 w2 normal_offset\n");
    for r in records {
        let [a, b, c] = r.barycentric;
        writeln!(s, "{} {} {a:?} {b:?} {c:?} {:?}", r.kernel_index, r.face_index, r.normal_offset).unwrap();
    }
    s
}

pub fn save_bindings(records: &[BindingRecord], path: &Path) -> Result<()> {
    std::fs::write(path, encode_bindings(records)).map_err(|e| Error::io(path, e))
}
