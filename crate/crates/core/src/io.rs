//! JSON / JSONL helpers shared by every artifact writer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::schema("json", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e))
}

/// Serializes one record per line.
pub fn to_jsonl_string<H, T>(header: Option<&H>, items: &[T]) -> Result<String>
where
    H: Serialize,
    T: Serialize,
{
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&serde_json::to_string(h).map_err(|e| Error::schema("jsonl", e))?);
        out.push('\n');
    }
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| Error::schema("jsonl", e))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<H, T>(path: &Path, header: Option<&H>, items: &[T]) -> Result<()>
where
    H: Serialize,
    T: Serialize,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_jsonl_string(header, items)?.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads every non-blank line as a `T`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_jsonl_with_header::<serde_json::Value, T>(path, false)?.1)
}

/// Reads an optional header record followed by body records.
pub fn read_jsonl_with_header<H, T>(path: &Path, has_header: bool) -> Result<(Option<H>, Vec<T>)>
where
    H: DeserializeOwned,
    T: DeserializeOwned,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let what = || format!("{}:{}", path.display(), lineno + 1);
        if has_header && header.is_none() && items.is_empty() {
            header = Some(serde_json::from_str(&line).map_err(|e| Error::schema(what(), e))?);
        } else {
            items.push(serde_json::from_str(&line).map_err(|e| Error::schema(what(), e))?);
        }
    }
    if has_header && header.is_none() {
        return Err(Error::schema(path.display().to_string(), "missing header record"));
    }
    Ok((header, items))
}
