use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// One JSON object per line on stderr.
pub fn log(level: &str, event: &str, fields: Value) {
    let mut obj = Map::new();
    obj.insert("level".into(), json!(level));
    obj.insert("event".into(), json!(event));
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    eprintln!("{}", Value::Object(obj));
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// UTF-8, falling back to Latin-1 for older corpus files.
pub fn decode_text(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

pub fn is_score_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("abc" | "xml" | "musicxml" | "mxl")
    )
}

/// Expands files, directories (recursively) and glob patterns into a sorted,
/// de-duplicated list of score files.
pub fn collect_inputs(specs: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for spec in specs {
        let matches: Vec<PathBuf> = if spec.contains(['*', '?', '[']) {
            glob::glob(spec)
                .with_context(|| format!("bad glob {spec:?}"))?
                .collect::<std::result::Result<_, _>>()?
        } else {
            let p = PathBuf::from(spec);
            if !p.exists() {
                anyhow::bail!("input {} does not exist", p.display());
            }
            vec![p]
        };
        for p in matches {
            if p.is_dir() {
                for entry in walkdir::WalkDir::new(&p) {
                    let entry = entry?;
                    if entry.file_type().is_file() && is_score_file(entry.path()) {
                        out.push(entry.into_path());
                    }
                }
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
