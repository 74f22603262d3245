//! File formats: JSONL helpers and the versioned memory pool file.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use mot_core::{BuildMeta, EmbeddingVector, MemoryEntry, MemoryPool};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const POOL_FORMAT_VERSION: u32 = 1;

/// Writes `path` atomically: the content lands in a sibling temporary file
/// that is renamed into place.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(content).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items)?.as_bytes())
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Load {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// First line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolHeader {
    pub format_version: u32,
    pub l: usize,
    pub tau: Option<f64>,
    pub embedder_id: String,
    pub seed: u64,
    pub count: usize,
    /// Hex sha256 of the entry lines, newlines included.
    pub checksum: String,
    pub filter: String,
    pub created_at: String,
    pub dataset_id: String,
    pub centroids: Vec<EmbeddingVector>,
}

pub fn pool_to_string(pool: &MemoryPool) -> Result<String> {
    let body = to_jsonl(&pool.entries)?;
    let meta = &pool.build_meta;
    let header = PoolHeader {
        format_version: POOL_FORMAT_VERSION,
        l: pool.l,
        tau: meta.tau,
        embedder_id: meta.embedder_id.clone(),
        seed: meta.seed,
        count: pool.entries.len(),
        checksum: hex::encode(Sha256::digest(body.as_bytes())),
        filter: meta.filter.clone(),
        created_at: meta.created_at.clone(),
        dataset_id: meta.dataset_id.clone(),
        centroids: pool.centroids.clone(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.push('\n');
    out.push_str(&body);
    Ok(out)
}

pub fn save_pool(pool: &MemoryPool, path: &Path) -> Result<()> {
    write_atomic(path, pool_to_string(pool)?.as_bytes())
}

pub fn load_pool(path: &Path) -> Result<MemoryPool> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    pool_from_str(&text)
}

pub fn pool_from_str(text: &str) -> Result<MemoryPool> {
    let (header_line, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::Corruption("pool file has no header line".into()))?;
    let raw: serde_json::Value = serde_json::from_str(header_line)
        .map_err(|e| Error::Corruption(format!("pool header is not valid JSON: {e}")))?;
    match raw.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(POOL_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "pool format version {v} is not supported (expected {POOL_FORMAT_VERSION})"
            )))
        }
        None => return Err(Error::Format("pool header has no format_version".into())),
    }
    let header: PoolHeader = serde_json::from_value(raw).map_err(|e| Error::Corruption(format!("pool header: {e}")))?;
    let checksum = hex::encode(Sha256::digest(body.as_bytes()));
    if checksum != header.checksum {
        return Err(Error::Corruption(format!(
            "pool checksum mismatch: header {} but content {checksum}",
            header.checksum
        )));
    }
    let entries = body
        .lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str::<MemoryEntry>(line)
                .map_err(|e| Error::Corruption(format!("pool entry {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.len() != header.count {
        return Err(Error::Corruption(format!(
            "pool header promises {} entries, found {}",
            header.count,
            entries.len()
        )));
    }
    if header.centroids.len() != header.l {
        return Err(Error::Corruption(format!(
            "pool has {} centroids for l={}",
            header.centroids.len(),
            header.l
        )));
    }
    if let Some(e) = entries
        .iter()
        .find(|e| e.embedding.is_none() || e.cluster_id.is_none_or(|c| c >= header.l))
    {
        return Err(Error::Corruption(format!(
            "pool entry {} lacks an embedding or a valid cluster",
            e.question_id
        )));
    }
    Ok(MemoryPool {
        entries,
        centroids: header.centroids,
        l: header.l,
        build_meta: BuildMeta {
            embedder_id: header.embedder_id,
            tau: header.tau,
            filter: header.filter,
            seed: header.seed,
            created_at: header.created_at,
            dataset_id: header.dataset_id,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mot_core::MemorySource;

    fn pool() -> MemoryPool {
        let entries = (0..6)
            .map(|i| MemoryEntry {
                question_id: format!("q{i}"),
                question_text: format!("question {i}"),
                rationale_text: format!("because {i}. The answer is {i}."),
                answer: i.to_string(),
                entropy: 0.1 * i as f64,
                max_p: 1.0 / (1.0 + i as f64),
                n_effective: 16,
                source: MemorySource::SelfGenerated,
                embedding: Some(EmbeddingVector::normalized(vec![1.0, i as f64, 0.3]).unwrap()),
                cluster_id: None,
            })
            .collect();
        let meta = BuildMeta {
            embedder_id: "e".into(),
            tau: Some(0.3),
            filter: "entropy".into(),
            seed: 4,
            created_at: "2024-01-01T00:00:00Z".into(),
            dataset_id: "unit".into(),
        };
        MemoryPool::build(entries, 2, 4, meta).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let p = pool();
        save_pool(&p, &path).unwrap();
        assert_eq!(load_pool(&path).unwrap(), p);
    }

    #[test]
    fn version_and_corruption() {
        let text = pool_to_string(&pool()).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(pool_from_str(&bumped), Err(Error::Format(_))));
        let truncated = &text[..text.len() - 40];
        assert!(matches!(pool_from_str(truncated), Err(Error::Corruption(_))));
        let edited = text.replacen("because 3", "because 4", 1);
        assert!(matches!(pool_from_str(&edited), Err(Error::Corruption(_))));
        assert!(matches!(pool_from_str(""), Err(Error::Corruption(_))));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "1\n\n2\nnope\n").unwrap();
        match read_jsonl::<u32>(&path) {
            Err(Error::Load { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        write_jsonl(&path, &[1u32, 2, 3]).unwrap();
        assert_eq!(read_jsonl::<u32>(&path).unwrap(), [1, 2, 3]);
    }
}
