//! JSONL prompt database: ingestion into a [`Store`] and serialization back.
//!
//! One record per line: `id`, `text`, `kind` and an optional `vector`.
//! Records without a vector are embedded in one batch by the provider.

use std::path::Path;

use artpress_core::ragstore::{placeholder_count, Embedder, Kind, PromptRecord, RagError, Store};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: invalid kind `{kind}`")]
    InvalidKind { line: usize, kind: String },
    #[error("line {line}: record `{id}` needs exactly one {{base}} placeholder, found {found}")]
    MissingPlaceholder { line: usize, id: String, found: usize },
    #[error("line {line}: record `{id}` has no tokens")]
    EmptyText { line: usize, id: String },
    #[error("line {line}: record `{id}`: {source}")]
    Invalid {
        line: usize,
        id: String,
        source: RagError,
    },
    #[error("embedding failed: {0}")]
    Embed(RagError),
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    kind: String,
    #[serde(default)]
    vector: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    kind: Kind,
    vector: &'a [f64],
}

struct Pending {
    line: usize,
    id: String,
    text: String,
    kind: Kind,
    vector: Option<Vec<f64>>,
}

pub fn ingest(path: &Path, embedder: &dyn Embedder) -> Result<Store, DbError> {
    let contents = std::fs::read_to_string(path).map_err(|source| DbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_str(&contents, embedder)
}

pub fn ingest_str(contents: &str, embedder: &dyn Embedder) -> Result<Store, DbError> {
    let mut pending = Vec::new();
    for (idx, raw_line) in contents.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(raw_line).map_err(|e| DbError::Parse {
            line,
            message: e.to_string(),
        })?;
        let kind = Kind::parse(&raw.kind).ok_or_else(|| DbError::InvalidKind {
            line,
            kind: raw.kind.clone(),
        })?;
        if raw.text.trim().is_empty() {
            return Err(DbError::EmptyText { line, id: raw.id });
        }
        if kind == Kind::PositiveTemplate {
            let found = placeholder_count(&raw.text);
            if found != 1 {
                return Err(DbError::MissingPlaceholder {
                    line,
                    id: raw.id,
                    found,
                });
            }
        }
        pending.push(Pending {
            line,
            id: raw.id,
            text: raw.text,
            kind,
            vector: raw.vector,
        });
    }

    let missing: Vec<&str> = pending
        .iter()
        .filter(|p| p.vector.is_none())
        .map(|p| p.text.as_str())
        .collect();
    let mut embedded = if missing.is_empty() {
        Vec::new()
    } else {
        match embedder.embed_batch(&missing) {
            Ok(v) => v,
            Err(RagError::EmptyText) => {
                // Find the offending record for a precise message.
                let p = pending
                    .iter()
                    .find(|p| p.vector.is_none() && embedder.embed(&p.text) == Err(RagError::EmptyText))
                    .expect("batch failure must come from some record");
                return Err(DbError::EmptyText {
                    line: p.line,
                    id: p.id.clone(),
                });
            }
            Err(e) => return Err(DbError::Embed(e)),
        }
    }
    .into_iter();

    let mut store = Store::new(embedder.dimension());
    for p in pending {
        let vector = match p.vector {
            Some(v) => v,
            None => embedded.next().ok_or(DbError::Embed(RagError::Provider(
                "provider returned fewer vectors than texts".into(),
            )))?,
        };
        let id = p.id.clone();
        store
            .insert(PromptRecord {
                id: p.id,
                text: p.text,
                kind: p.kind,
                vector,
            })
            .map_err(|e| match e {
                RagError::DuplicateId(id) => DbError::DuplicateId { line: p.line, id },
                source => DbError::Invalid {
                    line: p.line,
                    id,
                    source,
                },
            })?;
    }
    Ok(store)
}

/// JSONL with vectors included, in ascending id order.
pub fn serialize_store(store: &Store) -> String {
    let mut out = String::new();
    for r in store.iter() {
        let line = serde_json::to_string(&RecordOut {
            id: &r.id,
            text: &r.text,
            kind: r.kind,
            vector: &r.vector,
        })
        .expect("records serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_store(store: &Store, path: &Path) -> Result<(), DbError> {
    std::fs::write(path, serialize_store(store)).map_err(|source| DbError::Io {
        path: path.display().to_string(),
        source,
    })
}
