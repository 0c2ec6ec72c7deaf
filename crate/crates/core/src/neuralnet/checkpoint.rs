use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "softctrl-checkpoint-v1";

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    kind: &'a str,
    body: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    format: String,
    kind: String,
    body: T,
}

/// Serializes `value` under a format tag and a `kind` label. Floats
/// round-trip exactly.
pub fn to_json<T: Serialize>(kind: &str, value: &T) -> String {
    let mut s = serde_json::to_string(&EnvelopeOut {
        format: CHECKPOINT_FORMAT,
        kind,
        body: value,
    })
    .expect("checkpoint bodies are plain data");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(kind: &str, value: &T, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let text = to_json(kind, value);
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(text.as_bytes()))
}

pub fn load_json<T: DeserializeOwned>(kind: &str, path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let env: EnvelopeIn<T> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", env.format)));
    }
    if env.kind != kind {
        return Err(bad(format!(
            "expected a {kind} checkpoint, found {}",
            env.kind
        )));
    }
    Ok(env.body)
}

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
