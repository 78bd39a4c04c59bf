//! Versioned, checksummed container used for SCM and model files.
//!
//! A file is a single header line followed by a JSON payload:
//!
//! ```text
//! causal-twin scm v1 sha256=<hex digest of the payload bytes>
//! { ...payload... }
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

const MAGIC: &str = "causal-twin";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode<T: Serialize>(kind: &str, version: u32, payload: &T) -> Result<String> {
    let body = serde_json::to_string_pretty(payload).map_err(|e| Error::Parse {
        what: "payload",
        message: e.to_string(),
    })?;
    let digest = sha256_hex(body.as_bytes());
    Ok(format!("{MAGIC} {kind} v{version} sha256={digest}\n{body}\n"))
}

pub fn decode<T: DeserializeOwned>(kind: &str, supported: u32, text: &str) -> Result<T> {
    let (header, rest) = text.split_once('\n').ok_or_else(|| Error::Parse {
        what: "container",
        message: "missing header line".into(),
    })?;
    let mut fields = header.split_whitespace();
    let bad_header = || Error::Parse {
        what: "container header",
        message: header.to_string(),
    };
    if fields.next() != Some(MAGIC) {
        return Err(bad_header());
    }
    if fields.next() != Some(kind) {
        return Err(Error::Parse {
            what: "container header",
            message: format!("expected a `{kind}` file, found `{header}`"),
        });
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad_header)?;
    if version == 0 || version > supported {
        return Err(Error::Version {
            format: kind.to_string(),
            found: version,
            supported,
        });
    }
    let digest = fields
        .next()
        .and_then(|d| d.strip_prefix("sha256="))
        .ok_or_else(bad_header)?;
    let body = rest.strip_suffix('\n').unwrap_or(rest);
    if sha256_hex(body.as_bytes()) != digest {
        return Err(Error::Checksum(kind.to_string()));
    }
    serde_json::from_str(body).map_err(|e| Error::Parse {
        what: "payload",
        message: e.to_string(),
    })
}

pub fn write_file<T: Serialize>(path: &Path, kind: &str, version: u32, payload: &T) -> Result<()> {
    let text = encode(kind, version, payload)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_file<T: DeserializeOwned>(path: &Path, kind: &str, supported: u32) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(kind, supported, &text)
}
