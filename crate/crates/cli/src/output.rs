use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use causal_twin::envelope::sha256_hex;

/// Files are first written with a `.partial` suffix and only renamed once
/// the step that produced them has succeeded, so a failed run leaves its
/// incomplete outputs visibly marked.
#[derive(Debug, Default)]
pub struct Artifacts {
    pending: Vec<PathBuf>,
    digests: BTreeMap<String, String>,
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

impl Artifacts {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        let tmp = partial_path(path);
        fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
        self.digests.insert(path.display().to_string(), sha256_hex(bytes));
        self.pending.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_csv(&mut self, path: &Path, table: &Table) -> Result<()> {
        let bytes = table.to_csv_bytes()?;
        self.write(path, &bytes)
    }

    pub fn commit(&mut self) -> Result<()> {
        for path in self.pending.drain(..) {
            let tmp = partial_path(&path);
            fs::rename(&tmp, &path).with_context(|| format!("cannot move {} into place", tmp.display()))?;
        }
        Ok(())
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }
}

/// A header plus string rows; every CSV the tool writes goes through here.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)
    }
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_until_commit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut art = Artifacts::default();
        let mut t = Table::new(["x", "y"]);
        t.push(vec![num(1.5), opt(None)]);
        art.write_csv(&path, &t).unwrap();
        assert!(!path.exists());
        assert_eq!(fs::read_to_string(partial_path(&path)).unwrap(), "x,y\n1.5,\n");
        art.commit().unwrap();
        assert!(path.exists() && !partial_path(&path).exists());
    }

    #[test]
    fn non_finite_is_blank() {
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(0.1), "0.1");
    }
}
