//! CSV artifacts and their digests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    /// SHA-256 of the file with `#` comment lines removed.
    pub sha256: String,
}

/// SHA-256 over every line that does not start with `#`.
pub fn content_digest(text: &str) -> String {
    let mut h = Sha256::new();
    for line in text.split_inclusive('\n').filter(|l| !l.starts_with('#')) {
        h.update(line.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Shortest round-trip text, switching to exponent form for very large or
/// very small magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub(crate) struct Writer {
    dir: PathBuf,
    header: String,
    pub(crate) files: Vec<OutputFile>,
}

impl Writer {
    pub(crate) fn new(dir: &Path, header: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), header, files: Vec::new() })
    }

    /// Write `body` after the comment header and record its digest.
    pub(crate) fn emit(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("{}\n{body}", self.header);
        self.emit_raw(name, &text)
    }

    pub(crate) fn emit_raw(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(OutputFile { path, sha256: content_digest(text) });
        Ok(())
    }
}

pub(crate) struct Table {
    buf: String,
}

impl Table {
    pub(crate) fn new<S: AsRef<str>>(columns: impl IntoIterator<Item = S>) -> Self {
        let cols: Vec<String> = columns.into_iter().map(|c| c.as_ref().to_string()).collect();
        Self { buf: cols.join(",") + "\n" }
    }

    pub(crate) fn row(&mut self, lead: &[String], values: impl IntoIterator<Item = f64>) {
        let mut first = true;
        for l in lead {
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(l);
            first = false;
        }
        for v in values {
            if !first {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", fmt_f64(v));
            first = false;
        }
        self.buf.push('\n');
    }

    pub(crate) fn finish(self) -> String {
        self.buf
    }
}

pub(crate) fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub(crate) fn pair_indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).flat_map(|i| (0..n).map(move |j| format!("{prefix}_{i}_{j}"))).collect()
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

pub(crate) fn vec_values(v: &DVector<f64>) -> impl Iterator<Item = f64> + '_ {
    v.iter().copied()
}
