//! Deterministic CSV and JSON emission.
//!
//! CSV files follow RFC-4180 conventions: a header row, CRLF line endings,
//! comma separators, `.` decimal points. Every emitted number sits under a
//! named column. Floats use Rust's shortest round-trip formatting, so a
//! fixed manifest reproduces files byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

pub(crate) struct CsvWriter {
    out: std::io::BufWriter<std::fs::File>,
    columns: usize,
    pub path: PathBuf,
}

impl CsvWriter {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path)?;
        let mut out = std::io::BufWriter::new(file);
        out.write_all(header.join(",").as_bytes())?;
        out.write_all(b"\r\n")?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
            path,
        })
    }

    pub fn row(&mut self, fields: &[CsvField]) -> Result<()> {
        assert_eq!(fields.len(), self.columns, "column count mismatch");
        let rendered: Vec<String> = fields.iter().map(CsvField::render).collect();
        self.out.write_all(rendered.join(",").as_bytes())?;
        self.out.write_all(b"\r\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

pub(crate) enum CsvField {
    Int(u64),
    Float(f64),
    Text(String),
}

impl CsvField {
    fn render(&self) -> String {
        match self {
            CsvField::Int(x) => x.to_string(),
            CsvField::Float(x) => x.to_string(),
            CsvField::Text(s) => {
                debug_assert!(
                    !s.contains([',', '"', '\n', '\r']),
                    "labels must not need quoting"
                );
                s.clone()
            }
        }
    }
}

pub(crate) fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path)?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(path)
}
