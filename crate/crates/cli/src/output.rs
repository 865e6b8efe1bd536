use std::fs;
use std::path::{Path, PathBuf};

use optomech_core::steady_state::format_sig12;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn num(x: f64) -> String {
    format_sig12(x)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

/// A CSV table with a fixed header.
pub struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        // Writes into memory cannot fail.
        w.write_record(self.header).expect("in-memory CSV");
        for r in &self.rows {
            w.write_record(r).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("ASCII CSV")
    }
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.0.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable report");
        text.push('\n');
        self.write(name, &text)
    }
}
