//! Report tables and staged output files.
//!
//! Nothing touches the output directory until [`Staged::commit`], so a run
//! that fails midway leaves no partial outputs behind.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ReportFormat;

/// A report row type with a fixed column order.
///
/// CSV and JSON outputs share the same columns: the CSV header is
/// `COLUMNS`, and each JSON record has exactly these keys.
pub trait Table: Serialize {
    const COLUMNS: &'static [&'static str];
}

pub fn csv_bytes<T: Table>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(T::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().context("flushing csv")?)
}

pub fn json_bytes<T: Table>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(rows)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Adds `{stem}.csv` or `{stem}.json`.
    pub fn add_table<T: Table>(
        &mut self,
        stem: &str,
        rows: &[T],
        format: ReportFormat,
    ) -> Result<()> {
        let bytes = match format {
            ReportFormat::Csv => csv_bytes(rows)?,
            ReportFormat::Json => json_bytes(rows)?,
        };
        self.add_bytes(format!("{stem}.{}", format.extension()), bytes);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Writes every file, each through a temporary name and a rename.
    pub fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
