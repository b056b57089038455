//! Output files. Every file of a run goes through [`OutDir`], which only
//! accepts bare file names, so nothing is written outside the directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// A table with fixed column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header line plus one line per row. Numbers use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                push_number(&mut s, *v);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "columns": self.columns, "rows": self.rows })
    }
}

/// Plain notation in the usual range, exponent notation outside it. Both
/// are the shortest strings that parse back exactly.
fn push_number(s: &mut String, v: f64) {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        let _ = write!(s, "{v}");
    } else {
        let _ = write!(s, "{v:e}");
    }
}

#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, CliError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(OutDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path_for(&self, name: &str) -> Result<PathBuf, CliError> {
        let plain = !name.is_empty()
            && name != "."
            && name != ".."
            && !name.contains(['/', '\\'])
            && Path::new(name).file_name().is_some_and(|f| f == name);
        if !plain {
            return Err(CliError::Config(format!("output name `{name}` is not a plain file name")));
        }
        Ok(self.root.join(name))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path_for(name)?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        if name != MANIFEST && !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes `stem.csv` or `stem.json` depending on `format` and returns
    /// the file name.
    pub fn write_table(&mut self, stem: &str, table: &Table, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => {
                let name = format!("{stem}.csv");
                self.write_text(&name, &table.to_csv())?;
                Ok(name)
            }
            Format::Json => {
                let name = format!("{stem}.json");
                self.write_json(&name, &table.to_json())?;
                Ok(name)
            }
        }
    }

    /// Records the resolved configuration and the files written so far.
    pub fn write_manifest(&mut self, cfg: &RunConfig) -> Result<(), CliError> {
        let manifest = Manifest {
            config: cfg.clone(),
            seed: cfg.seed,
            artifact_version: meanfield_core::ARTIFACT_VERSION.to_string(),
            outputs: self.written.clone(),
        };
        self.write_json(MANIFEST, &manifest)
    }
}

/// Everything needed to rerun an experiment. Output paths are relative to
/// the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub artifact_version: String,
    pub outputs: Vec<String>,
}
