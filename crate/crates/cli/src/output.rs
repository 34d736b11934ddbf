//! Output directory that remembers every file written into it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Output {
            path: root.to_path_buf(),
            source: e,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: vec![],
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Paths relative to the root, in write order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, rel: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.root.join(rel);
        let err = |e| CliError::Output {
            path: path.clone(),
            source: e,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(err)?;
        }
        let f = File::create(&path).map_err(err)?;
        let rel = PathBuf::from(rel);
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
        Ok((path, BufWriter::new(f)))
    }

    /// Writes `rel` through a library writer.
    pub fn write_with<F>(&mut self, rel: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> textcast::Result<()>,
    {
        let (path, mut w) = self.open(rel)?;
        f(&mut w).map_err(CliError::runtime("export"))?;
        w.flush().map_err(|e| CliError::Output { path, source: e })
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(|e| textcast::Error::Io {
                path: rel.to_string(),
                source: e,
            })
        })
    }

    /// Writes a table with a header row.
    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.write_with(rel, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(header)?;
            for r in rows {
                c.write_record(r)?;
            }
            c.flush().map_err(|e| textcast::Error::Io {
                path: rel.to_string(),
                source: e,
            })
        })
    }
}

/// Keeps letters, digits, `-` and `_` so any token can name a file.
pub fn file_stem(word: &str) -> String {
    word.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
