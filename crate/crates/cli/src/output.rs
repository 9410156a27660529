//! Output files are staged in memory and written together at the end, so an
//! interrupted or failed command never leaves partial results behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| Failure::Other(format!("serializing {name}: {e}")))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every staged file into `dir`. Each file goes to a temporary
    /// name first and is renamed into place once complete.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
        let io = |what: &str, p: &Path, e: std::io::Error| {
            Failure::Other(format!("{what} {}: {e}", p.display()))
        };
        fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            fs::write(&tmp, bytes).map_err(|e| io("cannot write", &tmp, e))?;
            written.push((tmp, dir.join(name)));
        }
        let mut paths = Vec::with_capacity(written.len());
        for (tmp, path) in written {
            fs::rename(&tmp, &path).map_err(|e| io("cannot write", &path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Serializes rows through a CSV writer into memory.
pub fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let run = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        w.write_record(header)?;
        fill(w)
    };
    run(&mut w).map_err(|e| Failure::Other(format!("writing CSV: {e}")))?;
    w.into_inner()
        .map_err(|e| Failure::Other(format!("writing CSV: {e}")))
}

/// Shortest round-trip form; NaN becomes the empty field.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}
