use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ifp_core::ext::format_ext;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through `body`.
    pub fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
        let path = self.path(name);
        let run = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            body(&mut w)?;
            w.flush()
        };
        run().map_err(|e| CliError::output(&path, e))
    }

    pub fn write_json(&self, name: &str, v: &Value) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            writeln!(w)
        })
    }

    /// Writes a CSV with the given header; cells use `inf` / `-inf`.
    pub fn write_csv<'a>(&self, name: &str, header: &str, rows: impl IntoIterator<Item = &'a [f64]>) -> CliResult<()> {
        self.write(name, |w| {
            writeln!(w, "{header}")?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|&v| format_ext(v)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            Ok(())
        })
    }
}

/// A number, or `"inf"` / `"-inf"`, or null for NaN.
pub fn ext(v: f64) -> Value {
    if v.is_nan() {
        Value::Null
    } else if v.is_finite() {
        json!(v)
    } else {
        json!(format_ext(v))
    }
}

/// `{"schema_version", "command", "config", ...body}`.
pub fn report(command: &str, config: Value, body: Value) -> Value {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("config".into(), config);
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

/// Prints to stdout, ignoring a closed pipe.
pub fn print(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}
