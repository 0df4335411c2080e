use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes hash-stamped files into one directory and remembers what it wrote.
pub struct Writer {
    dir: PathBuf,
    hash: String,
    pub written: Vec<(String, PathBuf)>,
}

/// Seventeen significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Writer {
    pub fn new(dir: &Path, hash: String) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), hash, written: Vec::new() })
    }

    pub fn header(&self) -> String {
        format!("# config-hash: {} nimfa {VERSION}", self.hash)
    }

    fn put(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push((name.to_string(), path));
        Ok(())
    }

    /// A CSV file with a hash comment line, a column header and `rows`.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
        let mut body = format!("{}\n{}\n", self.header(), columns.join(","));
        for row in rows {
            let _ = writeln!(body, "{}", row.join(","));
        }
        self.put(name, &body)
    }

    /// A JSON object `{"config_hash": ..., "version": ..., <value>}`.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(std::io::Error::other)?;
        let obj = match v {
            serde_json::Value::Object(ref mut m) => m,
            _ => return Err(std::io::Error::other("JSON outputs must be objects")),
        };
        obj.insert("config_hash".into(), self.hash.clone().into());
        obj.insert("version".into(), VERSION.into());
        let mut body = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)?;
        body.push('\n');
        self.put(name, &body)
    }

    /// A text artifact; the caller puts [`Writer::header`] in it.
    pub fn raw(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        self.put(name, body)
    }
}
