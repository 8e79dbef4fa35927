use crate::error::{CliError, CliResult};
use egonce_core::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Core(Error::Io { path: path.to_path_buf(), source: e }))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `{"path": ..., "sha256": ...}` for an input file.
pub fn input_record(path: &Path) -> CliResult<Value> {
    let bytes = read_bytes(path)?;
    Ok(json!({"path": path.display().to_string(), "sha256": sha256_hex(&bytes)}))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Core(Error::Io { path: dir.to_path_buf(), source: e }))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Core(Error::Io { path: path.to_path_buf(), source: e }))
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

pub struct Output {
    pub dir: PathBuf,
    pub quiet: bool,
}

impl Output {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    /// Writes a JSON document into the output directory and echoes it.
    pub fn report(&self, name: &str, value: &Value) -> CliResult<PathBuf> {
        let path = self.path(name);
        let text = to_pretty(value);
        write_file(&path, &text)?;
        if !self.quiet {
            print!("{text}");
        }
        Ok(path)
    }
}
