use crate::error::{CliError, CliResult};
use crate::output::{input_record, read_bytes, Output};
use egonce_core::Error;
use serde_json::{json, Map, Value};
use std::path::PathBuf;

/// Merges JSON reports into one document keyed by file stem, with the
/// checksum of every merged file.
pub fn run(inputs: &[PathBuf], out: &Output) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one input report".into()));
    }
    let mut reports = Map::new();
    let mut records = Vec::new();
    for path in inputs {
        let bytes = read_bytes(path)?;
        let value: Value = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::InFile(path.display().to_string(), Error::Parse { line: e.line(), message: e.to_string() })
        })?;
        let key = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        if reports.insert(key.clone(), value).is_some() {
            return Err(CliError::Usage(format!("two inputs share the name {key:?}")));
        }
        records.push(input_record(path)?);
    }
    out.report("report.json", &json!({"input": records, "reports": reports}))?;
    Ok(())
}
