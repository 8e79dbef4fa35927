//! Binary checkpoint (`EGOC`) and feature (`EGOF`) files.

use super::head::ProjectionHead;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EGOC";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const FEATURES_MAGIC: &[u8; 4] = b"EGOF";

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidInput(format!("{what} {n} does not fit in 32 bits")))
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated {what}: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r, what)?))
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::Format("trailing bytes after payload".into())),
        Err(e) => Err(Error::Format(e.to_string())),
    }
}

fn write_err(e: std::io::Error) -> Error {
    Error::Format(format!("write failed: {e}"))
}

pub fn write_checkpoint(mut w: impl Write, head: &ProjectionHead) -> Result<()> {
    head.validate()?;
    let mut buf = Vec::with_capacity(16 + 8 * head.param_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_of(head.d_in(), "d_in")?.to_le_bytes());
    buf.extend_from_slice(&u32_of(head.d_out(), "d_out")?.to_le_bytes());
    for x in head.weight.as_slice().iter().chain(&head.bias) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(write_err)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ProjectionHead> {
    if &read_exact::<4>(&mut r, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let d_in = read_u32(&mut r, "d_in")? as usize;
    let d_out = read_u32(&mut r, "d_out")? as usize;
    let mut values = Vec::with_capacity(d_in * d_out + d_out);
    for _ in 0..d_in * d_out + d_out {
        values.push(f64::from_le_bytes(read_exact(&mut r, "parameters")?));
    }
    expect_end(&mut r)?;
    let bias = values.split_off(d_in * d_out);
    ProjectionHead::new(Matrix::from_vec(d_in, d_out, values)?, bias)
}

pub fn save_checkpoint(path: impl AsRef<Path>, head: &ProjectionHead) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, head)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ProjectionHead> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

/// Feature rows stored as 32-bit floats with one pair id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub pair_ids: Vec<String>,
    pub values: Matrix,
}

impl FeatureFile {
    pub fn new(pair_ids: Vec<String>, values: Matrix) -> Result<Self> {
        if pair_ids.len() != values.rows() {
            return Err(Error::Shape(format!(
                "{} pair ids for {} feature rows",
                pair_ids.len(),
                values.rows()
            )));
        }
        if let Some(bad) = pair_ids.iter().find(|id| id.contains('\n')) {
            return Err(Error::InvalidInput(format!("pair id {bad:?} contains a newline")));
        }
        Ok(Self { pair_ids, values })
    }
}

pub fn write_features(mut w: impl Write, features: &FeatureFile) -> Result<()> {
    let m = &features.values;
    let mut buf = Vec::with_capacity(12 + 4 * m.as_slice().len());
    buf.extend_from_slice(FEATURES_MAGIC);
    buf.extend_from_slice(&u32_of(m.rows(), "count")?.to_le_bytes());
    buf.extend_from_slice(&u32_of(m.cols(), "dim")?.to_le_bytes());
    for &x in m.as_slice() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    for id in &features.pair_ids {
        buf.extend_from_slice(id.as_bytes());
        buf.push(b'\n');
    }
    w.write_all(&buf).map_err(write_err)
}

pub fn read_features(r: impl Read) -> Result<FeatureFile> {
    let mut r = BufReader::new(r);
    if &read_exact::<4>(&mut r, "magic")? != FEATURES_MAGIC {
        return Err(Error::Format("not a feature file (bad magic)".into()));
    }
    let count = read_u32(&mut r, "count")? as usize;
    let dim = read_u32(&mut r, "dim")? as usize;
    let mut values = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        values.push(f32::from_le_bytes(read_exact(&mut r, "feature values")?) as f64);
    }
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let mut line = String::new();
        let n = r
            .read_line(&mut line)
            .map_err(|e| Error::Format(format!("pair id {i}: {e}")))?;
        if n == 0 || !line.ends_with('\n') {
            return Err(Error::Format(format!("expected {count} newline-terminated pair ids, found {i}")));
        }
        line.pop();
        ids.push(line);
    }
    expect_end(&mut r)?;
    FeatureFile::new(ids, Matrix::from_vec(count, dim, values)?)
}

pub fn save_features(path: impl AsRef<Path>, features: &FeatureFile) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_features(&mut w, features)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(f)
}
