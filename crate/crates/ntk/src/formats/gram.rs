//! `NTKGRAM1`: magic, u64 rows, u64 cols, u8 symmetric flag, then row-major
//! little-endian f64 values.

use std::io::{Read, Write};
use std::path::Path;

use ntk_core::GramMatrix;

use super::{create, open, read_f64s, read_magic, read_u64, write_f64s};
use crate::error::{CliError, CliResult};

pub const GRAM_MAGIC: &[u8; 8] = b"NTKGRAM1";

pub fn write_gram(path: &Path, gram: &GramMatrix) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    w.write_all(GRAM_MAGIC).map_err(io)?;
    w.write_all(&(gram.rows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(gram.cols() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&[u8::from(gram.is_symmetric())]).map_err(io)?;
    write_f64s(&mut w, path, gram.values())?;
    w.flush().map_err(io)
}

pub fn read_gram(path: &Path) -> CliResult<GramMatrix> {
    let mut r = open(path)?;
    read_magic(&mut r, path, GRAM_MAGIC)?;
    let rows = read_u64(&mut r, path, "row count")? as usize;
    let cols = read_u64(&mut r, path, "column count")? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(|_| CliError::data(path, "truncated header: missing symmetric flag"))?;
    if flag[0] > 1 {
        return Err(CliError::data(path, format!("symmetric flag must be 0 or 1, got {}", flag[0])));
    }
    let count =
        rows.checked_mul(cols).ok_or_else(|| CliError::data(path, format!("implausible shape {rows}x{cols}")))?;
    let values = read_f64s(&mut r, path, count)?;
    let gram =
        GramMatrix::from_vec(rows, cols, values, flag[0] == 1).map_err(|e| CliError::data(path, e.to_string()))?;
    if gram.is_symmetric() && gram.max_asymmetry() != 0.0 {
        return Err(CliError::data(path, "flagged symmetric but values are not"));
    }
    Ok(gram)
}

/// Plain CSV, one matrix row per line, values printed round-trip exact.
pub fn write_gram_csv(path: &Path, gram: &GramMatrix) -> CliResult<()> {
    let mut w = create(path)?;
    for i in 0..gram.rows() {
        let line: Vec<String> = gram.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
