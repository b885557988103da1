//! Binary containers for Gram matrices and tensor batches.

pub mod gram;
pub mod tensor;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CliError, CliResult};

pub(crate) fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub(crate) fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_magic(r: &mut impl Read, path: &Path, magic: &[u8; 8]) -> CliResult<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| CliError::data(path, "file too short for header"))?;
    if &buf != magic {
        return Err(CliError::data(
            path,
            format!("bad magic {:?}, expected {}", String::from_utf8_lossy(&buf), String::from_utf8_lossy(magic)),
        ));
    }
    Ok(())
}

pub(crate) fn read_u64(r: &mut impl Read, path: &Path, what: &str) -> CliResult<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| CliError::data(path, format!("truncated header: missing {what}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64s(r: &mut impl Read, path: &Path, count: usize) -> CliResult<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| CliError::data(path, format!("truncated payload: expected {count} values")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| CliError::io(path, e))? != 0 {
        return Err(CliError::data(path, "trailing bytes after payload"));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub(crate) fn write_f64s(w: &mut impl Write, path: &Path, values: &[f64]) -> CliResult<()> {
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
