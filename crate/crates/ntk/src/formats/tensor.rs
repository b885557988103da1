//! `NTKTENS1`: magic, u64 count, u64 C, u64 H, u64 W, then f64 values in
//! sample-major, channel-major order. Also reads flattened CSV rows under
//! a `# shape C H W` header line.

use std::io::{BufRead, Write};
use std::path::Path;

use ntk_core::cntk::ImageTensor;

use super::{create, open, read_f64s, read_magic, read_u64, write_f64s};
use crate::error::{CliError, CliResult};

pub const TENSOR_MAGIC: &[u8; 8] = b"NTKTENS1";

pub fn write_tensors(path: &Path, tensors: &[ImageTensor]) -> CliResult<()> {
    let (c, h, w) = match tensors.first() {
        Some(t) => t.shape(),
        None => return Err(CliError::data(path, "refusing to write an empty tensor batch")),
    };
    if let Some(i) = tensors.iter().position(|t| t.shape() != (c, h, w)) {
        return Err(CliError::data(
            path,
            format!("tensor {i} has shape {:?}, expected {:?}", tensors[i].shape(), (c, h, w)),
        ));
    }
    write_raw(path, tensors.len(), (c, h, w), tensors.iter().flat_map(|t| t.values().iter().copied()))
}

/// Writes one container from a flat value iterator (used for weight
/// matrices, stored as a single `1 x rows x cols` tensor).
pub fn write_raw(
    path: &Path,
    count: usize,
    shape: (usize, usize, usize),
    values: impl Iterator<Item = f64>,
) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    w.write_all(TENSOR_MAGIC).map_err(io)?;
    for d in [count, shape.0, shape.1, shape.2] {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    let values: Vec<f64> = values.collect();
    if values.len() != count * shape.0 * shape.1 * shape.2 {
        return Err(CliError::data(path, "value count does not match the declared shape"));
    }
    write_f64s(&mut w, path, &values)?;
    w.flush().map_err(io)
}

pub fn read_tensors(path: &Path) -> CliResult<Vec<ImageTensor>> {
    let mut r = open(path)?;
    read_magic(&mut r, path, TENSOR_MAGIC)?;
    let count = read_u64(&mut r, path, "count")? as usize;
    let c = read_u64(&mut r, path, "channels")? as usize;
    let h = read_u64(&mut r, path, "height")? as usize;
    let w = read_u64(&mut r, path, "width")? as usize;
    let per = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .filter(|&p| p > 0)
        .ok_or_else(|| CliError::data(path, format!("invalid tensor shape {c}x{h}x{w}")))?;
    let total = count.checked_mul(per).ok_or_else(|| CliError::data(path, "implausible tensor count"))?;
    let values = read_f64s(&mut r, path, total)?;
    values
        .chunks_exact(per)
        .enumerate()
        .map(|(i, chunk)| {
            ImageTensor::new(c, h, w, chunk.to_vec()).map_err(|e| CliError::data(path, format!("tensor {i}: {e}")))
        })
        .collect()
}

/// Tensors and optional labels from CSV. Every row holds `C·H·W` values,
/// or `C·H·W + 1` with the label last; all rows must agree.
pub fn read_tensor_csv(path: &Path) -> CliResult<(Vec<ImageTensor>, Option<Vec<String>>)> {
    let r = open(path)?;
    let mut lines = r.lines().enumerate();
    let (c, h, w) = loop {
        let Some((n, line)) = lines.next() else {
            return Err(CliError::data(path, "missing '# shape C H W' header"));
        };
        let line = line.map_err(|e| CliError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let dims: Vec<&str> = t.strip_prefix('#').map(|s| s.split_whitespace().collect()).unwrap_or_default();
        match dims.as_slice() {
            ["shape", c, h, w] => {
                let parse = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
                match (parse(c), parse(h), parse(w)) {
                    (Some(c), Some(h), Some(w)) => break (c, h, w),
                    _ => return Err(CliError::data(path, format!("line {}: bad shape header '{t}'", n + 1))),
                }
            }
            _ => return Err(CliError::data(path, format!("line {}: expected '# shape C H W', found '{t}'", n + 1))),
        }
    };
    let per = c * h * w;
    let mut tensors = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut labeled: Option<bool> = None;
    for (n, line) in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = t.split(',').map(str::trim).collect();
        let has_label = match cells.len() {
            l if l == per => false,
            l if l == per + 1 => true,
            l => {
                return Err(CliError::data(path, format!("line {}: {l} cells, expected {per} or {}", n + 1, per + 1)));
            }
        };
        if *labeled.get_or_insert(has_label) != has_label {
            return Err(CliError::data(
                path,
                format!("line {}: rows disagree on whether a label column is present", n + 1),
            ));
        }
        let mut values = Vec::with_capacity(per);
        for (j, cell) in cells[..per].iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(CliError::data(
                        path,
                        format!("line {}, column {}: '{cell}' is not a finite number", n + 1, j + 1),
                    ))
                }
            }
        }
        if has_label {
            labels.push(cells[per].to_string());
        }
        tensors.push(ImageTensor::new(c, h, w, values).map_err(|e| CliError::data(path, e.to_string()))?);
    }
    if tensors.is_empty() {
        return Err(CliError::data(path, "no tensor rows"));
    }
    Ok((tensors, labeled.unwrap_or(false).then_some(labels)))
}
