//! Checkpoint directories: an `index` text file with one line per tensor plus
//! one little-endian row-major blob per tensor.
//!
//! ```text
//! # ncwno tensors v1
//! lift.w float32 3x16 t0000.bin 0
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{DType, Element, Tensor};

const INDEX: &str = "index";
const HEADER: &str = "# ncwno tensors v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub file: String,
    pub offset: usize,
}

fn shape_str(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s == "scalar" {
        return Some(vec![]);
    }
    s.split('x').map(|d| d.parse().ok()).collect()
}

/// Writes `tensors` under `dir`, replacing any previous index.
pub fn write_tensors<T: Element>(dir: &Path, tensors: &[(String, &Tensor<T>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = format!("{HEADER}\n");
    for (i, (name, t)) in tensors.iter().enumerate() {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("tensor name {name:?}")));
        }
        let file = format!("t{i:04}.bin");
        let path = dir.join(&file);
        fs::write(&path, t.bytes_le()).map_err(|e| Error::io(&path, e))?;
        writeln!(
            index,
            "{name} {} {} {file} 0",
            T::DTYPE.as_str(),
            shape_str(t.shape())
        )
        .expect("write to string");
    }
    let path = dir.join(INDEX);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn read_index(dir: &Path) -> Result<Vec<TensorEntry>> {
    let path = dir.join(INDEX);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Format(format!("{}: missing header", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = || Error::Format(format!("{}:{}: {line:?}", path.display(), n + 2));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(TensorEntry {
                name: f[0].to_string(),
                dtype: DType::parse(f[1]).ok_or_else(bad)?,
                shape: parse_shape(f[2]).ok_or_else(bad)?,
                file: f[3].to_string(),
                offset: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Reads every tensor in `dir`, converting stored values to `T`.
pub fn read_tensors<T: Element>(dir: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    read_index(dir)?
        .into_iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let n: usize = e.shape.iter().product();
            let size = e.dtype.size();
            let end = e.offset + n * size;
            if bytes.len() < end {
                return Err(Error::Format(format!(
                    "{}: {} bytes, need {end}",
                    path.display(),
                    bytes.len()
                )));
            }
            let raw = &bytes[e.offset..end];
            let data: Vec<T> = match e.dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| T::from_f64c(f32::read_le(c) as f64))
                    .collect(),
                DType::F64 => raw
                    .chunks_exact(8)
                    .map(|c| T::from_f64c(f64::read_le(c)))
                    .collect(),
            };
            Ok((e.name, Tensor::new(e.shape, data)?))
        })
        .collect()
}
