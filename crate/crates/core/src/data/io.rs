use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{MultiViewDataset, View, ViewKind};

pub const MANIFEST: &str = "manifest.txt";
const MAGIC: &[u8; 4] = b"MVM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    /// Whitespace- or comma-delimited rows.
    Text,
    /// `MVM1`, rows and cols as u64 LE, then row-major f64 LE.
    #[default]
    Binary,
}

/// Reads a matrix file, detecting the binary layout by its magic bytes.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = if bytes.starts_with(MAGIC) {
        parse_binary(path, &bytes)?
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::format(path, "neither MVM1 binary nor UTF-8 text"))?;
        parse_text(path, &text)?
    };
    if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            path,
            format!("non-finite entry at row {}, column {}", pos / m.cols(), pos % m.cols()),
        ));
    }
    Ok(m)
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 20 {
        return Err(Error::format(path, "truncated MVM1 header"));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("{rows}x{cols} needs {expected} payload bytes, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn parse_text(path: &Path, text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::format(path, format!("line {}: bad number {t:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(
                    path,
                    format!("line {}: {} columns, expected {}", lineno + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_matrix(path: &Path, m: &Matrix, format: MatrixFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MatrixFormat::Binary => (|| {
            w.write_all(MAGIC)?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()
        })(),
        MatrixFormat::Text => (|| {
            for row in m.row_iter() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()
        })(),
    };
    res.map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(path, format!("line {}: bad label {:?}", i + 1, l.trim())))
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Loads a dataset directory described by `manifest.txt`.
///
/// Manifest lines are `view <name> <path> <continuous|discrete>` and at most one
/// `labels <path>`; paths are relative to the directory. `#` starts a comment.
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    let manifest = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut views = Vec::new();
    let mut labels = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["view", name, rel, kind] => {
                let kind: ViewKind = kind
                    .parse()
                    .map_err(|_| Error::format(&manifest, format!("line {}: bad kind {kind:?}", i + 1)))?;
                let data = read_matrix(&dir.join(rel))?;
                views.push(View {
                    name: name.to_string(),
                    kind,
                    data,
                });
            }
            ["labels", rel] => {
                if labels.is_some() {
                    return Err(Error::format(&manifest, "more than one labels line"));
                }
                labels = Some(read_labels(&dir.join(rel))?);
            }
            _ => {
                return Err(Error::format(&manifest, format!("line {}: cannot parse {line:?}", i + 1)));
            }
        }
    }
    MultiViewDataset::new(views, labels).map_err(|e| Error::format(&manifest, e.to_string()))
}

/// Writes `ds` as a manifest plus one matrix file per view (and labels).
pub fn save_dataset(ds: &MultiViewDataset, dir: &Path, format: MatrixFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        MatrixFormat::Binary => "mvm",
        MatrixFormat::Text => "txt",
    };
    let mut manifest = String::new();
    for (i, v) in ds.views().iter().enumerate() {
        let file = format!("view{i}.{ext}");
        write_matrix(&dir.join(&file), &v.data, format)?;
        manifest.push_str(&format!("view {} {file} {}\n", v.name, v.kind));
    }
    if let Some(l) = ds.labels() {
        write_labels(&dir.join("labels.txt"), l)?;
        manifest.push_str("labels labels.txt\n");
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
