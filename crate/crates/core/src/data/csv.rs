//! `f0,…,f{d-1}[,label]` files with a mandatory header row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Role};
use crate::error::{io_err, Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing header row"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = columns.last() == Some(&"label");
    let d = columns.len() - usize::from(has_label);
    for (j, c) in columns[..d].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(path, 1, format!("header column {j} is '{c}', expected 'f{j}'")));
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("row has {} cells, header has {}", cells.len(), columns.len()),
            ));
        }
        let row = cells[..d]
            .iter()
            .enumerate()
            .map(|(j, c)| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, lineno, format!("column f{j}: '{c}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        if has_label {
            let c = cells[d];
            labels.push(
                c.parse::<usize>()
                    .map_err(|_| parse_err(path, lineno, format!("label '{c}' is not a class index")))?,
            );
        }
    }
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, has_label.then_some(labels), role)
}

/// Writes the dataset with shortest round-trip float formatting.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let d = dataset.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    out.push_str(&header.join(","));
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in dataset.features.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").unwrap();
        }
        if let Some(labels) = &dataset.labels {
            write!(out, ",{}", labels[i]).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
