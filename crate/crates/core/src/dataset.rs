//! Labeled feature matrices and the text formats they are read from.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// `N × d` feature matrix (row-major) with one integer label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<i64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<i64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dataset dimension must be at least 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::arg(format!(
                "feature buffer has {} values, expected {} x {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite feature at sample {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i64>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("rows have inconsistent lengths"));
        }
        if rows.len() != labels.len() {
            return Err(Error::arg("row count and label count differ"));
        }
        Self::new(rows.concat(), labels, dim)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> i64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn classes(&self) -> Vec<i64> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
        }
    }

    /// Same samples with labels replaced.
    pub fn with_labels(&self, labels: Vec<i64>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// Comma-separated values, label in the last column, optional header.
    Csv,
    /// `label idx:val ...` with 1-based indices.
    Libsvm,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "libsvm" | "svmlight" => Ok(Format::Libsvm),
            other => Err(Error::arg(format!("unknown dataset format `{other}`"))),
        }
    }
}

pub fn read_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        Format::Csv => parse_csv(&text, &name),
        Format::Libsvm => parse_libsvm(&text, &name),
    }
}

fn parse_label(tok: &str, name: &str, line: usize) -> Result<i64> {
    let tok = tok.trim();
    if let Ok(v) = tok.strip_prefix('+').unwrap_or(tok).parse::<i64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::parse(name, line, format!("label `{tok}` is not an integer"))),
    }
}

/// Parses the CSV dataset format. A first line whose cells are not all
/// numeric is taken as a header.
pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim: Option<usize> = None;
    let mut seen_record = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_record && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            seen_record = true;
            continue;
        }
        seen_record = true;
        if cells.len() < 2 {
            return Err(Error::parse(name, line_no, "need at least one feature and a label"));
        }
        let width = cells.len() - 1;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::parse(
                    name,
                    line_no,
                    format!("expected {d} feature columns, found {width}"),
                ))
            }
            _ => {}
        }
        for (col, c) in cells[..width].iter().enumerate() {
            let v: f64 = c.parse().map_err(|_| {
                Error::parse(name, line_no, format!("column {}: `{c}` is not a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(name, line_no, format!("column {}: non-finite value", col + 1)));
            }
            features.push(v);
        }
        labels.push(parse_label(cells[width], name, line_no)?);
    }
    let dim = dim.ok_or_else(|| Error::parse(name, 0, "no data records"))?;
    Dataset::new(features, labels, dim)
}

/// Parses the sparse `label idx:val` format. The dimension is the largest
/// index seen; absent entries are zero.
pub fn parse_libsvm(text: &str, name: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = parse_label(toks.next().expect("nonempty line"), name, line_no)?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(name, line_no, format!("expected idx:val, got `{tok}`")))?;
            let i: usize = i
                .parse()
                .map_err(|_| Error::parse(name, line_no, format!("bad index `{i}`")))?;
            if i == 0 {
                return Err(Error::parse(name, line_no, "indices are 1-based"));
            }
            if i <= last {
                return Err(Error::parse(name, line_no, "indices must be strictly increasing"));
            }
            last = i;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::parse(name, line_no, format!("bad value `{v}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(name, line_no, "non-finite value"));
            }
            dim = dim.max(i);
            entries.push((i - 1, v));
        }
        rows.push(entries);
        labels.push(label);
    }
    if rows.is_empty() || dim == 0 {
        return Err(Error::parse(name, 0, "no data records"));
    }
    let mut features = vec![0.0; rows.len() * dim];
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features[r * dim + c] = v;
        }
    }
    Dataset::new(features, labels, dim)
}

/// Writes the CSV dataset format with a header row.
pub fn to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..data.dim()).map(|c| format!("x{c}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for i in 0..data.len() {
        for v in data.sample(i) {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{}\n", data.label(i)));
    }
    out
}
