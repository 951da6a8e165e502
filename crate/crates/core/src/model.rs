//! The learned metric: distance evaluation, 1-NN prediction and the
//! `metricforge-model v1` text format.
//!
//! # File format
//!
//! ```text
//! metricforge-model v1
//! algorithm <pcml|ncml|identity>
//! dim <d>
//! C <float>
//! eps <float>
//! iterations <integer>
//! converged <true|false>
//! final_gap <float>
//! matrix
//! <d lines of d space-separated floats>
//! [coeffs <P>
//!  <P lines: mu_p followed by the d entries of the difference vector>]
//! end
//! ```
//!
//! Floats are written with 17 significant digits, so a save/load round trip
//! reproduces every value bit for bit.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};

pub const MODEL_MAGIC: &str = "metricforge-model v1";
const PSD_TOL: f64 = 1e-8;
const COEFF_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Pcml,
    Ncml,
    /// Plain Euclidean metric, used as a baseline.
    Identity,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Pcml => "pcml",
            Algorithm::Ncml => "ncml",
            Algorithm::Identity => "identity",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcml" => Ok(Algorithm::Pcml),
            "ncml" => Ok(Algorithm::Ncml),
            "identity" => Ok(Algorithm::Identity),
            other => Err(Error::arg(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    pub algorithm: Algorithm,
    pub c: f64,
    pub eps: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: f64,
}

/// `M = Σ_p μ_p d_p d_pᵀ` in coefficient form.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub mus: Vec<f64>,
    /// Row-major `P × d` difference vectors.
    pub diffs: Vec<f64>,
}

impl Coefficients {
    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    fn diff(&self, p: usize, dim: usize) -> &[f64] {
        &self.diffs[p * dim..(p + 1) * dim]
    }

    fn to_matrix(&self, dim: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for (p, &mu) in self.mus.iter().enumerate() {
            if mu != 0.0 {
                m.add_outer(mu, self.diff(p, dim));
            }
        }
        m
    }
}

/// Scale used by the PSD and reconstruction checks.
pub fn check_scale(m: &SymMatrix) -> f64 {
    m.max_abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricModel {
    matrix: SymMatrix,
    meta: ModelMeta,
    coeffs: Option<Coefficients>,
}

impl MetricModel {
    /// Wraps a matrix after checking that it is PSD within `1e-8` scale.
    pub fn new(matrix: SymMatrix, meta: ModelMeta) -> Result<Self> {
        Self::with_coefficients(matrix, meta, None)
    }

    pub fn with_coefficients(
        matrix: SymMatrix,
        meta: ModelMeta,
        coeffs: Option<Coefficients>,
    ) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::Integrity("metric matrix has non-finite entries".into()));
        }
        let scale = check_scale(&matrix);
        let min_eig = sym_eig(&matrix)?.min_value();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::Integrity(format!(
                "metric matrix is not PSD: min eigenvalue {min_eig:e}"
            )));
        }
        if let Some(c) = &coeffs {
            let dim = matrix.dim();
            if c.diffs.len() != c.mus.len() * dim {
                return Err(Error::Integrity("coefficient block has the wrong shape".into()));
            }
            if c.mus.iter().any(|&m| m.is_nan() || m < 0.0) {
                return Err(Error::Integrity("coefficients must be nonnegative".into()));
            }
            let err = c.to_matrix(dim).sub(&matrix)?.max_abs();
            if err > COEFF_TOL * scale {
                return Err(Error::Integrity(format!(
                    "coefficients reproduce the matrix only to {err:e}"
                )));
            }
        }
        Ok(MetricModel {
            matrix,
            meta,
            coeffs,
        })
    }

    pub fn identity(dim: usize) -> Self {
        MetricModel {
            matrix: SymMatrix::identity(dim),
            meta: ModelMeta {
                algorithm: Algorithm::Identity,
                c: 0.0,
                eps: 0.0,
                iterations: 0,
                converged: true,
                final_gap: 0.0,
            },
            coeffs: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn coefficients(&self) -> Option<&Coefficients> {
        self.coeffs.as_ref()
    }

    /// Same model with the matrix multiplied by `s > 0`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::arg("rescaling factor must be positive"));
        }
        let coeffs = self.coeffs.as_ref().map(|c| Coefficients {
            mus: c.mus.iter().map(|m| m * s).collect(),
            diffs: c.diffs.clone(),
        });
        Ok(MetricModel {
            matrix: self.matrix.scaled(s),
            meta: self.meta.clone(),
            coeffs,
        })
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::arg(format!(
                "vector has length {}, model dimension is {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Squared Mahalanobis distance `(x − y)ᵀ M (x − y)`, clamped at zero.
    pub fn distance2(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.check_len(y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(self.matrix.quad_form(&diff).max(0.0))
    }

    /// Same distance through the coefficient expansion
    /// `Σ_p μ_p (d_pᵀ (x − y))²`, when coefficients are present.
    pub fn coefficient_distance2(&self, x: &[f64], y: &[f64]) -> Result<Option<f64>> {
        self.check_len(x)?;
        self.check_len(y)?;
        let Some(c) = &self.coeffs else {
            return Ok(None);
        };
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let d = self.dim();
        let total = (0..c.len())
            .map(|p| {
                let dot: f64 = c.diff(p, d).iter().zip(&diff).map(|(a, b)| a * b).sum();
                c.mus[p] * dot * dot
            })
            .sum();
        Ok(Some(total))
    }

    /// Label of the nearest training sample; ties go to the lowest index.
    pub fn predict_1nn(&self, train: &Dataset, query: &[f64]) -> Result<i64> {
        Ok(train.label(self.nearest(train, query)?))
    }

    /// Index of the nearest training sample; ties go to the lowest index.
    pub fn nearest(&self, train: &Dataset, query: &[f64]) -> Result<usize> {
        if train.is_empty() {
            return Err(Error::arg("predict_1nn: empty training set"));
        }
        if train.dim() != self.dim() {
            return Err(Error::arg(format!(
                "training set has dimension {}, model dimension is {}",
                train.dim(),
                self.dim()
            )));
        }
        self.check_len(query)?;
        let mut best = (f64::INFINITY, 0usize);
        let mut diff = vec![0.0; self.dim()];
        for i in 0..train.len() {
            for (d, (a, b)) in diff.iter_mut().zip(query.iter().zip(train.sample(i))) {
                *d = a - b;
            }
            let dist = self.matrix.quad_form(&diff);
            if dist < best.0 {
                best = (dist, i);
            }
        }
        Ok(best.1)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MODEL_MAGIC);
        out.push('\n');
        out.push_str(&format!("algorithm {}\n", self.meta.algorithm));
        out.push_str(&format!("dim {}\n", self.dim()));
        out.push_str(&format!("C {}\n", fmt_f64(self.meta.c)));
        out.push_str(&format!("eps {}\n", fmt_f64(self.meta.eps)));
        out.push_str(&format!("iterations {}\n", self.meta.iterations));
        out.push_str(&format!("converged {}\n", self.meta.converged));
        out.push_str(&format!("final_gap {}\n", fmt_f64(self.meta.final_gap)));
        out.push_str("matrix\n");
        for i in 0..self.dim() {
            out.push_str(&join_floats(self.matrix.row(i)));
            out.push('\n');
        }
        if let Some(c) = &self.coeffs {
            out.push_str(&format!("coeffs {}\n", c.len()));
            for p in 0..c.len() {
                out.push_str(&fmt_f64(c.mus[p]));
                out.push(' ');
                out.push_str(&join_floats(c.diff(p, self.dim())));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let raw = RawModel::parse(text, source_name)?;
        raw.validate()
    }

    /// Writes the model atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// A parsed model file that has not been integrity-checked yet.
#[derive(Clone, Debug)]
pub struct RawModel {
    pub matrix: SymMatrix,
    pub meta: ModelMeta,
    pub coeffs: Option<Coefficients>,
    /// Largest `|M_ij − M_ji|` in the file before symmetrization.
    pub asymmetry: f64,
}

impl RawModel {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(name, text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
        };

        let (ln, magic) = next("header")?;
        if magic != MODEL_MAGIC {
            return Err(Error::parse(name, ln, format!("expected `{MODEL_MAGIC}`, found `{magic}`")));
        }
        let algorithm = keyed(next("algorithm")?, "algorithm", name)?;
        let algorithm: Algorithm = algorithm.1.parse().map_err(|_| {
            Error::parse(name, algorithm.0, format!("unknown algorithm `{}`", algorithm.1))
        })?;
        let dim: usize = parse_keyed(next("dim")?, "dim", name)?;
        if dim == 0 {
            return Err(Error::parse(name, 3, "dim must be at least 1"));
        }
        let c: f64 = parse_keyed(next("C")?, "C", name)?;
        let eps: f64 = parse_keyed(next("eps")?, "eps", name)?;
        let iterations: usize = parse_keyed(next("iterations")?, "iterations", name)?;
        let converged: bool = parse_keyed(next("converged")?, "converged", name)?;
        let final_gap: f64 = parse_keyed(next("final_gap")?, "final_gap", name)?;
        let (ln, tag) = next("`matrix`")?;
        if tag != "matrix" {
            return Err(Error::parse(name, ln, format!("expected `matrix`, found `{tag}`")));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            let (ln, line) = next("matrix row")?;
            let row = parse_floats(line, name, ln)?;
            if row.len() != dim {
                return Err(Error::parse(name, ln, format!("expected {dim} values, found {}", row.len())));
            }
            data.extend(row);
        }
        let mut asymmetry: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                asymmetry = asymmetry.max((data[i * dim + j] - data[j * dim + i]).abs());
            }
        }
        let matrix = SymMatrix::from_row_major(dim, data)?;

        let (ln, tag) = next("`coeffs` or `end`")?;
        let mut coeffs = None;
        let end = if let Some(count) = tag.strip_prefix("coeffs ") {
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(name, ln, format!("bad coefficient count `{count}`")))?;
            let mut mus = Vec::with_capacity(count);
            let mut diffs = Vec::with_capacity(count * dim);
            for _ in 0..count {
                let (ln, line) = next("coefficient row")?;
                let row = parse_floats(line, name, ln)?;
                if row.len() != dim + 1 {
                    return Err(Error::parse(name, ln, format!("expected {} values, found {}", dim + 1, row.len())));
                }
                mus.push(row[0]);
                diffs.extend_from_slice(&row[1..]);
            }
            coeffs = Some(Coefficients { mus, diffs });
            next("`end`")?
        } else {
            (ln, tag)
        };
        if end.1 != "end" {
            return Err(Error::parse(name, end.0, format!("expected `end`, found `{}`", end.1)));
        }
        Ok(RawModel {
            matrix,
            meta: ModelMeta {
                algorithm,
                c,
                eps,
                iterations,
                converged,
                final_gap,
            },
            coeffs,
            asymmetry,
        })
    }

    pub fn validate(self) -> Result<MetricModel> {
        let scale = check_scale(&self.matrix);
        if self.asymmetry > PSD_TOL * scale {
            return Err(Error::Integrity(format!(
                "matrix is not symmetric (max |M_ij - M_ji| = {:e})",
                self.asymmetry
            )));
        }
        MetricModel::with_coefficients(self.matrix, self.meta, self.coeffs)
    }
}

fn keyed<'a>((ln, line): (usize, &'a str), key: &str, name: &str) -> Result<(usize, &'a str)> {
    match line.split_once(char::is_whitespace) {
        Some((k, v)) if k == key => Ok((ln, v.trim())),
        _ => Err(Error::parse(name, ln, format!("expected `{key} <value>`, found `{line}`"))),
    }
}

fn parse_keyed<T: FromStr>(line: (usize, &str), key: &str, name: &str) -> Result<T> {
    let (ln, v) = keyed(line, key, name)?;
    v.parse()
        .map_err(|_| Error::parse(name, ln, format!("bad value `{v}` for `{key}`")))
}

fn parse_floats(line: &str, name: &str, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(name, ln, format!("bad number `{t}`")))
        })
        .collect()
}

/// 17 significant digits: exact round trip for every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::arg(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
