use std::path::Path;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::MetricModel;

pub const DEFAULT_THRESHOLDS: usize = 200;

/// A labeled test pair referring to rows of a feature file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerificationPair {
    pub a: usize,
    pub b: usize,
    pub matched: bool,
}

/// Parses `idx_a,idx_b,matched` rows (0-based indices, `matched` in {0, 1}).
/// A non-numeric first line is taken as a header.
pub fn parse_pair_csv(text: &str, name: &str) -> Result<Vec<VerificationPair>> {
    let mut pairs = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let was_first = std::mem::replace(&mut first, false);
        if was_first && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if cells.len() != 3 {
            return Err(Error::parse(name, line_no, format!("expected 3 columns, found {}", cells.len())));
        }
        let index = |c: &str| {
            c.parse::<usize>()
                .map_err(|_| Error::parse(name, line_no, format!("bad sample index `{c}`")))
        };
        let matched = match cells[2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(name, line_no, format!("matched flag must be 0 or 1, got `{other}`")))
            }
        };
        pairs.push(VerificationPair {
            a: index(cells[0])?,
            b: index(cells[1])?,
            matched,
        });
    }
    if pairs.is_empty() {
        return Err(Error::parse(name, 0, "pair file contains no pairs"));
    }
    Ok(pairs)
}

pub fn read_pair_file(path: &Path) -> Result<Vec<VerificationPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pair_csv(&text, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocReport {
    /// Sweep in increasing threshold order, starting at `−∞` and ending at
    /// `+∞`.
    pub points: Vec<RocPoint>,
    /// Best accuracy of the rule `matched ⇔ distance ≤ t` over all `t`.
    pub best_accuracy: f64,
    /// Smallest threshold attaining `best_accuracy` (`−∞` if declaring
    /// every pair mismatched is optimal).
    pub best_threshold: f64,
    pub matched: usize,
    pub mismatched: usize,
}

impl RocReport {
    /// `threshold,tpr,fpr,accuracy` with one row per sweep point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fpr,accuracy\n");
        for p in &self.points {
            out.push_str(&format!("{:?},{:?},{:?},{:?}\n", p.threshold, p.tpr, p.fpr, p.accuracy));
        }
        out
    }
}

/// ROC sweep and best accuracy for `matched ⇔ distance ≤ t`.
///
/// The sweep uses `n_thresholds` equally spaced thresholds from the smallest
/// to the largest distance plus `±∞`. The best accuracy is exact: it is
/// taken over every observed distance, not just the grid.
pub fn roc_from_distances(distances: &[f64], matched: &[bool], n_thresholds: usize) -> Result<RocReport> {
    if distances.len() != matched.len() {
        return Err(Error::arg("distance and label counts differ"));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::numerical("non-finite pair distance"));
    }
    let pos = matched.iter().filter(|&&m| m).count();
    let neg = matched.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg(
            "verification needs both matched and mismatched pairs for a ROC curve",
        ));
    }
    if n_thresholds == 0 {
        return Err(Error::arg("n_thresholds must be at least 1"));
    }
    let total = matched.len() as f64;
    let rates = |t: f64| {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&d, &m) in distances.iter().zip(matched) {
            if d <= t {
                if m {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        RocPoint {
            threshold: t,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
            accuracy: (tp + neg - fp) as f64 / total,
        }
    };

    let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut points = Vec::with_capacity(n_thresholds + 2);
    points.push(rates(f64::NEG_INFINITY));
    for s in 0..n_thresholds {
        let t = if n_thresholds == 1 {
            hi
        } else {
            lo + (hi - lo) * s as f64 / (n_thresholds - 1) as f64
        };
        points.push(rates(t));
    }
    points.push(rates(f64::INFINITY));

    // exact sweep over the sorted distances
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&x, &y| distances[x].total_cmp(&distances[y]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best_accuracy = neg as f64 / total;
    let mut best_threshold = f64::NEG_INFINITY;
    let mut k = 0;
    while k < order.len() {
        let t = distances[order[k]];
        while k < order.len() && distances[order[k]] == t {
            if matched[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let acc = (tp + neg - fp) as f64 / total;
        if acc > best_accuracy {
            best_accuracy = acc;
            best_threshold = t;
        }
    }
    Ok(RocReport {
        points,
        best_accuracy,
        best_threshold,
        matched: pos,
        mismatched: neg,
    })
}

/// Distances of `pairs` under `model`, then [`roc_from_distances`].
pub fn verify_pairs(
    model: &MetricModel,
    data: &Dataset,
    pairs: &[VerificationPair],
    n_thresholds: usize,
) -> Result<RocReport> {
    let mut distances = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.a >= data.len() || p.b >= data.len() {
            return Err(Error::arg(format!(
                "pair ({}, {}) refers past the {} feature rows",
                p.a,
                p.b,
                data.len()
            )));
        }
        distances.push(model.distance2(data.sample(p.a), data.sample(p.b))?);
    }
    let matched: Vec<bool> = pairs.iter().map(|p| p.matched).collect();
    roc_from_distances(&distances, &matched, n_thresholds)
}
