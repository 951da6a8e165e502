//! Pairwise constraints built from a labeled dataset, and the kernel
//! `⟨X_ij, X_kl⟩ = ((x_i − x_j)ᵀ(x_k − x_l))²` between them.

use std::borrow::Cow;
use std::collections::HashSet;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::qp::KernelMatrix;

/// Largest pair count for which the Gram matrix is materialized densely.
pub const DEFAULT_GRAM_CAP: usize = 4096;

/// Indicator value for a pair of samples with the same label.
pub const SIMILAR: f64 = -1.0;
/// Indicator value for a pair of samples with different labels.
pub const DISSIMILAR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairConstraint {
    pub i: usize,
    pub j: usize,
    /// `-1` for similar pairs, `+1` for dissimilar pairs.
    pub h: f64,
}

/// Ordered constraint list with the cached difference vector `x_i − x_j`
/// of every constraint.
#[derive(Clone, Debug)]
pub struct PairSet {
    constraints: Vec<PairConstraint>,
    diffs: Vec<f64>,
    dim: usize,
}

impl PairSet {
    /// Builds a pair set from explicit constraints against `data`.
    /// Indicators are recomputed from the labels.
    pub fn from_indices(data: &Dataset, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut set = PairSet {
            constraints: Vec::with_capacity(pairs.len()),
            diffs: Vec::with_capacity(pairs.len() * data.dim()),
            dim: data.dim(),
        };
        for &(i, j) in pairs {
            if i >= data.len() || j >= data.len() {
                return Err(Error::arg(format!("pair ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::arg(format!("pair ({i}, {i}) pairs a sample with itself")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::arg(format!("duplicate pair ({i}, {j})")));
            }
            set.push(data, i, j);
        }
        Ok(set)
    }

    /// Builds a pair set directly from difference vectors and indicators,
    /// without reference to a dataset. Sample indices are synthetic.
    pub fn from_diffs(diffs: Vec<Vec<f64>>, signs: Vec<f64>) -> Result<Self> {
        if diffs.len() != signs.len() {
            return Err(Error::arg("diff and sign counts differ"));
        }
        let dim = diffs.first().map_or(0, Vec::len);
        if dim == 0 || diffs.iter().any(|d| d.len() != dim) {
            return Err(Error::arg("difference vectors must share a positive length"));
        }
        if signs.iter().any(|&h| h != SIMILAR && h != DISSIMILAR) {
            return Err(Error::arg("indicators must be -1 or +1"));
        }
        let constraints = signs
            .iter()
            .enumerate()
            .map(|(p, &h)| PairConstraint {
                i: 2 * p,
                j: 2 * p + 1,
                h,
            })
            .collect();
        Ok(PairSet {
            constraints,
            diffs: diffs.concat(),
            dim,
        })
    }

    fn push(&mut self, data: &Dataset, i: usize, j: usize) {
        let h = if data.label(i) == data.label(j) {
            SIMILAR
        } else {
            DISSIMILAR
        };
        self.constraints.push(PairConstraint { i, j, h });
        self.diffs
            .extend(data.sample(i).iter().zip(data.sample(j)).map(|(a, b)| a - b));
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[PairConstraint] {
        &self.constraints
    }

    #[inline]
    pub fn diff(&self, p: usize) -> &[f64] {
        &self.diffs[p * self.dim..(p + 1) * self.dim]
    }

    pub fn signs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.h).collect()
    }

    pub fn count_similar(&self) -> usize {
        self.constraints.iter().filter(|c| c.h == SIMILAR).count()
    }

    pub fn count_dissimilar(&self) -> usize {
        self.len() - self.count_similar()
    }

    /// `Σ_p w_p (x_i − x_j)(x_i − x_j)ᵀ`
    pub fn weighted_outer_sum(&self, weights: &[f64]) -> SymMatrix {
        assert_eq!(weights.len(), self.len());
        let mut m = SymMatrix::zeros(self.dim);
        for (p, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                m.add_outer(w, self.diff(p));
            }
        }
        m
    }

    /// `⟨A, X_p⟩ = d_pᵀ A d_p` for every pair.
    pub fn frob_with_each(&self, a: &SymMatrix) -> Vec<f64> {
        (0..self.len()).map(|p| a.quad_form(self.diff(p))).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For every sample, pairs it with its `k` Euclidean-nearest same-class
/// samples (similar, `h = -1`) and its `k` farthest other-class samples
/// (dissimilar, `h = +1`). Ties go to the lower sample index; repeated
/// unordered pairs keep their first occurrence. Similar pairs come first.
pub fn build_constraints(data: &Dataset, k: usize) -> Result<PairSet> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::arg(format!(
            "constraint construction needs at least 2 distinct labels, found {}",
            classes.len()
        )));
    }
    let n = data.len();
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(2 * k * n);
    let mut set = PairSet {
        constraints: Vec::with_capacity(2 * k * n),
        diffs: Vec::with_capacity(2 * k * n * data.dim()),
        dim: data.dim(),
    };

    let mut similar = Vec::with_capacity(k * n);
    let mut dissimilar = Vec::with_capacity(k * n);
    for i in 0..n {
        let xi = data.sample(i);
        let mut same: Vec<(f64, usize)> = Vec::new();
        let mut other: Vec<(f64, usize)> = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let d = sq_dist(xi, data.sample(j));
            if data.label(j) == data.label(i) {
                same.push((d, j));
            } else {
                other.push((d, j));
            }
        }
        if same.is_empty() {
            log::warn!(
                "sample {i} is the only member of class {}; it contributes no similar pair",
                data.label(i)
            );
        }
        same.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        other.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        similar.extend(same.iter().take(k).map(|&(_, j)| (i, j)));
        dissimilar.extend(other.iter().take(k).map(|&(_, j)| (i, j)));
    }
    for (i, j) in similar.into_iter().chain(dissimilar) {
        if seen.insert((i.min(j), i.max(j))) {
            set.push(data, i, j);
        }
    }
    Ok(set)
}

/// `(d1ᵀ d2)²`, the Frobenius product of the rank-one matrices `d1 d1ᵀ` and
/// `d2 d2ᵀ`.
pub fn pair_kernel(d1: &[f64], d2: &[f64]) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::arg(format!(
            "pair_kernel: length mismatch {} vs {}",
            d1.len(),
            d2.len()
        )));
    }
    Ok(pair_kernel_unchecked(d1, d2))
}

#[inline]
fn pair_kernel_unchecked(d1: &[f64], d2: &[f64]) -> f64 {
    let dot: f64 = d1.iter().zip(d2).map(|(a, b)| a * b).sum();
    dot * dot
}

/// Dense Gram matrix of the pair kernel over a pair set.
#[derive(Clone, Debug)]
pub struct PairGram {
    pub entries: SymMatrix,
}

/// Dense Gram matrix with the default size cap.
pub fn gram(pairs: &PairSet) -> Result<PairGram> {
    gram_with_cap(pairs, DEFAULT_GRAM_CAP)
}

pub fn gram_with_cap(pairs: &PairSet, cap: usize) -> Result<PairGram> {
    let p = pairs.len();
    if p == 0 {
        return Err(Error::arg("gram: empty pair set"));
    }
    if p > cap {
        return Err(Error::Resource {
            what: "dense pair Gram matrix",
            pairs: p,
            entries: p.saturating_mul(p),
            cap,
        });
    }
    let mut data = vec![0.0; p * p];
    data.par_chunks_mut(p).enumerate().for_each(|(a, row)| {
        let da = pairs.diff(a);
        for (b, out) in row.iter_mut().enumerate() {
            *out = pair_kernel_unchecked(da, pairs.diff(b));
        }
    });
    Ok(PairGram {
        entries: SymMatrix::from_row_major(p, data)?,
    })
}

impl KernelMatrix for PairGram {
    fn size(&self) -> usize {
        self.entries.size()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.entries.row(i))
    }

    fn is_dense(&self) -> bool {
        true
    }
}

/// Pair kernel evaluated on demand from the difference vectors, for pair
/// sets too large to hold a dense Gram matrix.
#[derive(Clone, Debug)]
pub struct LazyPairKernel {
    diffs: Vec<f64>,
    dim: usize,
    len: usize,
}

impl LazyPairKernel {
    pub fn new(pairs: &PairSet) -> Self {
        LazyPairKernel {
            diffs: pairs.diffs.clone(),
            dim: pairs.dim,
            len: pairs.len(),
        }
    }

    fn diff(&self, p: usize) -> &[f64] {
        &self.diffs[p * self.dim..(p + 1) * self.dim]
    }
}

impl KernelMatrix for LazyPairKernel {
    fn size(&self) -> usize {
        self.len
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        pair_kernel_unchecked(self.diff(i), self.diff(j))
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let di = self.diff(i);
        Cow::Owned((0..self.len).map(|j| pair_kernel_unchecked(di, self.diff(j))).collect())
    }

    /// `(K v)_p = d_pᵀ (Σ_q v_q d_q d_qᵀ) d_p`, O(P d²) instead of O(P² d).
    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len);
        let mut s = SymMatrix::zeros(self.dim);
        for (q, &w) in v.iter().enumerate() {
            if w != 0.0 {
                s.add_outer(w, self.diff(q));
            }
        }
        (0..self.len).map(|p| s.quad_form(self.diff(p))).collect()
    }
}

/// Kernel access for a pair set: dense when it fits under the cap,
/// evaluated on demand otherwise.
#[derive(Clone, Debug)]
pub enum PairKernel {
    Dense(PairGram),
    Lazy(LazyPairKernel),
}

impl PairKernel {
    pub fn for_pairs(pairs: &PairSet, cap: usize) -> Result<Self> {
        if pairs.len() <= cap {
            Ok(PairKernel::Dense(gram_with_cap(pairs, cap)?))
        } else {
            log::info!(
                "P = {} exceeds the dense Gram cap {cap}; evaluating the kernel on demand",
                pairs.len()
            );
            Ok(PairKernel::Lazy(LazyPairKernel::new(pairs)))
        }
    }
}

impl KernelMatrix for PairKernel {
    fn size(&self) -> usize {
        match self {
            PairKernel::Dense(g) => g.size(),
            PairKernel::Lazy(l) => l.size(),
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            PairKernel::Dense(g) => g.entry(i, j),
            PairKernel::Lazy(l) => l.entry(i, j),
        }
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            PairKernel::Dense(g) => g.row(i),
            PairKernel::Lazy(l) => l.row(i),
        }
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            PairKernel::Dense(g) => g.mat_vec(v),
            PairKernel::Lazy(l) => l.mat_vec(v),
        }
    }

    fn is_dense(&self) -> bool {
        matches!(self, PairKernel::Dense(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_inner, min_eigenvalue};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_points() -> Dataset {
        Dataset::from_rows(
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![5.0, 0.0], vec![5.0, 1.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap()
    }

    fn unordered(set: &PairSet, h: f64) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = set
            .constraints()
            .iter()
            .filter(|c| c.h == h)
            .map(|c| (c.i.min(c.j), c.i.max(c.j)))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn four_point_example() {
        let set = build_constraints(&four_points(), 1).unwrap();
        assert_eq!(unordered(&set, SIMILAR), vec![(0, 1), (2, 3)]);
        assert_eq!(unordered(&set, DISSIMILAR), vec![(0, 3), (1, 2)]);
        assert_eq!(set.len(), 4);
        assert_eq!(set.diff(0), &[0.0, -1.0]);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![3, 3]).unwrap();
        assert!(matches!(build_constraints(&d, 1), Err(Error::Argument(_))));
        assert!(build_constraints(&four_points(), 0).is_err());
    }

    #[test]
    fn large_k_is_clamped_to_all_pairs() {
        let set = build_constraints(&four_points(), 10).unwrap();
        // all 6 unordered pairs of 4 points
        assert_eq!(set.len(), 6);
        assert_eq!(set.count_similar(), 2);
        assert_eq!(set.count_dissimilar(), 4);
    }

    #[test]
    fn singleton_class_contributes_no_similar_pair() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![9.0]], vec![0, 0, 1]).unwrap();
        let set = build_constraints(&d, 1).unwrap();
        assert_eq!(unordered(&set, SIMILAR), vec![(0, 1)]);
        assert!(set.constraints().iter().all(|c| c.i != c.j));
    }

    #[test]
    fn ties_prefer_lower_index() {
        // samples 1 and 2 are equidistant from 0
        let d = Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![-1.0], vec![10.0]],
            vec![0, 0, 0, 1],
        )
        .unwrap();
        let set = build_constraints(&d, 1).unwrap();
        let first = set.constraints()[0];
        assert_eq!((first.i, first.j), (0, 1));
    }

    #[test]
    fn pair_kernel_examples() {
        assert_eq!(pair_kernel(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(pair_kernel(&[1.0, 0.0], &[0.0, 4.0]).unwrap(), 0.0);
        assert_eq!(pair_kernel(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
        assert!(pair_kernel(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let one = PairSet::from_diffs(vec![vec![1.0, 2.0]], vec![SIMILAR]).unwrap();
        let g = gram(&one).unwrap();
        assert_eq!(g.entries.get(0, 0), 25.0);

        let two = PairSet::from_diffs(vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![SIMILAR, DISSIMILAR])
            .unwrap();
        let g = gram(&two).unwrap().entries;
        let det = g.get(0, 0) * g.get(1, 1) - g.get(0, 1) * g.get(1, 0);
        assert!(det.abs() < 1e-8);
    }

    #[test]
    fn gram_cap_is_a_resource_error() {
        let set = build_constraints(&four_points(), 10).unwrap();
        match gram_with_cap(&set, 3) {
            Err(Error::Resource { pairs, .. }) => assert_eq!(pairs, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gram_matches_frobenius_products_and_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let diffs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let set = PairSet::from_diffs(diffs.clone(), vec![SIMILAR; 5]).unwrap();
        let g = gram(&set).unwrap().entries;
        for p in 0..5 {
            for q in 0..5 {
                let direct = frob_inner(&SymMatrix::outer(&diffs[p]), &SymMatrix::outer(&diffs[q])).unwrap();
                assert!((g.get(p, q) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
                assert_eq!(g.get(p, q), pair_kernel(&diffs[p], &diffs[q]).unwrap());
            }
        }
        let scale = g.diagonal().into_iter().fold(0.0, f64::max);
        assert!(min_eigenvalue(&g).unwrap() >= -1e-8 * scale);
    }

    #[test]
    fn lazy_kernel_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let diffs: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let set = PairSet::from_diffs(diffs, vec![DISSIMILAR; 7]).unwrap();
        let dense = gram(&set).unwrap();
        let lazy = LazyPairKernel::new(&set);
        let v: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        for p in 0..7 {
            assert_eq!(dense.row(p).as_ref(), lazy.row(p).as_ref());
        }
        for (a, b) in dense.mat_vec(&v).iter().zip(lazy.mat_vec(&v)) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn from_indices_validates() {
        let d = four_points();
        assert!(PairSet::from_indices(&d, &[(0, 0)]).is_err());
        assert!(PairSet::from_indices(&d, &[(0, 1), (1, 0)]).is_err());
        let s = PairSet::from_indices(&d, &[(0, 1), (0, 2)]).unwrap();
        assert_eq!(s.signs(), vec![SIMILAR, DISSIMILAR]);
    }
}
