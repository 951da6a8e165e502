//! Dense symmetric linear algebra: Frobenius products, a cyclic Jacobi
//! eigensolver and projection onto the PSD cone.

use std::fmt;

use crate::error::{Error, Result};

/// Off-diagonal mass (relative to the Frobenius norm) at which Jacobi stops.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Eigenvalues with magnitude below this fraction of ‖A‖_F are clamped to zero.
const CLAMP_TOL: f64 = 1e-12;

/// Dense symmetric `dim × dim` matrix stored as a full row-major square.
///
/// Every constructor and mutator writes both `(i, j)` and `(j, i)`, so the
/// stored entries are exactly symmetric.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds a matrix from a row-major square buffer, symmetrizing as
    /// `(A + Aᵀ) / 2`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::arg(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut m = SymMatrix { dim, data };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = 0.5 * (m.data[i * dim + j] + m.data[j * dim + i]);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("rows must form a square matrix"));
        }
        Self::from_row_major(dim, rows.concat())
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)`, `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(1.0, v);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `self += scale · v vᵀ`
    pub fn add_outer(&mut self, scale: f64, v: &[f64]) {
        assert_eq!(v.len(), self.dim, "outer product length mismatch");
        let d = self.dim;
        for i in 0..d {
            let si = scale * v[i];
            if si == 0.0 {
                continue;
            }
            for (out, vj) in self.data[i * d + i..(i + 1) * d].iter_mut().zip(&v[i..]) {
                *out += si * vj;
            }
        }
        self.mirror_upper();
    }

    fn mirror_upper(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                self.data[j * d + i] = self.data[i * d + j];
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self, other)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self, other)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `vᵀ A v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim, "quadratic form length mismatch");
        let mut acc = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = self.row(i);
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += vi * dot;
        }
        acc
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "matrix-vector length mismatch");
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_dims(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::arg(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(())
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frob_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Eigendecomposition `A = U diag(values) Uᵀ` with eigenvalues sorted in
/// descending order. Column `k` of `U` pairs with `values[k]`.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    /// Row-major `d × d`; columns are eigenvectors.
    pub vectors: Vec<f64>,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Copy of the `k`-th eigenvector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|r| self.vectors[r * d + k]).collect()
    }

    /// `U diag(values) Uᵀ` with the given replacement spectrum.
    pub fn compose(&self, values: &[f64]) -> SymMatrix {
        let d = self.dim();
        assert_eq!(values.len(), d);
        let mut out = SymMatrix::zeros(d);
        for (k, &lam) in values.iter().enumerate() {
            if lam != 0.0 {
                out.add_outer(lam, &self.vector(k));
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.compose(&self.values)
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::arg("sym_eig: matrix has non-finite entries"));
    }
    let n = a.dim;
    let mut m = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let norm = a.frob_norm();
    let target = JACOBI_TOL * norm;
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    m[r * n + p] = new_rp;
                    m[p * n + r] = new_rp;
                    m[r * n + q] = new_rq;
                    m[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (dim {n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y * n + y].total_cmp(&m[x * n + x]).then(x.cmp(&y)));
    let values: Vec<f64> = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_k] = v[r * n + old_k];
        }
    }
    Ok(EigenDecomp { values, vectors })
}

/// Spectral split of a projected matrix: `y0 = U Λ Uᵀ`, `projected = U Λ₊ Uᵀ`.
#[derive(Clone, Debug)]
pub struct PsdSplit {
    pub projected: SymMatrix,
    pub eig: EigenDecomp,
    /// `Λ₊` after clamping.
    pub positive: Vec<f64>,
}

impl PsdSplit {
    /// `Λ₋ = Λ₊ − Λ`, the (nonnegative) spectrum of `projected − y0`.
    pub fn negative_part(&self) -> Vec<f64> {
        self.positive
            .iter()
            .zip(&self.eig.values)
            .map(|(p, l)| p - l)
            .collect()
    }
}

/// Projects onto the PSD cone and keeps the spectrum for later use.
pub fn psd_split(y0: &SymMatrix) -> Result<PsdSplit> {
    let eig = sym_eig(y0)?;
    let floor = CLAMP_TOL * y0.frob_norm();
    let positive: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l.abs() <= floor { 0.0 } else { l.max(0.0) })
        .collect();
    let projected = eig.compose(&positive);
    Ok(PsdSplit {
        projected,
        eig,
        positive,
    })
}

/// Frobenius-nearest PSD matrix: `U max(Λ, 0) Uᵀ`.
pub fn psd_project(y0: &SymMatrix) -> Result<SymMatrix> {
    Ok(psd_split(y0)?.projected)
}

pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(a)?.min_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    fn orthogonality_error(e: &EigenDecomp) -> f64 {
        let d = e.dim();
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d).map(|r| e.vectors[r * d + a] * e.vectors[r * d + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn frob_inner_examples() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(frob_inner(&i2, &i2).unwrap(), 2.0);
        let a = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(frob_inner(&a, &SymMatrix::zeros(2)).unwrap(), 0.0);
        let p = SymMatrix::from_diag(&[1.0, 2.0]);
        let q = SymMatrix::from_diag(&[3.0, 4.0]);
        assert_eq!(frob_inner(&p, &q).unwrap(), 11.0);
    }

    #[test]
    fn frob_inner_dimension_mismatch() {
        let err = frob_inner(&SymMatrix::identity(2), &SymMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::from_row_major(2, vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert!(SymMatrix::from_row_major(2, vec![1.0; 3]).is_err());
        assert!(SymMatrix::from_row_major(0, vec![]).is_err());
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!(orthogonality_error(&e) < 1e-14);
    }

    #[test]
    fn eig_diagonal_sorted() {
        let e = sym_eig(&SymMatrix::from_diag(&[-1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, -1.0]);
        let u0 = e.vector(0);
        assert!((u0[0].abs() - 0.0).abs() < 1e-15 && (u0[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(sym_eig(&m), Err(Error::Argument(_))));
    }

    #[test]
    fn eig_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2, 3, 6, 10, 20] {
            for _ in 0..20 {
                let a = random_sym(&mut rng, d);
                let e = sym_eig(&a).unwrap();
                assert!(orthogonality_error(&e) <= 1e-10);
                let err = max_abs_diff(&e.reconstruct(), &a);
                assert!(err <= 1e-8 * a.max_abs().max(1.0), "d={d} err={err}");
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn eig_repeated_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 2..12 {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = SymMatrix::identity(d);
            a.add_outer(0.5, &v);
            let e = sym_eig(&a).unwrap();
            assert!(orthogonality_error(&e) <= 1e-10);
            assert!(max_abs_diff(&e.reconstruct(), &a) <= 1e-8 * a.max_abs().max(1.0));
            // d-1 eigenvalues equal to one
            let ones = e.values.iter().filter(|l| (*l - 1.0).abs() < 1e-10).count();
            assert!(ones >= d - 1);
        }
    }

    #[test]
    fn project_examples() {
        let p = psd_project(&SymMatrix::from_diag(&[2.0, -3.0])).unwrap();
        assert!(max_abs_diff(&p, &SymMatrix::from_diag(&[2.0, 0.0])) < 1e-15);

        let mut a = SymMatrix::zeros(3);
        a.add_outer(2.0, &[1.0, 0.5, -0.3]);
        a.add_outer(1.0, &[0.0, 1.0, 1.0]);
        let p = psd_project(&a).unwrap();
        assert!(max_abs_diff(&p, &a) <= 1e-10);
    }

    #[test]
    fn project_is_idempotent_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=12 {
            let y0 = random_sym(&mut rng, d);
            let y = psd_project(&y0).unwrap();
            let again = psd_project(&y).unwrap();
            assert!(max_abs_diff(&y, &again) <= 1e-10);
            let scale = y0.max_abs().max(1.0);
            assert!(min_eigenvalue(&y).unwrap() >= -1e-9 * scale);
            // <Y - Y0, Y> = 0 at the projection
            let g = frob_inner(&y.sub(&y0).unwrap(), &y).unwrap();
            assert!(g >= -1e-8, "optimality violated: {g}");
        }
    }

    #[test]
    fn frobenius_norm_of_negative_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 2..10 {
            let y0 = random_sym(&mut rng, d);
            let split = psd_split(&y0).unwrap();
            let m = split.projected.sub(&y0).unwrap();
            let lhs = frob_inner(&m, &m).unwrap();
            let rhs: f64 = split.negative_part().iter().map(|l| l * l).sum();
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.max(1e-300).max(lhs));
        }
    }
}
