use super::cache::RowCache;
use super::{KernelMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};

/// `max −½ μᵀKμ + γᵀμ` subject to `μ ≥ 0`.
pub struct NonnegQp<'a> {
    pub kernel: &'a dyn KernelMatrix,
    pub linear: Vec<f64>,
    pub tol: f64,
    pub warm: Option<Vec<f64>>,
    pub max_sweeps: usize,
}

impl<'a> NonnegQp<'a> {
    pub fn new(kernel: &'a dyn KernelMatrix, linear: Vec<f64>) -> Self {
        NonnegQp {
            kernel,
            linear,
            tol: DEFAULT_TOL,
            warm: None,
            max_sweeps: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_warm(mut self, warm: Vec<f64>) -> Self {
        self.warm = Some(warm);
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }
}

#[derive(Clone, Debug)]
pub struct NonnegSolution {
    pub mus: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// Number of coordinates actually moved.
    pub updates: usize,
}

/// Elementwise KKT violation for gradient `g = γ − Kμ`.
#[inline]
fn violation(mu: f64, g: f64) -> f64 {
    if mu > 0.0 {
        g.abs()
    } else {
        g.max(0.0)
    }
}

/// Cyclic projected coordinate ascent,
/// `μ_p ← max(0, μ_p + (γ_p − (Kμ)_p) / K_pp)`, with an incrementally
/// maintained gradient.
pub fn solve_nonneg(problem: NonnegQp<'_>) -> Result<NonnegSolution> {
    let kernel = problem.kernel;
    let n = kernel.size();
    if n == 0 {
        return Err(Error::arg("nonnegative QP: empty problem"));
    }
    if problem.linear.len() != n {
        return Err(Error::arg(format!(
            "nonnegative QP: kernel is {n}x{n} but linear has {} entries",
            problem.linear.len()
        )));
    }
    if problem.tol.is_nan() || problem.tol <= 0.0 {
        return Err(Error::arg("nonnegative QP: tolerance must be positive"));
    }
    if problem.linear.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("nonnegative QP: non-finite linear term"));
    }
    let mut mu = match problem.warm {
        Some(w) => {
            if w.len() != n {
                return Err(Error::arg("nonnegative QP: warm start has the wrong length"));
            }
            if w.iter().any(|&m| m.is_nan() || m < 0.0) {
                return Err(Error::arg("nonnegative QP: warm start must be elementwise >= 0"));
            }
            w
        }
        None => vec![0.0; n],
    };

    let diag: Vec<f64> = (0..n).map(|i| kernel.diag(i)).collect();
    let mut grad = problem.linear.clone();
    if mu.iter().any(|&m| m != 0.0) {
        let km = kernel.mat_vec(&mu);
        for (g, k) in grad.iter_mut().zip(km) {
            *g -= k;
        }
    }
    let mut rows = RowCache::new(kernel);
    let max_violation =
        |mu: &[f64], grad: &[f64]| mu.iter().zip(grad).map(|(&m, &g)| violation(m, g)).fold(0.0, f64::max);

    let mut sweeps = 0;
    let mut updates = 0;
    let mut residual = max_violation(&mu, &grad);
    while residual > problem.tol {
        if sweeps >= problem.max_sweeps {
            return Err(Error::numerical(format!(
                "nonnegative QP hit the sweep cap {} with KKT violation {residual:e}",
                problem.max_sweeps
            )));
        }
        sweeps += 1;
        for p in 0..n {
            let g = grad[p];
            if violation(mu[p], g) <= problem.tol {
                continue;
            }
            if diag[p] <= 0.0 {
                if g > 0.0 {
                    return Err(Error::numerical(format!(
                        "nonnegative QP is unbounded along coordinate {p} (zero curvature, gradient {g:e})"
                    )));
                }
                continue;
            }
            let next = (mu[p] + g / diag[p]).max(0.0);
            let delta = next - mu[p];
            if delta == 0.0 {
                continue;
            }
            mu[p] = next;
            updates += 1;
            let row = rows.row(p);
            for (gq, kq) in grad.iter_mut().zip(row.iter()) {
                *gq -= delta * kq;
            }
        }
        residual = max_violation(&mu, &grad);
    }

    // −½ μᵀKμ + γᵀμ with Kμ = γ − g
    let objective = 0.5
        * mu
            .iter()
            .zip(problem.linear.iter().zip(&grad))
            .map(|(m, (l, g))| m * (l + g))
            .sum::<f64>();
    Ok(NonnegSolution {
        mus: mu,
        objective,
        kkt_residual: residual,
        sweeps,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nonpositive_linear_term_gives_origin() {
        let k = SymMatrix::identity(3);
        let sol = solve_nonneg(NonnegQp::new(&k, vec![-1.0, 0.0, -0.5])).unwrap();
        assert_eq!(sol.mus, vec![0.0; 3]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn one_dimensional_maximum() {
        let k = SymMatrix::from_diag(&[2.0]);
        let sol = solve_nonneg(NonnegQp::new(&k, vec![4.0])).unwrap();
        assert_eq!(sol.mus, vec![2.0]);
        assert_eq!(sol.objective, 4.0);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        let k = SymMatrix::from_diag(&[1.0, 0.0]);
        let err = solve_nonneg(NonnegQp::new(&k, vec![1.0, 1.0])).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"));
    }

    #[test]
    fn kkt_conditions_hold_and_objective_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let p = rng.random_range(2..25);
            let mut k = SymMatrix::zeros(p);
            for _ in 0..p {
                let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                k.add_outer(1.0, &v);
            }
            let lin: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sol = solve_nonneg(NonnegQp::new(&k, lin.clone())).unwrap();
            let km = k.mat_vec(&sol.mus);
            for q in 0..p {
                let g = lin[q] - km[q];
                assert!(sol.mus[q] >= 0.0);
                assert!(violation(sol.mus[q], g) <= DEFAULT_TOL);
            }
            let direct = -0.5 * k.quad_form(&sol.mus) + lin.iter().zip(&sol.mus).map(|(a, b)| a * b).sum::<f64>();
            assert!((direct - sol.objective).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn warm_start_is_validated() {
        let k = SymMatrix::identity(2);
        assert!(solve_nonneg(NonnegQp::new(&k, vec![1.0, 1.0]).with_warm(vec![-1.0, 0.0])).is_err());
        let sol = solve_nonneg(NonnegQp::new(&k, vec![1.0, 1.0]).with_warm(vec![1.0, 1.0])).unwrap();
        assert_eq!(sol.sweeps, 0);
    }
}
