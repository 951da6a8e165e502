use super::cache::RowCache;
use super::{KernelMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};

/// Curvature substituted for non-positive second-order terms.
const TAU: f64 = 1e-12;
/// Negative curvature beyond this fraction of the diagonal scale means the
/// kernel is not PSD.
const NEG_CURVATURE_TOL: f64 = 1e-8;

/// `max −½ Σ_pq α_p α_q y_p y_q K_pq + Σ_p linear_p α_p`
/// subject to `0 ≤ α ≤ cap` and `Σ α_p y_p = 0`.
pub struct BoxEqQp<'a> {
    pub kernel: &'a dyn KernelMatrix,
    pub linear: Vec<f64>,
    pub signs: Vec<f64>,
    pub cap: f64,
    pub tol: f64,
    pub warm: Option<Vec<f64>>,
    pub max_iter: usize,
}

impl<'a> BoxEqQp<'a> {
    pub fn new(kernel: &'a dyn KernelMatrix, linear: Vec<f64>, signs: Vec<f64>, cap: f64) -> Self {
        BoxEqQp {
            kernel,
            linear,
            signs,
            cap,
            tol: DEFAULT_TOL,
            warm: None,
            max_iter: DEFAULT_MAX_ITER,
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

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        let p = self.kernel.size();
        if p == 0 {
            return Err(Error::arg("box QP: empty problem"));
        }
        if self.linear.len() != p || self.signs.len() != p {
            return Err(Error::arg(format!(
                "box QP: kernel is {p}x{p} but linear has {} and signs {} entries",
                self.linear.len(),
                self.signs.len()
            )));
        }
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::arg(format!("box QP: cap must be positive, got {}", self.cap)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::arg("box QP: tolerance must be positive"));
        }
        if self.signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::arg("box QP: signs must be -1 or +1"));
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("box QP: non-finite linear term"));
        }
        if let Some(w) = &self.warm {
            if w.len() != p {
                return Err(Error::arg("box QP: warm start has the wrong length"));
            }
            let slack = 1e-9 * (self.cap * p as f64).max(1.0);
            if w.iter().any(|&a| !(a >= 0.0 && a <= self.cap)) {
                return Err(Error::arg("box QP: warm start violates the box"));
            }
            let eq: f64 = w.iter().zip(&self.signs).map(|(a, s)| a * s).sum();
            if eq.abs() > slack {
                return Err(Error::arg(format!(
                    "box QP: warm start violates the equality constraint by {eq:e}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxEqStatus {
    Converged,
    /// Only one sign is present, so the equality constraint pins α to zero.
    OneSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasSource {
    /// Average over this many free variables `0 < α < C`.
    FreeAverage(usize),
    /// No free variable; midpoint of the interval allowed by the KKT
    /// inequalities.
    IntervalMidpoint,
}

#[derive(Clone, Debug)]
pub struct BoxEqSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub bias_source: BiasSource,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Number of working-set selections performed.
    pub iterations: usize,
    pub status: BoxEqStatus,
}

/// Generalized SMO state. Minimizes `f(α) = ½ αᵀQα − pᵀα` with
/// `Q = Y K Y`, keeping the gradient `G = Qα − p` up to date.
pub struct Smo<'a> {
    rows: RowCache<'a>,
    linear: Vec<f64>,
    y: Vec<f64>,
    cap: f64,
    tol: f64,
    max_iter: usize,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    diag: Vec<f64>,
    iterations: usize,
    one_sided: bool,
}

impl<'a> Smo<'a> {
    pub fn new(problem: BoxEqQp<'a>) -> Result<Self> {
        problem.validate()?;
        let p = problem.kernel.size();
        let has_pos = problem.signs.iter().any(|&s| s > 0.0);
        let has_neg = problem.signs.iter().any(|&s| s < 0.0);
        let one_sided = !(has_pos && has_neg);
        let alpha = match (&problem.warm, one_sided) {
            (_, true) => vec![0.0; p],
            (Some(w), false) => w.clone(),
            (None, false) => vec![0.0; p],
        };
        let diag: Vec<f64> = (0..p).map(|i| problem.kernel.diag(i)).collect();
        let mut grad: Vec<f64> = problem.linear.iter().map(|v| -v).collect();
        if alpha.iter().any(|&a| a != 0.0) {
            let ya: Vec<f64> = alpha.iter().zip(&problem.signs).map(|(a, s)| a * s).collect();
            let kya = problem.kernel.mat_vec(&ya);
            for i in 0..p {
                grad[i] += problem.signs[i] * kya[i];
            }
        }
        Ok(Smo {
            rows: RowCache::new(problem.kernel),
            linear: problem.linear,
            y: problem.signs,
            cap: problem.cap,
            tol: problem.tol,
            max_iter: problem.max_iter,
            alpha,
            grad,
            diag,
            iterations: 0,
            one_sided,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Dual (maximization) objective at the current iterate.
    pub fn objective(&self) -> f64 {
        // −f(α) = −½ αᵀ(G + p) + pᵀα = ½ αᵀ(p − G)
        0.5 * self
            .alpha
            .iter()
            .zip(self.linear.iter().zip(&self.grad))
            .map(|(a, (p, g))| a * (p - g))
            .sum::<f64>()
    }

    #[inline]
    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.cap
        } else {
            self.alpha[t] > 0.0
        }
    }

    #[inline]
    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.cap
        }
    }

    /// Maximal KKT violation `m(α) − M(α)`; non-positive at optimality.
    pub fn kkt_violation(&self) -> f64 {
        if self.one_sided {
            return 0.0;
        }
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::NEG_INFINITY;
        for t in 0..self.alpha.len() {
            let yg = -self.y[t] * self.grad[t];
            if self.in_up(t) {
                up = up.max(yg);
            }
            if self.in_low(t) {
                low = low.max(-yg);
            }
        }
        if up == f64::NEG_INFINITY || low == f64::NEG_INFINITY {
            return 0.0;
        }
        (up + low).max(0.0)
    }

    /// Second-order working set selection. `None` when the maximal
    /// violation is below tolerance.
    fn select(&mut self) -> Option<(usize, usize)> {
        let n = self.alpha.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let i = i_sel?;
        let row_i = self.rows.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let v = self.y[t] * self.grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let b = gmax + v;
            if b > 0.0 {
                let a = self.diag[i] + self.diag[t] - 2.0 * row_i[t];
                let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < self.tol {
            return None;
        }
        j_sel.map(|j| (i, j))
    }

    /// Performs one two-variable update. Returns `false` once converged.
    pub fn step(&mut self) -> Result<bool> {
        if self.one_sided {
            return Ok(false);
        }
        let Some((i, j)) = self.select() else {
            return Ok(false);
        };
        self.iterations += 1;
        let row_i = self.rows.row(i);
        let row_j = self.rows.row(j);
        let (yi, yj) = (self.y[i], self.y[j]);
        let c = self.cap;
        let curvature = self.diag[i] + self.diag[j] - 2.0 * row_i[j];
        let scale = (self.diag[i] + self.diag[j]).max(f64::MIN_POSITIVE);
        if curvature < -NEG_CURVATURE_TOL * scale {
            return Err(Error::numerical(format!(
                "kernel is not PSD: curvature {curvature:e} on working pair ({i}, {j})"
            )));
        }
        let quad = if curvature > 0.0 { curvature } else { TAU };
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);

        if yi != yj {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;

        let di = (ai - old_i) * yi;
        let dj = (aj - old_j) * yj;
        for t in 0..self.alpha.len() {
            self.grad[t] += self.y[t] * (row_i[t] * di + row_j[t] * dj);
        }
        Ok(true)
    }

    /// `b` such that the decision value is `Σ α y K + b`.
    fn bias(&self) -> (f64, BiasSource) {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free = 0usize;
        let mut sum = 0.0;
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.cap {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            return (-sum / free as f64, BiasSource::FreeAverage(free));
        }
        (-interval_midpoint(lb, ub), BiasSource::IntervalMidpoint)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.step()? {
            if self.iterations >= self.max_iter {
                return Err(Error::numerical(format!(
                    "SMO hit the iteration cap {} with KKT violation {:e} (tol {:e})",
                    self.max_iter,
                    self.kkt_violation(),
                    self.tol
                )));
            }
        }
        Ok(())
    }

    pub fn into_solution(self) -> BoxEqSolution {
        let (bias, bias_source) = self.bias();
        BoxEqSolution {
            objective: self.objective(),
            kkt_residual: self.kkt_violation(),
            bias,
            bias_source,
            iterations: self.iterations,
            status: if self.one_sided {
                BoxEqStatus::OneSided
            } else {
                BoxEqStatus::Converged
            },
            alphas: self.alpha,
        }
    }
}

/// Midpoint of `[lb, ub]`, falling back to the finite end (or zero) when the
/// interval is unbounded.
pub fn interval_midpoint(lb: f64, ub: f64) -> f64 {
    match (lb.is_finite(), ub.is_finite()) {
        (true, true) => 0.5 * (lb + ub),
        (true, false) => lb,
        (false, true) => ub,
        (false, false) => 0.0,
    }
}

pub fn solve_box_eq(problem: BoxEqQp<'_>) -> Result<BoxEqSolution> {
    let mut smo = Smo::new(problem)?;
    if smo.one_sided {
        log::debug!("box QP has a single sign class; the feasible set is {{0}}");
    }
    smo.run()?;
    Ok(smo.into_solution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, p: usize, rank: usize) -> SymMatrix {
        let mut k = SymMatrix::zeros(p);
        for _ in 0..rank {
            let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            k.add_outer(1.0, &v);
        }
        k
    }

    fn random_signs(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
        let mut s: Vec<f64> = (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        s[0] = 1.0;
        s[1] = -1.0;
        s
    }

    #[test]
    fn two_variable_closed_form() {
        let k = SymMatrix::identity(2);
        let sol = solve_box_eq(BoxEqQp::new(&k, vec![1.0, 1.0], vec![1.0, -1.0], 10.0)).unwrap();
        assert!((sol.alphas[0] - 1.0).abs() < 1e-12);
        assert!((sol.alphas[1] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert_eq!(sol.bias_source, BiasSource::FreeAverage(2));
        // decision y_p (g_p + b) = 1 at both points: g = (1, -1)
        assert!(sol.bias.abs() < 1e-12);
    }

    #[test]
    fn tiny_cap_collapses_to_origin() {
        let k = SymMatrix::identity(2);
        let sol = solve_box_eq(BoxEqQp::new(&k, vec![1.0, 1.0], vec![1.0, -1.0], 1e-12)).unwrap();
        assert!(sol.alphas.iter().all(|a| a.abs() <= 1e-12));
        assert!(sol.objective.abs() < 1e-11);
    }

    #[test]
    fn one_sided_signs_give_zero() {
        let k = SymMatrix::identity(3);
        let sol = solve_box_eq(BoxEqQp::new(&k, vec![1.0; 3], vec![1.0; 3], 1.0)).unwrap();
        assert_eq!(sol.status, BoxEqStatus::OneSided);
        assert_eq!(sol.alphas, vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = SymMatrix::identity(2);
        assert!(solve_box_eq(BoxEqQp::new(&k, vec![1.0], vec![1.0, -1.0], 1.0)).is_err());
        assert!(solve_box_eq(BoxEqQp::new(&k, vec![1.0; 2], vec![1.0, 0.0], 1.0)).is_err());
        assert!(solve_box_eq(BoxEqQp::new(&k, vec![1.0; 2], vec![1.0, -1.0], 0.0)).is_err());
        let bad_warm = BoxEqQp::new(&k, vec![1.0; 2], vec![1.0, -1.0], 1.0).with_warm(vec![0.5, 0.0]);
        assert!(solve_box_eq(bad_warm).is_err());
    }

    #[test]
    fn detects_indefinite_kernel() {
        let k = SymMatrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        let err = solve_box_eq(BoxEqQp::new(&k, vec![1.0; 2], vec![1.0, -1.0], 5.0)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn objective_is_monotone_and_iterates_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let p = rng.random_range(3..20);
            let rank = rng.random_range(1..p + 1);
            let k = random_psd(&mut rng, p, rank);
            let lin: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.0)).collect();
            let signs = random_signs(&mut rng, p);
            let cap = rng.random_range(0.1..3.0);
            let mut smo = Smo::new(BoxEqQp::new(&k, lin, signs.clone(), cap)).unwrap();
            let mut last = smo.objective();
            while smo.step().unwrap() {
                let now = smo.objective();
                assert!(now >= last - 1e-10, "objective decreased {last} -> {now}");
                last = now;
                let eq: f64 = smo.alphas().iter().zip(&signs).map(|(a, s)| a * s).sum();
                assert!(eq.abs() <= 1e-8 * p as f64 * cap);
                assert!(smo.alphas().iter().all(|&a| (0.0..=cap).contains(&a)));
            }
            assert!(smo.kkt_violation() < DEFAULT_TOL);
        }
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 9;
        let k = random_psd(&mut rng, p, 4);
        let lin: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
        let signs = random_signs(&mut rng, p);
        let sol = solve_box_eq(BoxEqQp::new(&k, lin.clone(), signs.clone(), 2.0)).unwrap();
        let ya: Vec<f64> = sol.alphas.iter().zip(&signs).map(|(a, s)| a * s).collect();
        let direct = -0.5 * k.quad_form(&ya) + lin.iter().zip(&sol.alphas).map(|(l, a)| l * a).sum::<f64>();
        assert!((direct - sol.objective).abs() < 1e-10);
    }

    #[test]
    fn warm_start_from_solution_is_immediate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 12;
        let k = random_psd(&mut rng, p, 6);
        let lin: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.5)).collect();
        let signs = random_signs(&mut rng, p);
        let cold = solve_box_eq(BoxEqQp::new(&k, lin.clone(), signs.clone(), 1.0)).unwrap();
        let warm = solve_box_eq(BoxEqQp::new(&k, lin, signs, 1.0).with_warm(cold.alphas.clone())).unwrap();
        assert_eq!(warm.iterations, 0);
        assert!(warm.objective >= cold.objective - 1e-10);
    }

    #[test]
    fn midpoint_fallback() {
        assert_eq!(interval_midpoint(1.0, -1.0), 0.0);
        assert_eq!(interval_midpoint(2.0, f64::INFINITY), 2.0);
        assert_eq!(interval_midpoint(f64::NEG_INFINITY, f64::INFINITY), 0.0);
    }
}
