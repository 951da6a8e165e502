//! Slow, direct reference computations used to check the solvers in tests.
//!
//! Nothing here depends on `metricforge`: matrices are plain row-major
//! `Vec<f64>` and every routine favors obviousness over speed.

use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `K v` for a row-major `n × n` matrix.
pub fn mat_vec(k: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&k[i * n..(i + 1) * n], v)).collect()
}

/// `Σ_r g_r g_rᵀ` for `rank` Gaussian-ish vectors with entries in [-1, 1].
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> Vec<f64> {
    let mut k = vec![0.0; n * n];
    for _ in 0..rank {
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] += g[i] * g[j];
            }
        }
    }
    k
}

/// Random symmetric matrix with entries in [-scale, scale].
pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-scale..scale);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

/// `±1` signs containing both values (requires `n ≥ 2`).
pub fn random_signs<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    s[0] = 1.0;
    s[n - 1] = -1.0;
    s
}

/// Upper bound on the largest eigenvalue of a symmetric matrix (max
/// absolute row sum).
fn lipschitz(k: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| k[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12)
}

/// Euclidean projection onto `{0 ≤ α ≤ cap, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
pub fn project_box_eq(z: &[f64], y: &[f64], cap: f64) -> Vec<f64> {
    let clip = |nu: f64| -> Vec<f64> {
        z.iter()
            .zip(y)
            .map(|(zi, yi)| (zi - nu * yi).clamp(0.0, cap))
            .collect()
    };
    let residual = |nu: f64| dot(&clip(nu), y);
    // residual is nonincreasing in nu
    let mut lo = -1.0;
    let mut hi = 1.0;
    while residual(lo) < 0.0 {
        lo *= 2.0;
    }
    while residual(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(0.5 * (lo + hi))
}

/// `−½ αᵀ(YKY)α + pᵀα`
pub fn box_eq_objective(k: &[f64], linear: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let ya: Vec<f64> = alpha.iter().zip(y).map(|(a, s)| a * s).collect();
    -0.5 * dot(&ya, &mat_vec(k, &ya)) + dot(linear, alpha)
}

pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// `max −½ αᵀ(YKY)α + pᵀα` s.t. `0 ≤ α ≤ cap`, `yᵀα = 0`, by projected
/// gradient ascent with step `1/L`, run until the projected-gradient step
/// moves less than `tol`.
pub fn box_eq_oracle(k: &[f64], linear: &[f64], y: &[f64], cap: f64, tol: f64) -> OracleSolution {
    let n = linear.len();
    let step = 1.0 / lipschitz(k, n);
    let mut alpha = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let ya: Vec<f64> = alpha.iter().zip(y).map(|(a, s)| a * s).collect();
        let kya = mat_vec(k, &ya);
        let grad: Vec<f64> = (0..n).map(|i| linear[i] - y[i] * kya[i]).collect();
        let z: Vec<f64> = (0..n).map(|i| alpha[i] + step * grad[i]).collect();
        let next = project_box_eq(&z, y, cap);
        let moved = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / step;
        alpha = next;
        iterations += 1;
        if moved <= tol || iterations >= 5_000_000 {
            break;
        }
    }
    OracleSolution {
        objective: box_eq_objective(k, linear, y, &alpha),
        x: alpha,
        iterations,
    }
}

/// `max −½ μᵀKμ + γᵀμ` s.t. `μ ≥ 0` by projected gradient ascent.
pub fn nonneg_oracle(k: &[f64], linear: &[f64], tol: f64) -> OracleSolution {
    let n = linear.len();
    let step = 1.0 / lipschitz(k, n);
    let mut mu = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let km = mat_vec(k, &mu);
        let next: Vec<f64> = (0..n)
            .map(|i| (mu[i] + step * (linear[i] - km[i])).max(0.0))
            .collect();
        let moved = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / step;
        mu = next;
        iterations += 1;
        if moved <= tol || iterations >= 5_000_000 {
            break;
        }
    }
    let km = mat_vec(k, &mu);
    OracleSolution {
        objective: -0.5 * dot(&mu, &km) + dot(linear, &mu),
        x: mu,
        iterations,
    }
}

/// Whether `A + tol·I` admits a Cholesky factorization, i.e. the smallest
/// eigenvalue of `A` is above `−tol` (up to rounding in the factorization).
pub fn is_psd_within(a: &[f64], n: usize, tol: f64) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j] + if i == j { tol } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// Best accuracy of `matched ⇔ distance ≤ t` over every candidate threshold
/// (`−∞` and each observed distance), by direct counting.
pub fn best_threshold_accuracy(distances: &[f64], matched: &[bool]) -> f64 {
    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend_from_slice(distances);
    candidates
        .iter()
        .map(|&t| {
            let correct = distances
                .iter()
                .zip(matched)
                .filter(|(&d, &m)| (d <= t) == m)
                .count();
            correct as f64 / distances.len() as f64
        })
        .fold(0.0, f64::max)
}

/// Closed-form PCML optimum for one similar pair `s` and one dissimilar pair
/// `d`.
///
/// The equality constraint forces `λ_s = λ_d = t`, and the optimal metric is
/// `t · P₊(d dᵀ − s sᵀ)` where `P₊` keeps the positive eigenpart. That part
/// is rank one with eigenvalue `ρ` (from the 2 × 2 Gram of `s` and `d`), so
/// the dual is `2t − ½ t² ρ²`, maximized at `t = min(2/ρ², C)`.
pub struct TwoPairPcml {
    pub t: f64,
    pub dual: f64,
    /// `⟨M, X_s⟩`, `⟨M, X_d⟩`
    pub margins: [f64; 2],
    /// Average of `h_p − ⟨M, X_p⟩` over both (free) multipliers.
    pub bias: f64,
    /// Optimal metric, row-major.
    pub m: Vec<f64>,
}

pub fn two_pair_pcml(s: &[f64], d: &[f64], c: f64) -> TwoPairPcml {
    let ss = dot(s, s);
    let dd = dot(d, d);
    let sd = dot(s, d);
    // eigenvalues of d dᵀ − s sᵀ restricted to span{d, s}
    let disc = ((dd + ss).powi(2) - 4.0 * sd * sd).max(0.0).sqrt();
    let rho = 0.5 * (dd - ss + disc);
    // eigenvector v = x d + y s: (dd·x + sd·y) = rho·x
    let (x, y) = if sd.abs() > 1e-300 {
        (1.0, (rho - dd) / sd)
    } else {
        (1.0, 0.0)
    };
    let mut v: Vec<f64> = d.iter().zip(s).map(|(a, b)| x * a + y * b).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|e| *e /= norm);
    let t = (2.0 / (rho * rho)).min(c);
    let dual = 2.0 * t - 0.5 * t * t * rho * rho;
    let dim = s.len();
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            m[i * dim + j] = t * rho * v[i] * v[j];
        }
    }
    let margin = |u: &[f64]| t * rho * dot(&v, u).powi(2);
    let margins = [margin(s), margin(d)];
    let bias = 0.5 * ((-1.0 - margins[0]) + (1.0 - margins[1]));
    TwoPairPcml {
        t,
        dual,
        margins,
        bias,
        m,
    }
}

/// `min wᵀ A w` over `w ≥ lower` for a 2 × 2 positive definite `A`, by
/// enumerating active sets.
fn min_quadratic_above(a: [[f64; 2]; 2], lower: [f64; 2]) -> f64 {
    let q = |w: [f64; 2]| {
        w[0] * (a[0][0] * w[0] + a[0][1] * w[1]) + w[1] * (a[1][0] * w[0] + a[1][1] * w[1])
    };
    let mut best = f64::INFINITY;
    let mut consider = |w: [f64; 2]| {
        if w[0] >= lower[0] - 1e-15 && w[1] >= lower[1] - 1e-15 {
            best = best.min(q(w));
        }
    };
    consider([0.0, 0.0]);
    consider(lower);
    // w0 fixed at its bound, w1 free: minimize a11 w1² + 2 a01 w0 w1
    consider([lower[0], -a[0][1] * lower[0] / a[1][1]]);
    consider([-a[0][1] * lower[1] / a[0][0], lower[1]]);
    best
}

/// Optimal value of the NCML dual for one similar and one dissimilar pair,
/// `max_{s ∈ [0, C]} 2s − ½ min { μᵀKμ : K(μ − s·h) ≥ 0 }`, by golden
/// section over `s`. `K` must be nonsingular.
pub fn two_pair_ncml_dual(sim: &[f64], dis: &[f64], c: f64) -> (f64, f64) {
    let k11 = dot(sim, sim).powi(2);
    let k22 = dot(dis, dis).powi(2);
    let k12 = dot(sim, dis).powi(2);
    let det = k11 * k22 - k12 * k12;
    assert!(det > 0.0, "pair kernel must be nonsingular");
    // μᵀKμ = wᵀK⁻¹w with w = Kμ
    let inv = [[k22 / det, -k12 / det], [-k12 / det, k11 / det]];
    let value = |s: f64| {
        // h = (−1, +1); lower bound on w is K(h s)
        let lower = [s * (-k11 + k12), s * (-k12 + k22)];
        2.0 * s - 0.5 * min_quadratic_above(inv, lower)
    };
    let (mut lo, mut hi) = (0.0, c);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if value(a) < value(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, value(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(2..8);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = random_signs(&mut rng, n);
            let p = project_box_eq(&z, &y, 1.5);
            assert!(p.iter().all(|&v| (0.0..=1.5).contains(&v)));
            assert!(dot(&p, &y).abs() < 1e-9);
        }
    }

    #[test]
    fn two_variable_box_qp_closed_form() {
        // K = I, y = (1, −1), p = (1, 1): α = (1, 1), objective 1
        let k = vec![1.0, 0.0, 0.0, 1.0];
        let sol = box_eq_oracle(&k, &[1.0, 1.0], &[1.0, -1.0], 5.0, 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cholesky_psd_test() {
        assert!(is_psd_within(&[1.0, 0.0, 0.0, 0.0], 2, 1e-12));
        assert!(!is_psd_within(&[1.0, 0.0, 0.0, -1e-3], 2, 1e-6));
    }

    #[test]
    fn two_pair_pcml_orthogonal_case() {
        // d dᵀ − s sᵀ with orthogonal s, d: positive part is d dᵀ, ρ = |d|²
        let sol = two_pair_pcml(&[0.2, 0.0], &[0.0, 1.0], 10.0);
        assert!((sol.t - 2.0).abs() < 1e-12);
        assert!((sol.margins[1] - 2.0).abs() < 1e-12);
        assert!(sol.margins[0].abs() < 1e-12);
    }
}
