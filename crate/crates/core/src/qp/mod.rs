//! Dual QP solvers for the metric-learning subproblems.
//!
//! * [`solve_box_eq`]: `max −½ αᵀ(Y K Y)α + pᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`,
//!   a generalized SMO that accepts an arbitrary linear term `p`.
//! * [`solve_nonneg`]: `max −½ μᵀKμ + γᵀμ` s.t. `μ ≥ 0`, by cyclic projected
//!   coordinate ascent.

use std::borrow::Cow;

use crate::linalg::SymMatrix;

mod cache;
mod nonneg;
mod smo;

pub use nonneg::{solve_nonneg, NonnegQp, NonnegSolution};
pub use smo::{interval_midpoint, solve_box_eq, BiasSource, BoxEqQp, BoxEqSolution, BoxEqStatus, Smo};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Read-only access to a symmetric PSD kernel matrix.
pub trait KernelMatrix: Sync {
    fn size(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn row(&self, i: usize) -> Cow<'_, [f64]>;

    fn diag(&self, i: usize) -> f64 {
        self.entry(i, i)
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.size());
        (0..self.size())
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Whether `row` is a cheap borrow. Solvers cache rows of kernels that
    /// are not dense.
    fn is_dense(&self) -> bool {
        false
    }
}

impl KernelMatrix for SymMatrix {
    fn size(&self) -> usize {
        self.dim()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(SymMatrix::row(self, i))
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        SymMatrix::mat_vec(self, v)
    }

    fn is_dense(&self) -> bool {
        true
    }
}

/// Offset `b` and slacks `ξ` for a box-constrained dual solution with
/// decision values `margins_p + b`.
///
/// `b` averages `h_p − margins_p` over the free variables `0 < α_p < C`;
/// without free variables it is the midpoint of the interval the KKT
/// inequalities allow. `ξ_p = [1 − h_p (margins_p + b)]₊` for every `p`,
/// which is zero whenever `α_p < C` at an exact optimum.
pub fn kkt_bias_and_slacks(
    alphas: &[f64],
    signs: &[f64],
    cap: f64,
    margins: &[f64],
) -> (f64, BiasSource, Vec<f64>) {
    let mut free = 0usize;
    let mut sum = 0.0;
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    for ((&a, &h), &f) in alphas.iter().zip(signs).zip(margins) {
        let r = h - f;
        let at_zero = a <= 0.0;
        let at_cap = a >= cap;
        if !at_zero && !at_cap {
            free += 1;
            sum += r;
        } else if at_zero == (h > 0.0) {
            // at zero with h = +1 or at the cap with h = −1: b ≥ r
            lb = lb.max(r);
        } else {
            ub = ub.min(r);
        }
    }
    let (bias, source) = if free > 0 {
        (sum / free as f64, BiasSource::FreeAverage(free))
    } else {
        (smo::interval_midpoint(lb, ub), BiasSource::IntervalMidpoint)
    };
    let slacks = signs
        .iter()
        .zip(margins)
        .map(|(&h, &f)| (1.0 - h * (f + bias)).max(0.0))
        .collect();
    (bias, source, slacks)
}
