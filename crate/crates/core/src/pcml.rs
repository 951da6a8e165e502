//! PSD-constrained metric learning: alternate an SVM-form dual solve for
//! the pair multipliers `λ` with a projection of `Y` onto the PSD cone,
//! stopping on the relative duality gap.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{psd_split, SymMatrix};
use crate::model::{check_scale, Algorithm, MetricModel, ModelMeta};
use crate::pairs::{PairKernel, PairSet, DEFAULT_GRAM_CAP};
use crate::qp::{kkt_bias_and_slacks, solve_box_eq, BiasSource, BoxEqQp, DEFAULT_TOL};
use crate::trace::{gap_criterion_met, NoProgress, ProgressSink, TraceRow, TrainTrace};

#[derive(Clone, Debug, PartialEq)]
pub struct PcmlConfig {
    pub c: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub qp_tol: f64,
    /// Pair count above which the pair kernel is evaluated on demand.
    pub gram_cap: usize,
}

impl Default for PcmlConfig {
    fn default() -> Self {
        PcmlConfig {
            c: 0.5,
            eps: 0.01,
            max_iter: 100,
            qp_tol: DEFAULT_TOL,
            gram_cap: DEFAULT_GRAM_CAP,
        }
    }
}

pub(crate) fn validate_common(c: f64, eps: f64, max_iter: usize, qp_tol: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::arg(format!("C must be positive, got {c}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    if max_iter == 0 {
        return Err(Error::arg("max_iter must be at least 1"));
    }
    if qp_tol.is_nan() || qp_tol <= 0.0 {
        return Err(Error::arg(format!("qp_tol must be positive, got {qp_tol}")));
    }
    Ok(())
}

pub(crate) fn validate_pairs(pairs: &PairSet) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::arg("no pair constraints"));
    }
    if pairs.count_similar() == 0 || pairs.count_dissimilar() == 0 {
        return Err(Error::arg(
            "training needs both similar and dissimilar pair constraints",
        ));
    }
    Ok(())
}

impl PcmlConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.c, self.eps, self.max_iter, self.qp_tol)
    }
}

#[derive(Clone, Debug)]
pub struct PcmlState {
    pub lambda: Vec<f64>,
    /// PSD part `Y = UΛ₊Uᵀ` of `−Σ λhX`.
    pub y: SymMatrix,
    /// Linear term `η_p = 1 − h_p⟨X_p, Y_prev⟩` of the last λ-subproblem.
    pub eta: Vec<f64>,
    pub bias: f64,
    pub bias_source: BiasSource,
    pub trace: TrainTrace,
}

/// Primal/dual quantities of a PCML iterate.
#[derive(Clone, Debug)]
pub struct PcmlEvaluation {
    /// `M = Σ λhX + Y`
    pub m: SymMatrix,
    pub y: SymMatrix,
    /// `tr(Λ₋²)`, equal to `‖M‖²_F`.
    pub neg_sq: f64,
    pub bias: f64,
    pub bias_source: BiasSource,
    pub slacks: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    /// `CΣξ − Σλ + tr(Λ₋²)`
    pub gap: f64,
}

/// Evaluates the iterate determined by `λ`: projects `−Σ λhX`, forms `M`,
/// and computes bias, slacks and objectives.
pub fn pcml_evaluate(lambda: &[f64], pairs: &PairSet, c: f64) -> Result<PcmlEvaluation> {
    if lambda.len() != pairs.len() {
        return Err(Error::arg("lambda length does not match the pair count"));
    }
    let signs = pairs.signs();
    let weights: Vec<f64> = lambda.iter().zip(&signs).map(|(l, h)| -l * h).collect();
    let y0 = pairs.weighted_outer_sum(&weights);
    let split = psd_split(&y0)?;
    let neg_sq: f64 = split.negative_part().iter().map(|v| v * v).sum();
    let m = split.projected.sub(&y0)?;
    let margins = pairs.frob_with_each(&m);
    let (bias, bias_source, slacks) = kkt_bias_and_slacks(lambda, &signs, c, &margins);
    let hinge: f64 = c * slacks.iter().sum::<f64>();
    let lsum: f64 = lambda.iter().sum();
    let msq = m.frob_norm().powi(2);
    Ok(PcmlEvaluation {
        y: split.projected,
        m,
        neg_sq,
        bias,
        bias_source,
        slacks,
        primal: 0.5 * msq + hinge,
        dual: lsum - 0.5 * msq,
        gap: hinge - lsum + neg_sq,
    })
}

fn gap_scale(primal: f64, dual: f64) -> f64 {
    primal.abs().max(dual.abs()).max(1.0)
}

fn check_gap(gap: f64, primal: f64, dual: f64) -> Result<()> {
    if gap < -1e-6 * gap_scale(primal, dual) {
        return Err(Error::Integrity(format!(
            "negative duality gap {gap:e} (primal {primal:e}, dual {dual:e})"
        )));
    }
    Ok(())
}

/// `CΣξ − Σλ + tr(Λ₋²)` for a state whose `Y` is the projection of
/// `−Σ λhX`.
pub fn pcml_duality_gap(state: &PcmlState, pairs: &PairSet, config: &PcmlConfig) -> Result<f64> {
    let eval = pcml_evaluate(&state.lambda, pairs, config.c)?;
    let drift = eval.y.sub(&state.y)?.max_abs();
    if drift > 1e-8 * check_scale(&eval.y) {
        return Err(Error::Integrity(format!(
            "state Y is not the projection of its lambda (off by {drift:e})"
        )));
    }
    check_gap(eval.gap, eval.primal, eval.dual)?;
    Ok(eval.gap)
}

/// Offset and slacks of the state's metric `M = Σ λhX + Y`.
pub fn pcml_bias_and_slacks(state: &PcmlState, pairs: &PairSet, c: f64) -> Result<(f64, Vec<f64>)> {
    if state.lambda.len() != pairs.len() {
        return Err(Error::arg("lambda length does not match the pair count"));
    }
    let signs = pairs.signs();
    let weights: Vec<f64> = state.lambda.iter().zip(&signs).map(|(l, h)| l * h).collect();
    let m = pairs.weighted_outer_sum(&weights).add(&state.y)?;
    let margins = pairs.frob_with_each(&m);
    let (bias, _, slacks) = kkt_bias_and_slacks(&state.lambda, &signs, c, &margins);
    Ok((bias, slacks))
}

/// Step-by-step PCML training.
pub struct PcmlSolver<'a> {
    pairs: &'a PairSet,
    config: PcmlConfig,
    kernel: PairKernel,
    signs: Vec<f64>,
    state: PcmlState,
    m: SymMatrix,
    first_gap: Option<f64>,
    converged: bool,
    fixed_point: bool,
    started: Instant,
}

impl<'a> PcmlSolver<'a> {
    pub fn new(pairs: &'a PairSet, config: PcmlConfig) -> Result<Self> {
        config.validate()?;
        validate_pairs(pairs)?;
        let kernel = PairKernel::for_pairs(pairs, config.gram_cap)?;
        let n = pairs.len();
        let d = pairs.dim();
        Ok(PcmlSolver {
            signs: pairs.signs(),
            pairs,
            config,
            kernel,
            state: PcmlState {
                lambda: vec![0.0; n],
                y: SymMatrix::zeros(d),
                eta: vec![1.0; n],
                bias: 0.0,
                bias_source: BiasSource::IntervalMidpoint,
                trace: TrainTrace::default(),
            },
            m: SymMatrix::zeros(d),
            first_gap: None,
            converged: false,
            fixed_point: false,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &PcmlState {
        &self.state
    }

    /// Current `M = Σ λhX + Y`.
    pub fn metric(&self) -> &SymMatrix {
        &self.m
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Whether the last iteration left the multipliers unchanged.
    pub fn at_fixed_point(&self) -> bool {
        self.fixed_point
    }

    pub fn iterations(&self) -> usize {
        self.state.trace.len()
    }

    /// One outer iteration. Returns the new trace row.
    pub fn step(&mut self) -> Result<TraceRow> {
        let eta: Vec<f64> = (0..self.pairs.len())
            .map(|p| 1.0 - self.signs[p] * self.state.y.quad_form(self.pairs.diff(p)))
            .collect();
        let problem = BoxEqQp::new(&self.kernel, eta.clone(), self.signs.clone(), self.config.c)
            .with_tol(self.config.qp_tol)
            .with_warm(self.state.lambda.clone());
        let sol = solve_box_eq(problem)?;
        let eval = pcml_evaluate(&sol.alphas, self.pairs, self.config.c)?;
        check_gap(eval.gap, eval.primal, eval.dual)?;

        self.state.lambda = sol.alphas;
        self.state.y = eval.y;
        self.state.eta = eta;
        self.state.bias = eval.bias;
        self.state.bias_source = eval.bias_source;
        self.m = eval.m;

        let row = TraceRow {
            iter: self.state.trace.len() + 1,
            primal: eval.primal,
            dual: eval.dual,
            gap: eval.gap,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        self.state.trace.push(row);
        let first = *self.first_gap.get_or_insert(eval.gap);
        // Unchanged multipliers reproduce the same iterate forever: the
        // alternation sits at its fixed point, optimal to solver tolerance.
        self.fixed_point = row.iter > 1 && sol.iterations == 0;
        self.converged =
            self.fixed_point || gap_criterion_met(eval.gap, first, self.config.eps, eval.primal);
        log::debug!(
            "pcml iter {}: gap {:.6e} (ratio {:.3e}), {} QP steps",
            row.iter,
            row.gap,
            if first > 0.0 { row.gap / first } else { 0.0 },
            sol.iterations
        );
        Ok(row)
    }

    /// Runs until the gap criterion holds or `max_iter` is reached.
    pub fn run(&mut self, sink: &mut dyn ProgressSink) -> Result<()> {
        while !self.converged && self.iterations() < self.config.max_iter {
            let row = self.step()?;
            sink.record(&row);
        }
        if !self.converged {
            log::warn!(
                "pcml stopped at max_iter = {} without meeting the gap criterion",
                self.config.max_iter
            );
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(MetricModel, TrainTrace)> {
        let trace = self.state.trace;
        let meta = ModelMeta {
            algorithm: Algorithm::Pcml,
            c: self.config.c,
            eps: self.config.eps,
            iterations: trace.len(),
            converged: self.converged,
            final_gap: trace.last().map_or(f64::NAN, |r| r.gap),
        };
        Ok((MetricModel::new(self.m, meta)?, trace))
    }
}

pub fn train_pcml(pairs: &PairSet, config: &PcmlConfig) -> Result<(MetricModel, TrainTrace)> {
    train_pcml_with(pairs, config, &mut NoProgress)
}

pub fn train_pcml_with(
    pairs: &PairSet,
    config: &PcmlConfig,
    sink: &mut dyn ProgressSink,
) -> Result<(MetricModel, TrainTrace)> {
    let mut solver = PcmlSolver::new(pairs, config.clone())?;
    solver.run(sink)?;
    solver.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::pairs::{DISSIMILAR, SIMILAR};

    fn two_pairs() -> PairSet {
        PairSet::from_diffs(vec![vec![1.0, 0.2], vec![0.3, 1.0]], vec![SIMILAR, DISSIMILAR]).unwrap()
    }

    /// Short similar pair orthogonal to a long dissimilar pair.
    fn separable_pairs() -> PairSet {
        PairSet::from_diffs(vec![vec![0.2, 0.0], vec![0.0, 1.0]], vec![SIMILAR, DISSIMILAR]).unwrap()
    }

    #[test]
    fn zero_state_gap_is_c_times_p() {
        let pairs = two_pairs();
        let eval = pcml_evaluate(&[0.0, 0.0], &pairs, 0.5).unwrap();
        assert_eq!(eval.bias, 0.0);
        assert_eq!(eval.slacks, vec![1.0, 1.0]);
        assert_eq!(eval.gap, 0.5 * 2.0);
        assert_eq!(eval.m.max_abs(), 0.0);
    }

    #[test]
    fn first_iteration_is_a_standard_svm() {
        let pairs = two_pairs();
        let mut solver = PcmlSolver::new(&pairs, PcmlConfig::default()).unwrap();
        solver.step().unwrap();
        assert_eq!(solver.state().eta, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_one_sided_pairs_and_bad_config() {
        let one = PairSet::from_diffs(vec![vec![1.0]], vec![SIMILAR]).unwrap();
        assert!(train_pcml(&one, &PcmlConfig::default()).is_err());
        let bad = PcmlConfig {
            eps: 1.5,
            ..PcmlConfig::default()
        };
        assert!(train_pcml(&two_pairs(), &bad).is_err());
    }

    #[test]
    fn two_pair_instance_converges_to_a_consistent_psd_metric() {
        let pairs = separable_pairs();
        let config = PcmlConfig {
            c: 10.0,
            qp_tol: 1e-10,
            ..PcmlConfig::default()
        };
        let mut solver = PcmlSolver::new(&pairs, config.clone()).unwrap();
        solver.run(&mut NoProgress).unwrap();
        assert!(solver.converged());
        assert!(solver.iterations() <= 3);
        let state = solver.state().clone();
        let signs = pairs.signs();
        let w: Vec<f64> = state.lambda.iter().zip(&signs).map(|(l, h)| l * h).collect();
        let rebuilt = pairs.weighted_outer_sum(&w).add(&state.y).unwrap();
        let m = solver.metric().clone();
        assert!(rebuilt.sub(&m).unwrap().max_abs() <= 1e-8 * check_scale(&m));
        assert!(min_eigenvalue(&m).unwrap() >= -1e-8 * check_scale(&m));
        let gap = pcml_duality_gap(&state, &pairs, &config).unwrap();
        assert!(gap >= -1e-6);
    }
}
