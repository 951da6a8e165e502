//! Nonnegative-coefficient metric learning: `M = Σ μ_p X_p` with `μ ≥ 0`,
//! which is PSD by construction. Alternates an SVM-form solve for `β` with
//! a nonnegative QP for `μ`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Algorithm, Coefficients, MetricModel, ModelMeta};
use crate::pairs::{PairKernel, PairSet, DEFAULT_GRAM_CAP};
use crate::pcml::{validate_common, validate_pairs};
use crate::qp::{
    kkt_bias_and_slacks, solve_box_eq, solve_nonneg, BiasSource, BoxEqQp, KernelMatrix, NonnegQp,
    DEFAULT_TOL,
};
use crate::trace::{gap_criterion_met, NoProgress, ProgressSink, TraceRow, TrainTrace};

#[derive(Clone, Debug, PartialEq)]
pub struct NcmlConfig {
    pub c: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub qp_tol: f64,
    /// `η⁽⁰⁾` is drawn uniformly from `[0, init_eta_scale]`.
    pub init_eta_scale: f64,
    pub seed: u64,
    pub gram_cap: usize,
}

impl Default for NcmlConfig {
    fn default() -> Self {
        NcmlConfig {
            c: 0.5,
            eps: 0.01,
            max_iter: 100,
            qp_tol: DEFAULT_TOL,
            init_eta_scale: 1e-3,
            seed: 0,
            gram_cap: DEFAULT_GRAM_CAP,
        }
    }
}

impl NcmlConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.c, self.eps, self.max_iter, self.qp_tol)?;
        if !(self.init_eta_scale >= 0.0 && self.init_eta_scale.is_finite()) {
            return Err(Error::arg(format!(
                "init_eta_scale must be nonnegative, got {}",
                self.init_eta_scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NcmlState {
    pub beta: Vec<f64>,
    /// `η = μ − h∘β`
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    /// `δ = 1 − h∘(Kη_prev)`, linear term of the last β-subproblem.
    pub delta: Vec<f64>,
    /// `γ = K(h∘β)`, linear term of the last μ-subproblem.
    pub gamma: Vec<f64>,
    pub bias: f64,
    pub bias_source: BiasSource,
    pub trace: TrainTrace,
}

/// `δ_p = 1 − h_p (Kη)_p` and `γ_p = (K(h∘β))_p`.
pub fn ncml_linear_terms(
    kernel: &dyn KernelMatrix,
    signs: &[f64],
    eta: &[f64],
    beta: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = kernel.size();
    if signs.len() != n || eta.len() != n || beta.len() != n {
        return Err(Error::arg(format!(
            "linear terms: kernel is {n}x{n} but got vectors of length {}, {}, {}",
            signs.len(),
            eta.len(),
            beta.len()
        )));
    }
    let k_eta = kernel.mat_vec(eta);
    let delta = signs.iter().zip(&k_eta).map(|(h, k)| 1.0 - h * k).collect();
    let hb: Vec<f64> = signs.iter().zip(beta).map(|(h, b)| h * b).collect();
    Ok((delta, kernel.mat_vec(&hb)))
}

/// Primal/dual quantities of an NCML iterate.
#[derive(Clone, Debug)]
pub struct NcmlEvaluation {
    /// `(Kμ)_p = ⟨M, X_p⟩`
    pub margins: Vec<f64>,
    /// `μᵀKμ = ‖M‖²_F`
    pub mkm: f64,
    pub bias: f64,
    pub bias_source: BiasSource,
    pub slacks: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    /// `CΣξ − Σβ + Σμγ`
    pub gap: f64,
}

pub fn ncml_evaluate(
    kernel: &dyn KernelMatrix,
    signs: &[f64],
    beta: &[f64],
    mu: &[f64],
    gamma: &[f64],
    c: f64,
) -> Result<NcmlEvaluation> {
    let n = kernel.size();
    if [signs.len(), beta.len(), mu.len(), gamma.len()].iter().any(|&l| l != n) {
        return Err(Error::arg("NCML state vectors do not match the pair count"));
    }
    let margins = kernel.mat_vec(mu);
    let mkm: f64 = mu.iter().zip(&margins).map(|(a, b)| a * b).sum();
    let (bias, bias_source, slacks) = kkt_bias_and_slacks(beta, signs, c, &margins);
    let hinge = c * slacks.iter().sum::<f64>();
    let bsum: f64 = beta.iter().sum();
    let mu_gamma: f64 = mu.iter().zip(gamma).map(|(a, b)| a * b).sum();
    Ok(NcmlEvaluation {
        margins,
        mkm,
        bias,
        bias_source,
        slacks,
        primal: 0.5 * mkm + hinge,
        dual: bsum - 0.5 * mkm,
        gap: hinge - bsum + mu_gamma,
    })
}

/// `CΣξ − Σβ + Σμγ` for a state whose `μ` solves the μ-subproblem for its
/// `γ`.
pub fn ncml_duality_gap(state: &NcmlState, pairs: &PairSet, config: &NcmlConfig) -> Result<f64> {
    let kernel = PairKernel::for_pairs(pairs, config.gram_cap)?;
    let eval = ncml_evaluate(&kernel, &pairs.signs(), &state.beta, &state.mu, &state.gamma, config.c)?;
    check_gap(&eval)?;
    Ok(eval.gap)
}

/// Objectives of the η-subproblem
/// `min ½ηᵀKη + ηᵀγ + ½(h∘β)ᵀK(h∘β)` s.t. `Kη ≥ 0`, evaluated at
/// `η = μ − h∘β`, and of its dual `max −½μᵀKμ + μᵀγ` s.t. `μ ≥ 0`.
/// With the constant term included the two optimal values coincide.
pub fn ncml_inner_objectives(
    kernel: &dyn KernelMatrix,
    signs: &[f64],
    beta: &[f64],
    mu: &[f64],
    gamma: &[f64],
) -> (f64, f64) {
    let hb: Vec<f64> = signs.iter().zip(beta).map(|(h, b)| h * b).collect();
    let eta: Vec<f64> = mu.iter().zip(&hb).map(|(m, b)| m - b).collect();
    let k_eta = kernel.mat_vec(&eta);
    let k_mu = kernel.mat_vec(mu);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let hkh = dot(&hb, gamma);
    let primal = 0.5 * dot(&eta, &k_eta) + dot(&eta, gamma) + 0.5 * hkh;
    let dual = -0.5 * dot(mu, &k_mu) + dot(mu, gamma);
    (primal, dual)
}

/// `primal − dual` of the η-subproblem at `η = μ − h∘β`; zero when `μ` is
/// optimal for `γ`.
pub fn ncml_inner_gap(
    kernel: &dyn KernelMatrix,
    signs: &[f64],
    beta: &[f64],
    mu: &[f64],
    gamma: &[f64],
) -> f64 {
    let (primal, dual) = ncml_inner_objectives(kernel, signs, beta, mu, gamma);
    primal - dual
}

fn check_gap(eval: &NcmlEvaluation) -> Result<()> {
    let scale = eval.primal.abs().max(eval.dual.abs()).max(1.0);
    if eval.gap < -1e-6 * scale {
        return Err(Error::Integrity(format!(
            "negative duality gap {:e} (primal {:e}, dual {:e})",
            eval.gap, eval.primal, eval.dual
        )));
    }
    Ok(())
}

/// Step-by-step NCML training.
pub struct NcmlSolver<'a> {
    pairs: &'a PairSet,
    config: NcmlConfig,
    kernel: PairKernel,
    signs: Vec<f64>,
    state: NcmlState,
    first_gap: Option<f64>,
    converged: bool,
    fixed_point: bool,
    started: Instant,
}

impl<'a> NcmlSolver<'a> {
    pub fn new(pairs: &'a PairSet, config: NcmlConfig) -> Result<Self> {
        config.validate()?;
        validate_pairs(pairs)?;
        let kernel = PairKernel::for_pairs(pairs, config.gram_cap)?;
        let n = pairs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let eta: Vec<f64> = (0..n)
            .map(|_| config.init_eta_scale * rng.random::<f64>())
            .collect();
        Ok(NcmlSolver {
            signs: pairs.signs(),
            pairs,
            kernel,
            state: NcmlState {
                beta: vec![0.0; n],
                eta,
                mu: vec![0.0; n],
                delta: vec![1.0; n],
                gamma: vec![0.0; n],
                bias: 0.0,
                bias_source: BiasSource::IntervalMidpoint,
                trace: TrainTrace::default(),
            },
            config,
            first_gap: None,
            converged: false,
            fixed_point: false,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &NcmlState {
        &self.state
    }

    pub fn kernel(&self) -> &PairKernel {
        &self.kernel
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

    /// One outer iteration: `δ ← η`, `β`, `γ ← β`, `μ`, `η ← μ − h∘β`.
    pub fn step(&mut self) -> Result<TraceRow> {
        let (delta, _) = ncml_linear_terms(&self.kernel, &self.signs, &self.state.eta, &self.state.beta)?;
        let beta_problem =
            BoxEqQp::new(&self.kernel, delta.clone(), self.signs.clone(), self.config.c)
                .with_tol(self.config.qp_tol)
                .with_warm(self.state.beta.clone());
        let beta_sol = solve_box_eq(beta_problem)?;
        let beta = beta_sol.alphas;

        let hb: Vec<f64> = self.signs.iter().zip(&beta).map(|(h, b)| h * b).collect();
        let gamma = self.kernel.mat_vec(&hb);
        let mu_problem = NonnegQp::new(&self.kernel, gamma.clone())
            .with_tol(self.config.qp_tol)
            .with_warm(self.state.mu.clone());
        let mu_sol = solve_nonneg(mu_problem)?;
        let mu = mu_sol.mus;
        let eta: Vec<f64> = mu.iter().zip(&hb).map(|(m, b)| m - b).collect();

        let eval = ncml_evaluate(&self.kernel, &self.signs, &beta, &mu, &gamma, self.config.c)?;
        check_gap(&eval)?;

        self.state.beta = beta;
        self.state.mu = mu;
        self.state.eta = eta;
        self.state.delta = delta;
        self.state.gamma = gamma;
        self.state.bias = eval.bias;
        self.state.bias_source = eval.bias_source;

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
        self.fixed_point = row.iter > 1 && beta_sol.iterations == 0 && mu_sol.updates == 0;
        self.converged =
            self.fixed_point || gap_criterion_met(eval.gap, first, self.config.eps, eval.primal);
        log::debug!(
            "ncml iter {}: gap {:.6e} (ratio {:.3e}), {} SMO steps, {} CD sweeps",
            row.iter,
            row.gap,
            if first > 0.0 { row.gap / first } else { 0.0 },
            beta_sol.iterations,
            mu_sol.sweeps
        );
        Ok(row)
    }

    pub fn run(&mut self, sink: &mut dyn ProgressSink) -> Result<()> {
        while !self.converged && self.iterations() < self.config.max_iter {
            let row = self.step()?;
            sink.record(&row);
        }
        if !self.converged {
            log::warn!(
                "ncml stopped at max_iter = {} without meeting the gap criterion",
                self.config.max_iter
            );
        }
        Ok(())
    }

    /// Materializes `M = Σ μ_p X_p` and keeps the coefficients.
    pub fn finish(self) -> Result<(MetricModel, TrainTrace)> {
        let m = self.pairs.weighted_outer_sum(&self.state.mu);
        let mut mus = Vec::new();
        let mut diffs = Vec::new();
        for (p, &mu) in self.state.mu.iter().enumerate() {
            if mu > 0.0 {
                mus.push(mu);
                diffs.extend_from_slice(self.pairs.diff(p));
            }
        }
        let trace = self.state.trace;
        let meta = ModelMeta {
            algorithm: Algorithm::Ncml,
            c: self.config.c,
            eps: self.config.eps,
            iterations: trace.len(),
            converged: self.converged,
            final_gap: trace.last().map_or(f64::NAN, |r| r.gap),
        };
        let model = MetricModel::with_coefficients(m, meta, Some(Coefficients { mus, diffs }))?;
        Ok((model, trace))
    }
}

pub fn train_ncml(pairs: &PairSet, config: &NcmlConfig) -> Result<(MetricModel, TrainTrace)> {
    train_ncml_with(pairs, config, &mut NoProgress)
}

pub fn train_ncml_with(
    pairs: &PairSet,
    config: &NcmlConfig,
    sink: &mut dyn ProgressSink,
) -> Result<(MetricModel, TrainTrace)> {
    let mut solver = NcmlSolver::new(pairs, config.clone())?;
    solver.run(sink)?;
    solver.finish()
}
