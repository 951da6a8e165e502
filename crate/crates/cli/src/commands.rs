use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use metricforge::dataset::to_csv;
use metricforge::eval::{read_pair_file, repeated_cv, verify_pairs, CvReport, Learner, PcaTransform};
use metricforge::linalg::sym_eig;
use metricforge::model::{check_scale, fmt_f64, write_atomic, RawModel};
use metricforge::ncml::train_ncml_with;
use metricforge::pcml::train_pcml_with;
use metricforge::synth::{anisotropic, two_gaussians, Anisotropic};
use metricforge::{build_constraints, read_dataset, Dataset, Format, MetricModel, TraceRow, TrainTrace};
use serde::Serialize;

use crate::args::{AlgoArg, FormatArg, GenerateArgs, InspectArgs, SynthKind, VerifyArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Relative threshold below which `inspect` reports a negative eigenvalue as
/// rounding noise.
const PSD_TOL: f64 = 1e-8;

pub const MODEL_FILE: &str = "model.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const CV_FOLDS_FILE: &str = "cv_folds.csv";
pub const CV_SUMMARY_FILE: &str = "cv_summary.json";
pub const CV_TIMING_FILE: &str = "cv_timing.json";
pub const ROC_FILE: &str = "roc.csv";

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(metricforge::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn log_row(name: &'static str) -> impl FnMut(&TraceRow) {
    move |r: &TraceRow| {
        log::info!(
            "{name} iter {:3} primal {:.6e} dual {:.6e} gap {:.6e} ({:.2}s)",
            r.iter,
            r.primal,
            r.dual,
            r.gap,
            r.seconds
        )
    }
}

pub struct TrainOutcome {
    pub model: MetricModel,
    pub trace: TrainTrace,
    pub pairs: usize,
    pub model_path: PathBuf,
    pub trace_path: PathBuf,
}

/// Trains one metric on the whole dataset. With `pca_dim` set, the metric is
/// learned in the reduced space and saved lifted back to the input space.
pub fn cmd_train(config: &RunConfig) -> CliResult<TrainOutcome> {
    let data = read_dataset(&config.data, config.format)?;
    let pca = match config.pca_dim {
        Some(r) => Some(PcaTransform::fit(&data, r)?),
        None => None,
    };
    let reduced = match &pca {
        Some(p) => p.transform(&data)?,
        None => data.clone(),
    };
    let (model, trace, pairs) = match config.algo {
        AlgoArg::Identity => (MetricModel::identity(reduced.dim()), TrainTrace::default(), 0),
        AlgoArg::Pcml => {
            let pairs = build_constraints(&reduced, config.k)?;
            let (m, t) = train_pcml_with(&pairs, &config.pcml(), &mut log_row("pcml"))?;
            (m, t, pairs.len())
        }
        AlgoArg::Ncml => {
            let pairs = build_constraints(&reduced, config.k)?;
            let (m, t) = train_ncml_with(&pairs, &config.ncml(), &mut log_row("ncml"))?;
            (m, t, pairs.len())
        }
    };
    let model = match &pca {
        Some(p) => MetricModel::new(p.lift_metric(model.matrix())?, model.meta().clone())?,
        None => model,
    };
    ensure_dir(&config.out_dir)?;
    let model_path = config.out_dir.join(MODEL_FILE);
    let trace_path = config.out_dir.join(TRACE_FILE);
    model.save(&model_path)?;
    write_atomic(&trace_path, trace.to_csv().as_bytes())?;
    Ok(TrainOutcome {
        model,
        trace,
        pairs,
        model_path,
        trace_path,
    })
}

#[derive(Debug, Serialize)]
pub struct CvRunSummary {
    pub seed: u64,
    pub mean_error: f64,
    pub std_error: f64,
    pub fold_errors: Vec<f64>,
    pub unconverged_folds: usize,
}

/// Contents of `cv_summary.json`. Holds no timing, so identical inputs give
/// identical bytes.
#[derive(Debug, Serialize)]
pub struct CvSummary {
    pub algorithm: String,
    #[serde(rename = "C")]
    pub c: f64,
    pub eps: f64,
    pub k: usize,
    pub pca: Option<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub samples: usize,
    pub dim: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub runs: Vec<CvRunSummary>,
}

#[derive(Debug, Serialize)]
pub struct CvTiming {
    pub total_train_seconds: f64,
    pub mean_train_seconds_per_fold: f64,
    pub runs: Vec<CvRunTiming>,
}

#[derive(Debug, Serialize)]
pub struct CvRunTiming {
    pub seed: u64,
    pub train_seconds: Vec<f64>,
}

pub struct CvOutcome {
    pub summary: CvSummary,
    pub timing: CvTiming,
    pub reports: Vec<CvReport>,
}

impl CvOutcome {
    pub fn unconverged_folds(&self) -> usize {
        self.summary.runs.iter().map(|r| r.unconverged_folds).sum()
    }
}

pub fn learner_for(config: &RunConfig) -> Learner {
    match config.algo {
        AlgoArg::Pcml => Learner::Pcml(config.pcml()),
        AlgoArg::Ncml => Learner::Ncml(config.ncml()),
        AlgoArg::Identity => Learner::Euclidean,
    }
}

pub fn cmd_cv(config: &RunConfig) -> CliResult<CvOutcome> {
    let data = read_dataset(&config.data, config.format)?;
    let learner = learner_for(config);
    let reports = repeated_cv(&data, &learner, &config.cv(), config.repeats)?;

    let all_errors: Vec<f64> = reports.iter().flat_map(|r| r.fold_errors.iter().copied()).collect();
    let (mean_error, std_error) = metricforge::eval::mean_std(&all_errors);
    let seeds = (0..config.repeats as u64).map(|r| config.seed + r);
    let runs: Vec<CvRunSummary> = reports
        .iter()
        .zip(seeds.clone())
        .map(|(r, seed)| CvRunSummary {
            seed,
            mean_error: r.mean_error,
            std_error: r.std_error,
            fold_errors: r.fold_errors.clone(),
            unconverged_folds: r.folds.iter().filter(|f| !f.converged).count(),
        })
        .collect();
    let summary = CvSummary {
        algorithm: learner.algorithm().to_string(),
        c: config.c,
        eps: config.eps,
        k: config.k,
        pca: config.pca_dim,
        folds: config.folds,
        repeats: config.repeats,
        seed: config.seed,
        samples: data.len(),
        dim: data.dim(),
        mean_error,
        std_error,
        runs,
    };
    let total: f64 = reports.iter().map(|r| r.total_train_seconds()).sum();
    let timing = CvTiming {
        total_train_seconds: total,
        mean_train_seconds_per_fold: total / all_errors.len() as f64,
        runs: reports
            .iter()
            .zip(seeds)
            .map(|(r, seed)| CvRunTiming {
                seed,
                train_seconds: r.train_seconds.clone(),
            })
            .collect(),
    };

    let mut folds_csv = String::from("repeat,seed,fold,train_size,test_size,errors,error_rate,iterations,converged,train_seconds\n");
    for (rep, report) in reports.iter().enumerate() {
        for f in &report.folds {
            let _ = writeln!(
                folds_csv,
                "{rep},{},{},{},{},{},{:?},{},{},{:.6}",
                config.seed + rep as u64,
                f.fold,
                f.train_size,
                f.test_size,
                f.errors,
                f.error_rate,
                f.iterations,
                f.converged,
                f.train_seconds
            );
        }
    }
    ensure_dir(&config.out_dir)?;
    write_atomic(&config.out_dir.join(CV_FOLDS_FILE), folds_csv.as_bytes())?;
    write_atomic(&config.out_dir.join(CV_SUMMARY_FILE), json_bytes(&summary)?.as_slice())?;
    write_atomic(&config.out_dir.join(CV_TIMING_FILE), json_bytes(&timing)?.as_slice())?;
    Ok(CvOutcome {
        summary,
        timing,
        reports,
    })
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Core(metricforge::Error::Numerical(format!("JSON encoding failed: {e}"))))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn format_of(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Libsvm => Format::Libsvm,
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<metricforge::eval::RocReport> {
    let model = MetricModel::load(&args.model)?;
    let data: Dataset = read_dataset(&args.data, format_of(args.format))?;
    if data.dim() != model.dim() {
        return Err(CliError::usage(format!(
            "model dimension {} does not match the {}-dimensional features in {}",
            model.dim(),
            data.dim(),
            args.data.display()
        )));
    }
    let pairs = read_pair_file(&args.pairs)?;
    let report = verify_pairs(&model, &data, &pairs, args.thresholds)?;
    ensure_dir(&args.out_dir)?;
    write_atomic(&args.out_dir.join(ROC_FILE), report.to_csv().as_bytes())?;
    Ok(report)
}

/// Writes the inspection report for a model file. The report is printed
/// even when the matrix fails the PSD check, which is then returned as an
/// error.
pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> CliResult<()> {
    let raw = RawModel::read(&args.model)?;
    let eig = sym_eig(&raw.matrix)?;
    let scale = check_scale(&raw.matrix);
    let (min_eig, max_eig) = (eig.min_value(), eig.max_value());
    let rank = eig.values.iter().filter(|&&v| v > PSD_TOL * scale).count();
    let psd = min_eig >= -PSD_TOL * scale;
    let meta = &raw.meta;
    let mut report = String::new();
    let _ = writeln!(report, "model: {}", args.model.display());
    let _ = writeln!(report, "algorithm: {}", meta.algorithm);
    let _ = writeln!(report, "dim: {}", raw.matrix.dim());
    let _ = writeln!(report, "C: {}", meta.c);
    let _ = writeln!(report, "eps: {}", meta.eps);
    let _ = writeln!(report, "iterations: {}", meta.iterations);
    let _ = writeln!(report, "converged: {}", meta.converged);
    let _ = writeln!(report, "final_gap: {}", fmt_f64(meta.final_gap));
    let _ = writeln!(
        report,
        "coefficients: {}",
        raw.coeffs.as_ref().map_or("none".to_string(), |c| c.len().to_string())
    );
    let _ = writeln!(report, "eigenvalue min: {}", fmt_f64(min_eig));
    let _ = writeln!(report, "eigenvalue max: {}", fmt_f64(max_eig));
    let _ = writeln!(report, "trace: {}", fmt_f64(raw.matrix.trace()));
    let _ = writeln!(report, "rank: {rank}");
    let _ = writeln!(report, "PSD: {}", if psd { "yes" } else { "NO" });
    out.write_all(report.as_bytes()).map_err(|e| {
        CliError::Core(metricforge::Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
    })?;
    if !psd {
        return Err(CliError::NotPsd { min_eig });
    }
    raw.validate()?;
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<Dataset> {
    let data = match args.kind {
        SynthKind::TwoGaussians => two_gaussians(args.n, args.dim, args.separation.unwrap_or(8.0), args.seed)?,
        SynthKind::Anisotropic => {
            let mut params = Anisotropic {
                n: args.n,
                ..Anisotropic::default()
            };
            if let Some(s) = args.separation {
                params.separation = s;
            }
            anisotropic(&params, args.seed)?
        }
    };
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic(&args.out, to_csv(&data).as_bytes())?;
    Ok(data)
}
