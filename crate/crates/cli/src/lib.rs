//! Command implementations behind the `metricforge` binary.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or parse failure, 4 numerical
//! failure (including a non-PSD model), 5 training stopped at the iteration
//! cap.

pub mod args;
pub mod commands;
pub mod config;
mod error;

use std::io::Write;

pub use error::{CliError, CliResult};

use args::{Cli, Command};
use commands::{cmd_cv, cmd_generate, cmd_inspect, cmd_train, cmd_verify};
use config::RunConfig;

/// Runs one parsed command line, printing human-readable summaries to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let io = |e: std::io::Error| {
        CliError::Core(metricforge::Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
    };
    match &cli.command {
        Command::Train(args) => {
            let config = RunConfig::from_learn(&args.learn)?;
            let t = cmd_train(&config)?;
            let meta = t.model.meta();
            writeln!(
                out,
                "{} on {} pairs: {} iterations, converged {}, final gap {:e}",
                meta.algorithm, t.pairs, meta.iterations, meta.converged, meta.final_gap
            )
            .map_err(io)?;
            writeln!(out, "wrote {} and {}", t.model_path.display(), t.trace_path.display()).map_err(io)?;
            if !meta.converged {
                return Err(CliError::NotConverged(format!(
                    "stopped at max_iter = {} before the gap criterion was met",
                    config.max_iter
                )));
            }
        }
        Command::Cv(args) => {
            let config = RunConfig::from_cv(args)?;
            let cv = cmd_cv(&config)?;
            let s = &cv.summary;
            writeln!(
                out,
                "{} {}-fold x{}: mean error {:.4} (std {:.4}), training {:.2}s",
                s.algorithm, s.folds, s.repeats, s.mean_error, s.std_error, cv.timing.total_train_seconds
            )
            .map_err(io)?;
            writeln!(out, "wrote {}", config.out_dir.join(commands::CV_SUMMARY_FILE).display()).map_err(io)?;
            let unconverged = cv.unconverged_folds();
            if unconverged > 0 {
                return Err(CliError::NotConverged(format!(
                    "{unconverged} fold(s) stopped at max_iter = {}",
                    config.max_iter
                )));
            }
        }
        Command::Verify(args) => {
            let r = cmd_verify(args)?;
            writeln!(
                out,
                "{} matched / {} mismatched pairs: best accuracy {:.4} at threshold {:e}",
                r.matched, r.mismatched, r.best_accuracy, r.best_threshold
            )
            .map_err(io)?;
        }
        Command::Inspect(args) => cmd_inspect(args, out)?,
        Command::Generate(args) => {
            let data = cmd_generate(args)?;
            writeln!(out, "wrote {} samples of dimension {} to {}", data.len(), data.dim(), args.out.display())
                .map_err(io)?;
        }
    }
    Ok(())
}
