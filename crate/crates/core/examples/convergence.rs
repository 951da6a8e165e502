//! Prints the duality-gap trace of both solvers on a synthetic two-Gaussian
//! dataset.
//!
//! ```text
//! cargo run --release -p metricforge --example convergence -- [n] [dim] [separation] [seed]
//! ```

use metricforge::ncml::{train_ncml_with, NcmlConfig};
use metricforge::pcml::{train_pcml_with, PcmlConfig};
use metricforge::synth::two_gaussians;
use metricforge::{build_constraints, TraceRow};

fn main() -> metricforge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let n = arg(0, 200.0) as usize;
    let dim = arg(1, 10.0) as usize;
    let separation = arg(2, 8.0);
    let seed = arg(3, 7.0) as u64;

    let data = two_gaussians(n, dim, separation, seed)?;
    let pairs = build_constraints(&data, 2)?;
    println!("P = {} constraints", pairs.len());

    let print = |name: &str| {
        let name = name.to_string();
        move |r: &TraceRow| {
            println!(
                "{name} {:3} primal {:.6e} dual {:.6e} gap {:.6e} t {:.3}s",
                r.iter, r.primal, r.dual, r.gap, r.seconds
            )
        }
    };
    let (model, trace) = train_pcml_with(&pairs, &PcmlConfig::default(), &mut print("pcml"))?;
    println!(
        "pcml: {} iterations, converged {}, ratio {:.3e}",
        trace.len(),
        model.meta().converged,
        trace.final_ratio().unwrap_or(f64::NAN)
    );
    let (model, trace) = train_ncml_with(&pairs, &NcmlConfig::default(), &mut print("ncml"))?;
    println!(
        "ncml: {} iterations, converged {}, ratio {:.3e}",
        trace.len(),
        model.meta().converged,
        trace.final_ratio().unwrap_or(f64::NAN)
    );
    Ok(())
}
