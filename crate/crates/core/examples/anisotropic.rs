//! Compares 1-NN cross-validation error of the learned metrics against the
//! Euclidean baseline on the anisotropic synthetic benchmark.

use metricforge::eval::{kfold_cv, CvConfig, Learner};
use metricforge::ncml::NcmlConfig;
use metricforge::pcml::PcmlConfig;
use metricforge::synth::{anisotropic, Anisotropic};

fn main() -> metricforge::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let learners = [
        ("euclidean", Learner::Euclidean),
        ("pcml", Learner::Pcml(PcmlConfig::default())),
        ("ncml", Learner::Ncml(NcmlConfig::default())),
    ];
    let mut totals = [0.0; 3];
    for seed in 0..seeds {
        let data = anisotropic(&Anisotropic::default(), seed)?;
        let config = CvConfig { seed, ..CvConfig::default() };
        let mut line = format!("seed {seed:2}");
        for (i, (name, learner)) in learners.iter().enumerate() {
            let report = kfold_cv(&data, learner, &config)?;
            totals[i] += report.mean_error;
            line.push_str(&format!("  {name} {:.4}", report.mean_error));
        }
        println!("{line}");
    }
    for (i, (name, _)) in learners.iter().enumerate() {
        println!("mean {name} {:.4}", totals[i] / seeds as f64);
    }
    Ok(())
}
