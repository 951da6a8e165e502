use std::path::{Path, PathBuf};

use metricforge::eval::CvConfig;
use metricforge::ncml::NcmlConfig;
use metricforge::pcml::PcmlConfig;
use metricforge::Format;
use serde::Deserialize;

use crate::args::{AlgoArg, CvArgs, FormatArg, LearnArgs};
use crate::error::{CliError, CliResult};

/// Keys accepted in a `--config` file. Names match the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub format: Option<FormatArg>,
    pub algo: Option<AlgoArg>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub eps: Option<f64>,
    pub k: Option<usize>,
    pub pca: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| metricforge::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            CliError::Core(metricforge::Error::Parse {
                source_name: path.display().to_string(),
                line,
                message: e.message().to_string(),
            })
        })
    }
}

/// Fully resolved settings for `train` and `cv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub format: Format,
    pub algo: AlgoArg,
    pub c: f64,
    pub eps: f64,
    pub k: usize,
    pub pca_dim: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub out_dir: PathBuf,
    pub folds: usize,
    pub repeats: usize,
    pub jobs: usize,
}

impl RunConfig {
    pub fn from_learn(args: &LearnArgs) -> CliResult<Self> {
        Self::resolve(args, None)
    }

    pub fn from_cv(args: &CvArgs) -> CliResult<Self> {
        Self::resolve(&args.learn, Some(args))
    }

    fn resolve(args: &LearnArgs, cv: Option<&CvArgs>) -> CliResult<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::read(path)?,
            None => FileConfig::default(),
        };
        let defaults = PcmlConfig::default();
        let data = args
            .data
            .clone()
            .or(file.data)
            .ok_or_else(|| CliError::usage("no dataset given: pass --data or set `data` in the config file"))?;
        let format = match args.format.or(file.format) {
            Some(f) => f,
            None => guess_format(&data),
        };
        let config = RunConfig {
            data,
            format: match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Libsvm => Format::Libsvm,
            },
            algo: args.algo.or(file.algo).unwrap_or(AlgoArg::Pcml),
            c: args.c.or(file.c).unwrap_or(defaults.c),
            eps: args.eps.or(file.eps).unwrap_or(defaults.eps),
            k: args.k.or(file.k).unwrap_or(2),
            pca_dim: args.pca.or(file.pca),
            seed: args.seed.or(file.seed).unwrap_or(0),
            max_iter: args.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            folds: cv.and_then(|c| c.folds).or(file.folds).unwrap_or(10),
            repeats: cv.and_then(|c| c.repeats).or(file.repeats).unwrap_or(1),
            jobs: cv.and_then(|c| c.jobs).or(file.jobs).unwrap_or(1),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, why: &str| Err(CliError::usage(format!("invalid `{field}`: {why}")));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C", &format!("must be positive and finite, got {}", self.c));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps", &format!("must lie in (0, 1), got {}", self.eps));
        }
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.pca_dim == Some(0) {
            return bad("pca", "must be at least 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds", &format!("must be at least 2, got {}", self.folds));
        }
        if self.repeats == 0 {
            return bad("repeats", "must be at least 1");
        }
        if self.jobs == 0 {
            return bad("jobs", "must be at least 1");
        }
        Ok(())
    }

    pub fn pcml(&self) -> PcmlConfig {
        PcmlConfig {
            c: self.c,
            eps: self.eps,
            max_iter: self.max_iter,
            ..PcmlConfig::default()
        }
    }

    pub fn ncml(&self) -> NcmlConfig {
        NcmlConfig {
            c: self.c,
            eps: self.eps,
            max_iter: self.max_iter,
            seed: self.seed,
            ..NcmlConfig::default()
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.folds,
            k: self.k,
            pca_dim: self.pca_dim,
            seed: self.seed,
            jobs: self.jobs,
        }
    }
}

fn guess_format(path: &Path) -> FormatArg {
    match path.extension().and_then(|e| e.to_str()) {
        Some("libsvm" | "svm" | "svmlight") => FormatArg::Libsvm,
        _ => FormatArg::Csv,
    }
}
