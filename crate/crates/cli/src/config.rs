//! Run configuration: command-line flags over an optional `key = value`
//! file over built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use glle::glle_direct::{DirectMean, DEFAULT_GAMMA_REG};
use glle::glle_em::{SampleSchedule, SecondMoment};

use crate::CliError;

pub const DEFAULT_SCALES: [f64; 5] = [0.01, 0.1, 1.0, 5.0, 10.0];

/// Flags shared by every verb. All optional so that a config file can fill
/// the gaps.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// s-curve, swiss-roll, swiss-roll-hole or severed-bowl.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Read the dataset from a CSV file instead of generating it.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output file for `generate`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// lle, glle-em or glle-direct.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Sampling seed; generation g uses seed + g. `generate` also uses it for
    /// the data.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for generated datasets in embed, sweep and compare.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Comma-separated covariance scales for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Regularization of the local Gram matrices.
    #[arg(long)]
    pub reg: Option<f64>,
    /// Regularization of the direct-sampling covariances.
    #[arg(long)]
    pub gamma_reg: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// standard or covariance-only.
    #[arg(long)]
    pub em_moment: Option<String>,
    /// after-convergence or every-iteration.
    #[arg(long)]
    pub em_sample: Option<String>,
    /// lle or conditional.
    #[arg(long)]
    pub direct_mean: Option<String>,
    /// File of `key = value` lines using the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lle,
    GlleEm,
    GlleDirect,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lle => "lle",
            Method::GlleEm => "glle-em",
            Method::GlleDirect => "glle-direct",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lle" => Ok(Method::Lle),
            "glle-em" => Ok(Method::GlleEm),
            "glle-direct" => Ok(Method::GlleDirect),
            other => Err(format!("unknown method '{other}' (expected lle, glle-em or glle-direct)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    SCurve,
    SwissRoll,
    SwissRollHole,
    SeveredBowl,
}

impl Manifold {
    pub fn name(self) -> &'static str {
        match self {
            Manifold::SCurve => "s-curve",
            Manifold::SwissRoll => "swiss-roll",
            Manifold::SwissRollHole => "swiss-roll-hole",
            Manifold::SeveredBowl => "severed-bowl",
        }
    }
}

impl FromStr for Manifold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "s-curve" => Ok(Manifold::SCurve),
            "swiss-roll" => Ok(Manifold::SwissRoll),
            "swiss-roll-hole" => Ok(Manifold::SwissRollHole),
            "severed-bowl" => Ok(Manifold::SeveredBowl),
            other => Err(format!(
                "unknown dataset '{other}' (expected s-curve, swiss-roll, swiss-roll-hole or severed-bowl)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generated { manifold: Manifold, n: usize, seed: u64 },
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub source: DataSource,
    pub out: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub scale: f64,
    pub scales: Vec<f64>,
    pub generations: usize,
    pub reg: f64,
    pub gamma_reg: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub em_moment: SecondMoment,
    pub em_sample: SampleSchedule,
    pub direct_mean: DirectMean,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys may use `-` or `_`.
pub fn parse_config_file(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key = value", origin.display(), lineno + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown key '{key}'",
                origin.display(),
                lineno + 1
            )));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

const KNOWN_KEYS: &[&str] = &[
    "dataset", "in", "out", "out-dir", "method", "k", "p", "n", "seed", "data-seed", "scale", "scales",
    "generations", "reg", "gamma-reg", "tol", "max-iter", "em-moment", "em-sample", "direct-mean",
];

struct Layered<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layered<'_> {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }

    fn list(&self, flag: Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn parse_named<T: FromStr<Err = String>>(value: Option<String>, default: T) -> Result<T, CliError> {
    match value {
        None => Ok(default),
        Some(s) => s.parse().map_err(CliError::Usage),
    }
}

/// Merges flags, the optional config file and defaults, then validates.
pub fn resolve(flags: &Flags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        None => BTreeMap::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config_file(&text, path)?
        }
    };
    let l = Layered { file: &file };

    let method = parse_named(l.get(flags.method.clone(), "method")?, Method::Lle)?;
    let n = l.get(flags.n, "n")?.unwrap_or(1000);
    let input: Option<PathBuf> = l.get(flags.input.clone(), "in")?;
    let dataset: Option<String> = l.get(flags.dataset.clone(), "dataset")?;
    let data_seed = l.get(flags.data_seed, "data-seed")?.unwrap_or(0);
    let seed = l.get(flags.seed, "seed")?.unwrap_or(0);
    let source = match (input, dataset) {
        (Some(_), Some(_)) => return usage("--in and --dataset are mutually exclusive"),
        (Some(path), None) => DataSource::Csv(path),
        (None, name) => {
            let manifold = parse_named(name, Manifold::SwissRoll)?;
            if n == 0 {
                return usage("--n must be at least 1");
            }
            DataSource::Generated {
                manifold,
                n,
                seed: data_seed,
            }
        }
    };

    let k = l.get(flags.k, "k")?.unwrap_or(10);
    let p = l.get(flags.p, "p")?.unwrap_or(2);
    if k == 0 {
        return usage("--k must be at least 1");
    }
    if p == 0 {
        return usage("--p must be at least 1");
    }
    let scale = l.get(flags.scale, "scale")?.unwrap_or(1.0);
    if !(scale > 0.0) || !scale.is_finite() {
        return usage(format!("--scale must be positive and finite, got {scale}"));
    }
    let scales = l.list(flags.scales.clone(), "scales")?.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return usage("--scales must be a non-empty list of positive numbers");
    }
    let generations = l.get(flags.generations, "generations")?.unwrap_or(1);
    if generations == 0 {
        return usage("--generations must be at least 1");
    }
    let reg = l.get(flags.reg, "reg")?.unwrap_or(glle::lle::DEFAULT_REG);
    let gamma_reg = l.get(flags.gamma_reg, "gamma-reg")?.unwrap_or(DEFAULT_GAMMA_REG);
    if !(reg >= 0.0) || !(gamma_reg >= 0.0) {
        return usage("--reg and --gamma-reg must be non-negative");
    }
    let tol = l.get(flags.tol, "tol")?.unwrap_or(1e-6);
    if !(tol > 0.0) {
        return usage(format!("--tol must be positive, got {tol}"));
    }
    let max_iter = l.get(flags.max_iter, "max-iter")?.unwrap_or(100);
    if max_iter == 0 {
        return usage("--max-iter must be at least 1");
    }
    let em_moment = match l.get(flags.em_moment.clone(), "em-moment")?.as_deref() {
        None | Some("standard") => SecondMoment::Standard,
        Some("covariance-only") => SecondMoment::CovarianceOnly,
        Some(other) => return usage(format!("unknown --em-moment '{other}'")),
    };
    let em_sample = match l.get(flags.em_sample.clone(), "em-sample")?.as_deref() {
        None | Some("after-convergence") => SampleSchedule::AfterConvergence,
        Some("every-iteration") => SampleSchedule::EveryIteration,
        Some(other) => return usage(format!("unknown --em-sample '{other}'")),
    };
    let direct_mean = match l.get(flags.direct_mean.clone(), "direct-mean")?.as_deref() {
        None | Some("lle") => DirectMean::Lle,
        Some("conditional") => DirectMean::Conditional,
        Some(other) => return usage(format!("unknown --direct-mean '{other}'")),
    };

    Ok(RunConfig {
        method,
        source,
        out: l.get(flags.out.clone(), "out")?,
        out_dir: l.get(flags.out_dir.clone(), "out-dir")?.unwrap_or_else(|| PathBuf::from(".")),
        k,
        p,
        seed,
        scale,
        scales,
        generations,
        reg,
        gamma_reg,
        tol,
        max_iter,
        em_moment,
        em_sample,
        direct_mean,
    })
}
