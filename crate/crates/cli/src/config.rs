//! Run configuration: command-line flags layered over an optional TOML file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sparsemix::model::{Dataset, E0Policy, MeanPrior, PriorSpec};
use sparsemix::sampler::ChainConfig;
use sparsemix::simdata;

use crate::CliError;

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Builtin(String),
    Csv { path: PathBuf, header: bool, label_column: Option<String> },
    Simulated { design: String, seed: u64 },
}

impl DataSource {
    /// Parses `builtin:NAME`, `csv:PATH` or `sim:DESIGN:SEED`.
    pub fn parse(text: &str, header: bool, label_column: Option<String>) -> Result<Self, CliError> {
        let (kind, rest) = text.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("data source {text:?} must look like builtin:NAME, csv:PATH or sim:DESIGN:SEED"))
        })?;
        match kind {
            "builtin" => Ok(DataSource::Builtin(rest.to_string())),
            "csv" => Ok(DataSource::Csv { path: PathBuf::from(rest), header, label_column }),
            "sim" => {
                let (design, seed) = rest
                    .split_once(':')
                    .ok_or_else(|| CliError::Usage(format!("simulated source {text:?} needs sim:DESIGN:SEED")))?;
                let seed = seed.parse().map_err(|_| CliError::Usage(format!("bad seed in {text:?}")))?;
                simdata::design_by_name(design)?;
                Ok(DataSource::Simulated { design: design.to_string(), seed })
            }
            other => Err(CliError::Usage(format!("unknown data source kind {other:?}"))),
        }
    }

    pub fn load(&self) -> Result<Dataset, CliError> {
        Ok(match self {
            DataSource::Builtin(name) => simdata::builtin(name)?,
            DataSource::Csv { path, header, label_column } => {
                simdata::load_csv(path, *header, label_column.as_deref())?
            }
            DataSource::Simulated { design, seed } => simdata::generate(&simdata::design_by_name(design)?, *seed)?,
        })
    }

    /// Checks referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        if let DataSource::Csv { path, .. } = self {
            if !path.is_file() {
                return Err(CliError::Config(format!("data file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Builtin(name) => write!(f, "builtin:{name}"),
            DataSource::Csv { path, .. } => write!(f, "csv:{}", path.display()),
            DataSource::Simulated { design, seed } => write!(f, "sim:{design}:{seed}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Standard,
    Ng,
}

/// `fixed:<value>` or `gamma:<a>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct E0Arg(pub E0Policy);

impl FromStr for E0Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, v) = s.split_once(':').ok_or_else(|| format!("expected fixed:<v> or gamma:<a>, got {s:?}"))?;
        let v: f64 = v.parse().map_err(|_| format!("not a number: {v:?}"))?;
        match kind {
            "fixed" => Ok(E0Arg(E0Policy::Fixed { value: v })),
            "gamma" => Ok(E0Arg(E0Policy::GammaHyper { a: v })),
            _ => Err(format!("expected fixed:<v> or gamma:<a>, got {s:?}")),
        }
    }
}

impl fmt::Display for E0Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            E0Policy::Fixed { value } => write!(f, "fixed:{value}"),
            E0Policy::GammaHyper { a } => write!(f, "gamma:{a}"),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<String>,
    pub header: Option<bool>,
    pub label_column: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub k: Option<usize>,
    pub mean: Option<PriorKind>,
    pub e0: Option<String>,
    pub mh_step: Option<f64>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub seed: Option<u64>,
    pub store_sigma: Option<bool>,
    pub store_allocations: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// The configuration file: flat keys under `data`, `prior`, `chain` and
/// `output`, written either as tables or as dotted keys.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Overlays `top` on `self`; values set in `top` win.
    pub fn overlay(self, top: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($a:expr, $b:expr) => {
                $b.or($a)
            };
        }
        FileConfig {
            data: DataSection {
                source: pick!(self.data.source, top.data.source),
                header: pick!(self.data.header, top.data.header),
                label_column: pick!(self.data.label_column, top.data.label_column),
            },
            prior: PriorSection {
                k: pick!(self.prior.k, top.prior.k),
                mean: pick!(self.prior.mean, top.prior.mean),
                e0: pick!(self.prior.e0, top.prior.e0),
                mh_step: pick!(self.prior.mh_step, top.prior.mh_step),
                nu1: pick!(self.prior.nu1, top.prior.nu1),
                nu2: pick!(self.prior.nu2, top.prior.nu2),
            },
            chain: ChainSection {
                iters: pick!(self.chain.iters, top.chain.iters),
                burnin: pick!(self.chain.burnin, top.chain.burnin),
                seed: pick!(self.chain.seed, top.chain.seed),
                store_sigma: pick!(self.chain.store_sigma, top.chain.store_sigma),
                store_allocations: pick!(self.chain.store_allocations, top.chain.store_allocations),
            },
            output: OutputSection { dir: pick!(self.output.dir, top.output.dir) },
        }
    }
}

/// A fully resolved fit.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: DataSource,
    pub spec: PriorSpec,
    pub chain: ChainConfig,
    pub out: PathBuf,
    /// The resolved settings, as written next to the archive.
    pub resolved: FileConfig,
}

impl RunConfig {
    /// Applies defaults (K = 15, standard prior, `e₀ ~ G(10, 10K)`,
    /// ν₁ = ν₂ = 0.5, burn-in 2000, 10 000 stored iterations) and validates.
    pub fn resolve(cfg: FileConfig, default_out: impl FnOnce(&str) -> PathBuf) -> Result<Self, CliError> {
        let header = cfg.data.header.unwrap_or(true);
        let source_text = cfg
            .data
            .source
            .clone()
            .ok_or_else(|| CliError::Usage("no dataset given; pass --data or set data.source".into()))?;
        let source = DataSource::parse(&source_text, header, cfg.data.label_column.clone())?;
        source.validate()?;

        let k = cfg.prior.k.unwrap_or(15);
        let mean = cfg.prior.mean.unwrap_or(PriorKind::Standard);
        let nu1 = cfg.prior.nu1.unwrap_or(0.5);
        let nu2 = cfg.prior.nu2.unwrap_or(0.5);
        let mean_prior = match mean {
            PriorKind::Standard => MeanPrior::Standard,
            PriorKind::Ng => MeanPrior::NormalGamma { nu1, nu2 },
        };
        let e0 = match &cfg.prior.e0 {
            Some(s) => s.parse::<E0Arg>().map_err(CliError::Usage)?.0,
            None => E0Policy::GammaHyper { a: 10.0 },
        };
        let mut spec = PriorSpec::new(k, mean_prior, e0);
        if let Some(step) = cfg.prior.mh_step {
            spec.mh_step = step;
        }
        spec.validate()?;
        if let MeanPrior::NormalGamma { nu1, nu2 } = spec.mean_prior {
            if !(nu1 > 0.0 && nu2 > 0.0) {
                return Err(CliError::Config(format!("nu1 and nu2 must be positive, got {nu1} and {nu2}")));
            }
        }

        let chain = ChainConfig {
            burn_in: cfg.chain.burnin.unwrap_or(2000),
            iterations: cfg.chain.iters.unwrap_or(10_000),
            store_sigma: cfg.chain.store_sigma.unwrap_or(false),
            store_allocations: cfg.chain.store_allocations.unwrap_or(true),
            seed: cfg.chain.seed.unwrap_or(1),
        };
        chain.validate()?;
        let out = cfg.output.dir.clone().unwrap_or_else(|| default_out(&source_text));

        let resolved = FileConfig {
            data: DataSection {
                source: Some(source.to_string()),
                header: Some(header),
                label_column: cfg.data.label_column.clone(),
            },
            prior: PriorSection {
                k: Some(k),
                mean: Some(mean),
                e0: Some(E0Arg(e0).to_string()),
                mh_step: Some(spec.mh_step),
                nu1: Some(nu1),
                nu2: Some(nu2),
            },
            chain: ChainSection {
                iters: Some(chain.iterations),
                burnin: Some(chain.burn_in),
                seed: Some(chain.seed),
                store_sigma: Some(chain.store_sigma),
                store_allocations: Some(chain.store_allocations),
            },
            output: OutputSection { dir: Some(out.clone()) },
        };
        Ok(RunConfig { source, spec, chain, out, resolved })
    }
}
