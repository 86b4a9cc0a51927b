//! Command-line flags, the optional TOML config file, and their merge.
//! Config keys are the long flag names; a flag given on the command line
//! always wins over the file.

use std::path::{Path, PathBuf};

use cgmvc_core::embedding::NormMode;
use cgmvc_core::io::SyntheticSpec;
use cgmvc_core::pipeline::PipelineConfig;
use cgmvc_core::tensor::GammaParam;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_OUT: &str = "cgmvc-out";

#[derive(Debug, Parser)]
#[command(name = "cgmvc", version, about = "Multi-view clustering with a tensor-regularized consensus graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dataset described by a manifest.
    Run {
        /// Dataset manifest (TOML).
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Generate a synthetic multi-view dataset and cluster it.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Also write the generated dataset (manifest plus view files) here.
        #[arg(long)]
        save_data: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run a grid of norm modes and parameters and tabulate the results.
    Bench {
        /// Dataset manifest; synthetic data is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        /// Norm modes to compare (default: all three).
        #[arg(long, value_delimiter = ',', value_parser = parse_norm)]
        norms: Option<Vec<NormMode>>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Check the proximal operators and t-product against reference oracles.
    ProxCheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scalar_cases: Option<usize>,
        #[arg(long)]
        tensor_cases: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Neighbors per sample in every graph.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Defaults to 1/sqrt(n).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_parser = parse_norm)]
    pub norm: Option<NormMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file whose keys are flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_per_cluster: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    /// Per-view noise levels; the last one repeats.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    #[arg(long)]
    pub separation: Option<f64>,
    /// Seed of the generator, separate from the clustering seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

fn parse_norm(s: &str) -> Result<NormMode, String> {
    s.parse().map_err(|e: cgmvc_core::Error| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Every key any subcommand understands. Keys that do not apply to the
/// invoked subcommand are ignored; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub k: Option<usize>,
    pub clusters: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub eps: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub norm: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_per_cluster: Option<usize>,
    pub views: Option<usize>,
    pub noise: Option<OneOrMany<f64>>,
    pub separation: Option<f64>,
    pub data_seed: Option<u64>,
    pub save_data: Option<PathBuf>,
    pub norms: Option<OneOrMany<String>>,
    pub gammas: Option<OneOrMany<f64>>,
    pub rhos: Option<OneOrMany<f64>>,
    pub lambdas: Option<OneOrMany<f64>>,
    pub scalar_cases: Option<usize>,
    pub tensor_cases: Option<usize>,
}

impl FileConfig {
    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message().trim())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.out, &mut cfg.save_data].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn norm(&self) -> Result<Option<NormMode>, CliError> {
        self.norm.as_deref().map(parse_norm_key).transpose()
    }

    pub fn norms(&self) -> Result<Option<Vec<NormMode>>, CliError> {
        self.norms
            .clone()
            .map(|n| n.into_vec().iter().map(|s| parse_norm_key(s)).collect())
            .transpose()
    }

    pub fn list(v: &Option<OneOrMany<f64>>) -> Option<Vec<f64>> {
        v.clone().map(OneOrMany::into_vec)
    }
}

fn parse_norm_key(s: &str) -> Result<NormMode, CliError> {
    s.parse().map_err(|e: cgmvc_core::Error| CliError::Usage(format!("config: {e}")))
}

/// Merged pipeline settings plus the output directory.
pub struct Resolved {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

/// Flags over file values over defaults. `default_clusters` is used when
/// neither source names a cluster count; `None` makes it mandatory.
pub fn resolve_pipeline(
    args: &PipelineArgs,
    file: &FileConfig,
    default_clusters: Option<usize>,
) -> Result<Resolved, CliError> {
    let clusters = args
        .clusters
        .or(file.clusters)
        .or(default_clusters)
        .ok_or_else(|| CliError::Usage("missing required value for --clusters".into()))?;
    let mut cfg = PipelineConfig::new(args.k.or(file.k).unwrap_or(DEFAULT_K), clusters);
    if let Some(g) = args.gamma.or(file.gamma) {
        cfg.gamma = GammaParam::new(g).map_err(CliError::from_core)?;
    }
    cfg.lambda = args.lambda.or(file.lambda).or(cfg.lambda);
    cfg.rho = args.rho.or(file.rho).unwrap_or(cfg.rho);
    cfg.eps = args.eps.or(file.eps).unwrap_or(cfg.eps);
    cfg.max_iter = args.max_iter.or(file.max_iter).unwrap_or(cfg.max_iter);
    cfg.restarts = args.restarts.or(file.restarts).unwrap_or(cfg.restarts);
    cfg.norm = match args.norm {
        Some(n) => n,
        None => file.norm()?.unwrap_or(cfg.norm),
    };
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Resolved { config: cfg, out })
}

pub fn resolve_synth(args: &SynthArgs, file: &FileConfig, clusters: Option<usize>) -> SyntheticSpec {
    let d = SyntheticSpec::default();
    SyntheticSpec {
        n_per_cluster: args.n_per_cluster.or(file.n_per_cluster).unwrap_or(d.n_per_cluster),
        clusters: clusters.unwrap_or(d.clusters),
        views: args.views.or(file.views).unwrap_or(d.views),
        separation: args.separation.or(file.separation).unwrap_or(d.separation),
        noise: args
            .noise
            .clone()
            .or_else(|| FileConfig::list(&file.noise))
            .unwrap_or(d.noise),
        seed: args.data_seed.or(file.data_seed).unwrap_or(d.seed),
    }
}
