use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slrl_core::data::SynthSpec;
use slrl_core::gat::{Activation, Combine};
use slrl_core::graph::Kernel;
use slrl_core::train::TrainConfig;

use crate::error::{CliError, CliResult};
use crate::manifest::DataSource;

#[derive(Debug, Parser)]
#[command(name = "slrl", version, about = "Multi-view clustering with a shared latent representation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model (or several seeds) and write its artifacts.
    Train(TrainArgs),
    /// Train over a gamma x k grid and write one aggregated row per cell.
    Sweep(SweepArgs),
    /// Compare the three network-structure variants.
    Ablate(TrainArgs),
    /// Check analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Generate and save a synthetic multi-view dataset.
    Synth(SynthArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// Re-execute the run recorded in a manifest.
    Rerun(RerunArgs),
}

/// `CxN`: C clusters of N samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthShape {
    pub clusters: usize,
    pub per_cluster: usize,
}

impl FromStr for SynthShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (c, n) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected CxN, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad count {t:?} in {s:?}"));
        Ok(SynthShape { clusters: parse(c)?, per_cluster: parse(n)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Sigmoid,
    Elu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CombineArg {
    Average,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

#[derive(Debug, Clone, Args)]
pub struct SynthOpts {
    /// Number of synthetic views.
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    /// Synthetic view widths; overrides --views.
    #[arg(long, value_delimiter = ',')]
    pub view_dims: Option<Vec<usize>>,
    /// Synthetic noise level.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

impl SynthOpts {
    pub fn spec(&self, shape: SynthShape, seed: u64) -> CliResult<SynthSpec> {
        let view_dims = match &self.view_dims {
            Some(d) => d.clone(),
            None if self.views == 0 => return Err(CliError::usage("--views must be >= 1")),
            None => (0..self.views).map(|v| 20 + 10 * v).collect(),
        };
        Ok(SynthSpec {
            clusters: shape.clusters,
            per_cluster: shape.per_cluster,
            view_dims,
            noise: self.noise,
            seed,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory containing a manifest.txt.
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Generate C clusters of N samples instead of loading, e.g. 3x50.
    #[arg(long, value_name = "CxN")]
    pub synth: Option<SynthShape>,
    #[command(flatten)]
    pub synth_opts: SynthOpts,
    /// Synthetic generator seed; defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

impl DataArgs {
    /// The data source, or `None` when neither --data nor --synth was given.
    pub fn source(&self, seed: u64) -> CliResult<Option<DataSource>> {
        match (&self.data, self.synth) {
            (Some(dir), _) => Ok(Some(DataSource::Dir { path: dir.clone() })),
            (None, Some(shape)) => {
                let spec = self.synth_opts.spec(shape, self.data_seed.unwrap_or(seed))?;
                Ok(Some(DataSource::Synth { spec }))
            }
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub latent_dim: usize,
    /// Neighbours per node in the kNN graph.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Weight of the clustering loss.
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Joint-phase epoch cap.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Reconstruction-only warm-up epochs.
    #[arg(long, default_value_t = 50)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Attention layers; 0 clusters the latent directly.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Sigmoid)]
    pub activation: ActivationArg,
    #[arg(long, value_enum, default_value_t = CombineArg::Average)]
    pub combine: CombineArg,
    /// Edge kernel; chosen from the view kinds when omitted.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Gaussian bandwidth; median heuristic when omitted.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Cluster count; defaults to the number of distinct labels.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pin every kernel to its serial path.
    #[arg(long)]
    pub deterministic: bool,
}

impl ModelArgs {
    pub fn config(&self) -> CliResult<TrainConfig> {
        if self.sigma.is_some() && self.kernel == Some(KernelArg::Dot) {
            return Err(CliError::usage("--sigma only applies to the gaussian kernel"));
        }
        let cfg = TrainConfig {
            latent_dim: self.latent_dim,
            k: self.k,
            gamma: self.gamma,
            learning_rate: self.lr,
            epochs: self.epochs,
            pretrain_epochs: self.pretrain_epochs,
            heads: self.heads,
            gat_layers: self.layers,
            activation: match self.activation {
                ActivationArg::Sigmoid => Activation::Sigmoid,
                ActivationArg::Elu => Activation::Elu,
            },
            combine: match self.combine {
                CombineArg::Average => Combine::Average,
                CombineArg::Concat => Combine::Concat,
            },
            kernel: self.kernel.map(|k| match k {
                KernelArg::Gaussian => Kernel::Gaussian { sigma: None },
                KernelArg::Dot => Kernel::Dot,
            }),
            sigma: self.sigma,
            clusters: self.clusters,
            seed: self.seed,
            deterministic: self.deterministic,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value = "slrl-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Gamma grid; defaults to the decades 1e-5 ..= 1e4.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Neighbour-count grid; defaults to 3 ..= 15.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
}

impl SweepArgs {
    pub fn grids(&self) -> CliResult<(Vec<f64>, Vec<usize>)> {
        let gammas = self.gammas.clone().unwrap_or_else(|| (-5..=4).map(|e| 10f64.powi(e)).collect());
        let ks = self.ks.clone().unwrap_or_else(|| (3..=15).collect());
        if gammas.is_empty() || ks.is_empty() {
            return Err(CliError::usage("sweep grids must be nonempty"));
        }
        Ok((gammas, ks))
    }
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "slrl-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// C clusters of N samples, e.g. 3x50.
    #[arg(long, value_name = "CxN")]
    pub synth: SynthShape,
    #[command(flatten)]
    pub opts: SynthOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted labels, one per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the metrics block here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// The manifest.json of an earlier run.
    pub manifest: PathBuf,
    /// Output directory; defaults to the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
