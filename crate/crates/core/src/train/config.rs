use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gat::{Activation, Combine};
use crate::graph::Kernel;

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub k: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Joint-phase epoch cap.
    pub epochs: usize,
    pub heads: usize,
    pub gat_layers: usize,
    pub activation: Activation,
    pub combine: Combine,
    /// `None` picks the kernel from the dataset's view kinds.
    pub kernel: Option<Kernel>,
    /// Explicit sigma for the Gaussian kernel; `None` uses the median heuristic.
    pub sigma: Option<f64>,
    pub graph_rebuild_every: usize,
    pub p_refresh_every: usize,
    pub pretrain_epochs: usize,
    /// Decoder hidden width; `None` means `max(2F, d_v)`.
    pub hidden: Option<usize>,
    /// Cluster count; `None` takes the number of distinct labels.
    pub clusters: Option<usize>,
    pub kmeans_restarts: usize,
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Serial kernels only. Results are identical either way; this pins it.
    pub deterministic: bool,
    /// Record metrics against labels after every epoch.
    pub track_metrics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 64,
            k: 10,
            gamma: 10.0,
            learning_rate: 0.01,
            epochs: 200,
            heads: 4,
            gat_layers: 1,
            activation: Activation::Sigmoid,
            combine: Combine::Average,
            kernel: None,
            sigma: None,
            graph_rebuild_every: 1,
            p_refresh_every: 1,
            pretrain_epochs: 50,
            hidden: None,
            clusters: None,
            kmeans_restarts: 10,
            early_stop_tol: 1e-6,
            early_stop_patience: 10,
            seed: 0,
            deterministic: true,
            track_metrics: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("latent_dim", self.latent_dim),
            ("k", self.k),
            ("heads", self.heads),
            ("graph_rebuild_every", self.graph_rebuild_every),
            ("p_refresh_every", self.p_refresh_every),
            ("kmeans_restarts", self.kmeans_restarts),
            ("early_stop_patience", self.early_stop_patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be >= 1")));
            }
        }
        if self.latent_dim < 2 {
            return Err(Error::Parameter("latent_dim must be >= 2".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::Parameter(format!("sigma must be > 0, got {s}")));
            }
        }
        if self.hidden == Some(0) {
            return Err(Error::Parameter("hidden width must be >= 1".into()));
        }
        Ok(())
    }
}
