//! Joint optimisation: reconstruction pretraining, then per-epoch graph
//! rebuild, attention refinement, target refresh and one full-batch gradient
//! step on `L = L_r + gamma * L_c`.

mod checkpoint;
mod config;
mod gradcheck;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::cluster::{self, argmax_rows, max_row_sum_error};
use crate::data::MultiViewDataset;
use crate::encoder::{self, Decoder, LatentState};
use crate::error::{Error, Result};
use crate::gat::{GatStack, StackForward};
use crate::graph::{self, Kernel, NeighborGraph};
use crate::metrics::{self, MetricsReport};
use crate::numerics::{Exec, Matrix, Rng64};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_EPS};

/// `L_r + gamma * L_c`.
pub fn total_loss(recon: f64, cluster: f64, gamma: f64) -> f64 {
    recon + gamma * cluster
}

/// All trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub latent: LatentState,
    pub decoders: Vec<Decoder>,
    pub gat: GatStack,
    /// Set once the joint phase starts.
    pub centroids: Option<Matrix>,
}

impl Model {
    pub fn init(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<Model> {
        let root = Rng64::new(cfg.seed);
        let latent = encoder::init_latent(ds.n_samples(), cfg.latent_dim, &mut root.fork(1))?;
        let mut rng = root.fork(2);
        let decoders = ds
            .view_dims()
            .into_iter()
            .map(|d| {
                let hidden = cfg.hidden.unwrap_or_else(|| encoder::default_hidden(cfg.latent_dim, d));
                Decoder::init(cfg.latent_dim, hidden, d, &mut rng)
            })
            .collect();
        let gat = GatStack::init(
            cfg.gat_layers,
            cfg.heads,
            cfg.latent_dim,
            cfg.activation,
            cfg.combine,
            &mut root.fork(3),
        )?;
        Ok(Model {
            latent,
            decoders,
            gat,
            centroids: None,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.latent.h.is_finite()
            && self.decoders.iter().all(Decoder::is_finite)
            && self.gat.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
            && self.centroids.as_ref().is_none_or(Matrix::is_finite)
    }
}

/// Gradients matching `Model`'s layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub h: Matrix,
    pub decoders: Vec<Decoder>,
    pub gat: GatStack,
    pub centroids: Option<Matrix>,
}

impl Model {
    /// One descent step. Rows of `H` are per-sample parameters and step on
    /// their own sample's objective, i.e. `N` times the mean-loss gradient.
    fn apply(&mut self, g: &Grads, lr: f64) -> Result<()> {
        let n = self.latent.n() as f64;
        self.latent.h.axpy(-lr * n, &g.h)?;
        for (d, gd) in self.decoders.iter_mut().zip(&g.decoders) {
            d.axpy(-lr, gd);
        }
        self.gat.axpy(-lr, &g.gat);
        if let (Some(c), Some(gc)) = (self.centroids.as_mut(), g.centroids.as_ref()) {
            c.axpy(-lr, gc)?;
        }
        Ok(())
    }
}

/// Loss terms and the pieces of the forward pass worth inspecting.
pub struct JointEval {
    pub recon: f64,
    pub cluster: f64,
    pub total: f64,
    pub grads: Grads,
    pub q: Matrix,
    pub forward: StackForward,
}

/// `L_r` plus `gamma` times the per-sample mean KL, with graph and `P` fixed.
pub fn joint_eval(
    model: &Model,
    ds: &MultiViewDataset,
    graph: &NeighborGraph,
    p: &Matrix,
    gamma: f64,
    exec: Exec,
) -> Result<JointEval> {
    let centroids = model
        .centroids
        .as_ref()
        .ok_or_else(|| Error::Parameter("joint loss needs centroids".into()))?;
    let (recon, rg) = encoder::reconstruction(&model.latent.h, &model.decoders, ds, exec)?;
    let forward = model.gat.forward(&model.latent.h, graph, exec)?;
    let ht = &forward.output;
    let q = cluster::soft_assign(ht, centroids)?;
    let n = ht.rows() as f64;
    let cluster_loss = cluster::kl_loss(p, &q)? / n;
    let mut cg = cluster::cluster_grads(ht, centroids, p)?;
    let w = gamma / n;
    cg.h.scale(w);
    cg.centroids.scale(w);
    let (gat_grads, mut dh) = model.gat.backward(&forward, &cg.h, exec)?;
    dh.add_assign(&rg.h)?;
    Ok(JointEval {
        recon,
        cluster: cluster_loss,
        total: total_loss(recon, cluster_loss, gamma),
        grads: Grads {
            h: dh,
            decoders: rg.decoders,
            gat: gat_grads,
            centroids: Some(cg.centroids),
        },
        q,
        forward,
    })
}

/// The value of `joint_eval(..).total` without the backward pass.
pub fn joint_loss(
    model: &Model,
    ds: &MultiViewDataset,
    graph: &NeighborGraph,
    p: &Matrix,
    gamma: f64,
    exec: Exec,
) -> Result<f64> {
    let centroids = model
        .centroids
        .as_ref()
        .ok_or_else(|| Error::Parameter("joint loss needs centroids".into()))?;
    let recon = encoder::reconstruction_loss(&model.latent, &model.decoders, ds)?;
    let ht = model.gat.forward(&model.latent.h, graph, exec)?.output;
    let q = cluster::soft_assign(&ht, centroids)?;
    let cluster_loss = cluster::kl_loss(p, &q)? / ht.rows() as f64;
    Ok(total_loss(recon, cluster_loss, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Joint,
}

/// Losses and invariant checks for one epoch, measured before its step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: usize,
    pub recon: f64,
    pub cluster: f64,
    pub total: f64,
    pub metrics: Option<MetricsReport>,
    /// Largest `|row sum - 1|` over Q, P and every attention row (joint phase).
    pub q_row_error: f64,
    pub p_row_error: f64,
    pub alpha_row_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Joint epoch at which early stopping fired.
    pub stopped_at: Option<usize>,
    pub model: Model,
    pub ht: Matrix,
    pub q: Matrix,
    pub predictions: Vec<usize>,
    pub metrics: Option<MetricsReport>,
    pub clusters: usize,
}

impl TrainReport {
    pub fn joint(&self) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(|e| e.phase == Phase::Joint)
    }

    pub fn pretrain(&self) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(|e| e.phase == Phase::Pretrain)
    }

    /// Loss log with one row per epoch.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("phase,epoch,L_r,L_c,L,ACC,NMI,F,ARI\n");
        for e in &self.epochs {
            let phase = match e.phase {
                Phase::Pretrain => "pretrain",
                Phase::Joint => "joint",
            };
            let m = e
                .metrics
                .map(|m| format!("{},{},{},{}", m.acc, m.nmi, m.f_score, m.ari))
                .unwrap_or_else(|| ",,,".into());
            s.push_str(&format!("{phase},{},{},{},{},{m}\n", e.epoch, e.recon, e.cluster, e.total));
        }
        s
    }
}

fn resolve_kernel(ds: &MultiViewDataset, cfg: &TrainConfig) -> Kernel {
    match cfg.kernel {
        Some(Kernel::Gaussian { sigma }) => Kernel::Gaussian { sigma: sigma.or(cfg.sigma) },
        Some(Kernel::Dot) => Kernel::Dot,
        None if ds.mostly_discrete() => Kernel::Dot,
        None => Kernel::Gaussian { sigma: cfg.sigma },
    }
}

fn resolve_clusters(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<usize> {
    let c = match (cfg.clusters, ds.n_classes()) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::Parameter("unlabelled data needs an explicit cluster count".into()));
        }
    };
    if c < 2 || c > ds.n_samples() {
        return Err(Error::Parameter(format!("cluster count {c} outside 2..={}", ds.n_samples())));
    }
    Ok(c)
}

/// Target distribution, re-seeding centroids that lose all assignment mass.
fn refresh_target(ht: &Matrix, centroids: &mut Matrix, q: &mut Matrix) -> Result<Matrix> {
    for _ in 0..centroids.rows() {
        match cluster::target_distribution(q) {
            Ok(p) => return Ok(p),
            Err(Error::DegenerateCluster(j)) => {
                warn!("cluster {j} is empty; re-seeding its centroid");
                // the sample least attached to any centroid
                let worst = (0..q.rows())
                    .min_by(|&a, &b| {
                        let ma = q.row(a).iter().copied().fold(0.0, f64::max);
                        let mb = q.row(b).iter().copied().fold(0.0, f64::max);
                        ma.total_cmp(&mb)
                    })
                    .unwrap_or(0);
                centroids.row_mut(j).copy_from_slice(ht.row(worst));
                *q = cluster::soft_assign(ht, centroids)?;
            }
            Err(e) => return Err(e),
        }
    }
    cluster::target_distribution(q)
}

fn score(pred: &[usize], ds: &MultiViewDataset) -> Result<Option<MetricsReport>> {
    match ds.labels() {
        Some(l) if l.len() >= 2 => Ok(Some(metrics::evaluate(pred, l)?)),
        _ => Ok(None),
    }
}

fn check_finite(v: f64, what: &str, epoch: usize) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Numeric(format!("{what} became {v} at epoch {epoch}")));
    }
    Ok(())
}

/// Runs the full pipeline on `ds`.
pub fn train(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.k >= ds.n_samples() {
        return Err(Error::Parameter(format!("k = {} needs more than {} samples", cfg.k, ds.n_samples())));
    }
    let c = resolve_clusters(ds, cfg)?;
    let kernel = resolve_kernel(ds, cfg);
    let exec = if cfg.deterministic { Exec::Serial } else { Exec::Parallel };
    let lr = cfg.learning_rate;
    let mut model = Model::init(ds, cfg)?;
    let mut epochs = Vec::with_capacity(cfg.pretrain_epochs + cfg.epochs);

    for e in 1..=cfg.pretrain_epochs {
        let (recon, rg) = encoder::reconstruction(&model.latent.h, &model.decoders, ds, exec)?;
        check_finite(recon, "reconstruction loss", e)?;
        epochs.push(EpochRecord {
            phase: Phase::Pretrain,
            epoch: e,
            recon,
            cluster: 0.0,
            total: recon,
            metrics: None,
            q_row_error: 0.0,
            p_row_error: 0.0,
            alpha_row_error: 0.0,
        });
        let grads = Grads {
            h: rg.h,
            decoders: rg.decoders,
            gat: model.gat.zeros_like(),
            centroids: None,
        };
        model.apply(&grads, lr)?;
    }

    let mut graph = graph::build(&model.latent.h, cfg.k, kernel, exec)?;
    let ht0 = model.gat.forward(&model.latent.h, &graph, exec)?.output;
    model.centroids = Some(cluster::init_centroids(&ht0, c, cfg.seed ^ 0x5eed, cfg.kmeans_restarts)?);
    let mut p: Option<Matrix> = None;
    let mut stopped_at = None;
    let mut prev_total: Option<f64> = None;
    let mut calm = 0;

    for e in 1..=cfg.epochs {
        if (e - 1) % cfg.graph_rebuild_every == 0 && e > 1 {
            graph = graph::build(&model.latent.h, cfg.k, kernel, exec)?;
        }
        if p.is_none() || (e - 1) % cfg.p_refresh_every == 0 {
            let ht = model.gat.forward(&model.latent.h, &graph, exec)?.output;
            let centroids = model.centroids.as_mut().expect("centroids set");
            let mut q = cluster::soft_assign(&ht, centroids)?;
            p = Some(refresh_target(&ht, centroids, &mut q)?);
        }
        let target = p.as_ref().expect("target set");
        let eval = joint_eval(&model, ds, &graph, target, cfg.gamma, exec)?;
        check_finite(eval.total, "total loss", e)?;
        let metrics = if cfg.track_metrics {
            score(&final_predictions(&eval, cfg, c)?, ds)?
        } else {
            None
        };
        epochs.push(EpochRecord {
            phase: Phase::Joint,
            epoch: e,
            recon: eval.recon,
            cluster: eval.cluster,
            total: eval.total,
            metrics,
            q_row_error: max_row_sum_error(&eval.q),
            p_row_error: max_row_sum_error(target),
            alpha_row_error: eval.forward.max_attention_row_error(),
        });
        debug!("epoch {e}: L_r {:.6} L_c {:.6} L {:.6}", eval.recon, eval.cluster, eval.total);
        model.apply(&eval.grads, lr)?;
        if !model.is_finite() {
            return Err(Error::Numeric(format!("parameters became non-finite at epoch {e}")));
        }

        if let Some(prev) = prev_total {
            let rel = (prev - eval.total).abs() / eval.total.abs().max(f64::MIN_POSITIVE);
            calm = if rel < cfg.early_stop_tol { calm + 1 } else { 0 };
            if calm >= cfg.early_stop_patience {
                stopped_at = Some(e);
                break;
            }
        }
        prev_total = Some(eval.total);
    }

    // final state after the last step
    let ht = model.gat.forward(&model.latent.h, &graph, exec)?.output;
    let q = cluster::soft_assign(&ht, model.centroids.as_ref().expect("centroids set"))?;
    let predictions = if cfg.gamma > 0.0 {
        argmax_rows(&q)
    } else {
        kmeans_labels(&ht, c, cfg)?
    };
    let metrics = score(&predictions, ds)?;
    Ok(TrainReport {
        config: cfg.clone(),
        epochs,
        stopped_at,
        model,
        ht,
        q,
        predictions,
        metrics,
        clusters: c,
    })
}

fn kmeans_labels(ht: &Matrix, c: usize, cfg: &TrainConfig) -> Result<Vec<usize>> {
    let km = cluster::KMeansConfig {
        restarts: cfg.kmeans_restarts,
        ..Default::default()
    };
    Ok(cluster::kmeans(ht, c, &km, &Rng64::new(cfg.seed ^ 0x5eed))?.labels)
}

fn final_predictions(eval: &JointEval, cfg: &TrainConfig, c: usize) -> Result<Vec<usize>> {
    if cfg.gamma > 0.0 {
        Ok(argmax_rows(&eval.q))
    } else {
        kmeans_labels(&eval.forward.output, c, cfg)
    }
}

/// Network-structure ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    /// Reconstruction only, k-means on `H`.
    LatentOnly,
    /// Reconstruction plus attention refinement, k-means on `H~`.
    WithAttention,
    /// The full joint objective.
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::LatentOnly, AblationMode::WithAttention, AblationMode::Full];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::LatentOnly => "(a) X-H",
            AblationMode::WithAttention => "(b) X-H-H~",
            AblationMode::Full => "(c) X-H-H~-P",
        }
    }

    /// The training configuration realising this mode.
    pub fn config(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            AblationMode::LatentOnly => {
                cfg.gamma = 0.0;
                cfg.gat_layers = 0;
            }
            AblationMode::WithAttention => {
                cfg.gamma = 0.0;
                cfg.gat_layers = cfg.gat_layers.max(1);
            }
            AblationMode::Full => {}
        }
        cfg
    }
}

pub fn ablate(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<Vec<(AblationMode, TrainReport)>> {
    AblationMode::ALL
        .iter()
        .map(|&m| Ok((m, train(ds, &m.config(cfg))?)))
        .collect()
}
