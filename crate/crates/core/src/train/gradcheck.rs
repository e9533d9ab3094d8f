use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::graph::{self, NeighborGraph};
use crate::numerics::{finite_diff_coords, max_rel_error, Exec, Matrix, Rng64};

use super::{joint_eval, joint_loss, resolve_clusters, resolve_kernel, Model, TrainConfig};

pub const GRADCHECK_EPS: f64 = 1e-5;
const MAX_SAMPLES: usize = 30;
/// Decoder pre-activations closer than this to zero get nudged.
const KINK_MARGIN: f64 = 1e-3;

/// Max relative gradient error per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub latent: f64,
    pub decoders: f64,
    pub gat: f64,
    pub centroids: f64,
    /// The loss evaluated twice at the check point; must be bit-identical.
    pub loss: f64,
    pub loss_repeat: f64,
}

impl GradcheckReport {
    pub fn groups(&self) -> [(&'static str, f64); 4] {
        [
            ("H", self.latent),
            ("decoders", self.decoders),
            ("gat", self.gat),
            ("centroids", self.centroids),
        ]
    }

    pub fn max_error(&self) -> f64 {
        self.groups().iter().map(|g| g.1).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_error() < tol && self.loss.to_bits() == self.loss_repeat.to_bits()
    }
}

fn push_decoders_clear_of_kinks(model: &mut Model) -> Result<()> {
    let h = model.latent.h.clone();
    for dec in &mut model.decoders {
        for _ in 0..50 {
            let mut pre = h.matmul_nt(&dec.w1)?;
            pre.add_row_vector(&dec.b1)?;
            let mut clean = true;
            for j in 0..dec.b1.len() {
                if (0..pre.rows()).any(|n| pre[(n, j)].abs() < KINK_MARGIN) {
                    dec.b1[j] += 3.0 * KINK_MARGIN;
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
    }
    Ok(())
}

fn nth_mut(slices: Vec<&mut [f64]>, mut i: usize) -> &mut f64 {
    for s in slices {
        if i < s.len() {
            return &mut s[i];
        }
        i -= s.len();
    }
    panic!("coordinate out of range");
}

fn concat(parts: Vec<&[f64]>) -> Vec<f64> {
    parts.concat()
}

/// Compares analytic gradients of the joint loss (graph and target frozen)
/// with central differences, group by group.
pub fn gradcheck(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<GradcheckReport> {
    if ds.n_samples() > MAX_SAMPLES {
        return Err(Error::Parameter(format!(
            "gradcheck is limited to {MAX_SAMPLES} samples, got {}",
            ds.n_samples()
        )));
    }
    cfg.validate()?;
    let c = resolve_clusters(ds, cfg)?;
    let mut model = Model::init(ds, cfg)?;
    // spread the latent rows so the attention and assignment terms are non-trivial
    let mut rng = Rng64::new(cfg.seed).fork(99);
    model.latent.h = Matrix::from_fn(ds.n_samples(), cfg.latent_dim, |_, _| rng.uniform(-1.0, 1.0));
    for dec in &mut model.decoders {
        dec.b1.iter_mut().for_each(|b| *b = rng.uniform(-0.2, 0.2));
    }
    push_decoders_clear_of_kinks(&mut model)?;

    let graph: NeighborGraph = graph::build(&model.latent.h, cfg.k, resolve_kernel(ds, cfg), Exec::Serial)?;
    let ht = model.gat.forward(&model.latent.h, &graph, Exec::Serial)?.output;
    let mut centroids = cluster::init_centroids(&ht, c, cfg.seed, cfg.kmeans_restarts)?;
    for v in centroids.as_mut_slice() {
        *v += rng.uniform(-0.1, 0.1);
    }
    let p = cluster::target_distribution(&cluster::soft_assign(&ht, &centroids)?)?;
    model.centroids = Some(centroids);

    let gamma = cfg.gamma;
    let eval = joint_eval(&model, ds, &graph, &p, gamma, Exec::Serial)?;
    let loss_at = |m: &Model| joint_loss(m, ds, &graph, &p, gamma, Exec::Serial).unwrap_or(f64::NAN);
    let loss = loss_at(&model);
    let loss_repeat = loss_at(&model);
    let check = |analytic: Vec<f64>, coord: &(dyn Fn(&mut Model, usize) -> &mut f64 + Sync)| -> Result<f64> {
        let numeric = finite_diff_coords(&model, analytic.len(), GRADCHECK_EPS, coord, loss_at)?;
        Ok(max_rel_error(&analytic, &numeric))
    };

    let latent = check(eval.grads.h.as_slice().to_vec(), &|m, i| &mut m.latent.h.as_mut_slice()[i])?;
    let decoders = check(
        concat(eval.grads.decoders.iter().flat_map(|d| d.slices()).collect()),
        &|m, i| nth_mut(m.decoders.iter_mut().flat_map(|d| d.slices_mut()).collect(), i),
    )?;
    let gat = check(concat(eval.grads.gat.slices()), &|m, i| nth_mut(m.gat.slices_mut(), i))?;
    let centroids = check(
        eval.grads.centroids.as_ref().expect("joint grads").as_slice().to_vec(),
        &|m, i| &mut m.centroids.as_mut().expect("set above").as_mut_slice()[i],
    )?;

    Ok(GradcheckReport {
        latent,
        decoders,
        gat,
        centroids,
        loss,
        loss_repeat,
    })
}
