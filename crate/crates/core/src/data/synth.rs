use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, Rng64};

use super::{MultiViewDataset, View, ViewKind};

/// Minimum dimension of the hidden space the cluster centers live in.
pub const CENTER_DIM: usize = 4;
/// Distance of every center from the origin; centers are mutually orthogonal.
pub const CENTER_SCALE: f64 = 0.5;
/// Spread along each cluster's own axis, in units of `noise`.
pub const ELONGATION: f64 = 2.0;

/// Parameters of the synthetic multi-view generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub view_dims: Vec<usize>,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_samples(&self) -> usize {
        self.clusters * self.per_cluster
    }
}

/// `rows` random orthonormal vectors of length `dim` (`rows <= dim`).
fn orthonormal_rows(rows: usize, dim: usize, rng: &mut Rng64) -> Matrix {
    let mut m = Matrix::from_fn(rows, dim, |_, _| rng.normal());
    for r in 0..rows {
        for p in 0..r {
            let proj = dot(m.row(r), m.row(p));
            let prev = m.row(p).to_vec();
            m.row_mut(r).iter_mut().zip(&prev).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = dot(m.row(r), m.row(r)).sqrt();
        m.row_mut(r).iter_mut().for_each(|x| *x /= norm);
    }
    m
}

/// Elongated clusters observed through one random linear map per view.
///
/// Cluster centers are orthogonal in a hidden space of dimension
/// `max(CENTER_DIM, clusters)`, so all pairs are equally far apart. Each
/// sample is its center plus `noise * ELONGATION * t` along a per-cluster
/// random axis (`t` standard normal). A sample's view-`v` features are
/// `M_v z + noise * e` with `M_v` drawn once per view and `e` standard
/// normal. Sample order is shuffled; labels record the generating cluster.
pub fn synth_multiview(spec: &SynthSpec) -> Result<MultiViewDataset> {
    if spec.clusters < 2 || spec.per_cluster < 2 {
        return Err(Error::Parameter("synthetic data needs >= 2 clusters of >= 2 samples".into()));
    }
    if spec.view_dims.is_empty() || spec.view_dims.iter().any(|&d| d < 2) {
        return Err(Error::Parameter("every synthetic view needs dimension >= 2".into()));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::Parameter(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let dim = CENTER_DIM.max(spec.clusters);
    let root = Rng64::new(spec.seed);
    let mut rng = root.fork(0);
    let centers = orthonormal_rows(spec.clusters, dim, &mut rng).scaled(CENTER_SCALE);
    let axes = orthonormal_rows(spec.clusters, dim, &mut rng);

    let n = spec.n_samples();
    let mut labels: Vec<usize> = (0..n).map(|i| i / spec.per_cluster).collect();
    root.fork(1).shuffle(&mut labels);
    let mut rng = root.fork(2);
    let spread = spec.noise * ELONGATION;
    let mut hidden = Matrix::zeros(n, dim);
    for (i, &c) in labels.iter().enumerate() {
        let t = spread * rng.normal();
        for (k, z) in hidden.row_mut(i).iter_mut().enumerate() {
            *z = centers[(c, k)] + t * axes[(c, k)];
        }
    }

    let mut views = Vec::with_capacity(spec.view_dims.len());
    for (v, &d) in spec.view_dims.iter().enumerate() {
        let mut rng = root.fork(10 + v as u64);
        let scale = 1.0 / (dim as f64).sqrt();
        let map = Matrix::from_fn(d, dim, |_, _| scale * rng.normal());
        let clean = hidden.matmul_nt(&map)?;
        let data = Matrix::from_fn(n, d, |i, c| clean[(i, c)] + spec.noise * rng.normal());
        views.push(View {
            name: format!("view{v}"),
            kind: ViewKind::Continuous,
            data,
        });
    }
    MultiViewDataset::new(views, Some(labels))
}
