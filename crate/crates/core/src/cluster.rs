//! Student-t soft assignment, sharpened target distribution, KL clustering
//! loss, and k-means centroid initialisation.

use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix, Rng64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia decrease falls below this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.row_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(data: &Matrix, c: usize, rng: &mut Rng64) -> Matrix {
    let n = data.rows();
    let mut centroids = Matrix::zeros(c, data.cols());
    centroids.row_mut(0).copy_from_slice(data.row(rng.index(n)));
    let mut d2: Vec<f64> = data.row_iter().map(|x| sq_dist(x, centroids.row(0))).collect();
    for j in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform(0.0, total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // floating-point leftovers must not land on a zero-weight point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.index(n)
        };
        centroids.row_mut(j).copy_from_slice(data.row(pick));
        for (i, x) in data.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, centroids.row(j)));
        }
    }
    centroids
}

fn lloyd(data: &Matrix, mut centroids: Matrix, cfg: &KMeansConfig) -> KMeansResult {
    let (n, f) = data.shape();
    let c = centroids.rows();
    let mut labels = vec![0; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..cfg.max_iter.max(1) {
        let mut dists = vec![0.0; n];
        let mut current = 0.0;
        for (i, x) in data.row_iter().enumerate() {
            let (j, d) = nearest(x, &centroids);
            labels[i] = j;
            dists[i] = d;
            current += d;
        }
        let converged = inertia.is_finite() && (inertia - current) <= cfg.tol * inertia.max(f64::MIN_POSITIVE);
        inertia = current;
        if converged {
            break;
        }
        let mut sums = Matrix::zeros(c, f);
        let mut counts = vec![0usize; c];
        for (i, x) in data.row_iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, &v) in sums.row_mut(labels[i]).iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..c {
            if counts[j] == 0 {
                // re-seed an empty cluster at the point worst served so far
                let far = (0..n).max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a))).unwrap_or(0);
                centroids.row_mut(j).copy_from_slice(data.row(far));
                dists[far] = 0.0;
            } else {
                let inv = 1.0 / counts[j] as f64;
                for (dst, &s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s * inv;
                }
            }
        }
    }
    // labels and inertia consistent with the returned centroids
    let mut total = 0.0;
    for (i, x) in data.row_iter().enumerate() {
        let (j, d) = nearest(x, &centroids);
        labels[i] = j;
        total += d;
    }
    KMeansResult {
        centroids,
        labels,
        inertia: total,
    }
}

/// Best-inertia k-means over `cfg.restarts` k-means++ seedings.
pub fn kmeans(data: &Matrix, c: usize, cfg: &KMeansConfig, rng: &Rng64) -> Result<KMeansResult> {
    if c < 2 || c > data.rows() {
        return Err(Error::Parameter(format!("cluster count {c} outside 2..={}", data.rows())));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut local = rng.fork(r as u64);
        let init = plus_plus(data, c, &mut local);
        let res = lloyd(data, init, cfg);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Centroids for the soft assignment, from k-means on `ht`.
pub fn init_centroids(ht: &Matrix, c: usize, seed: u64, restarts: usize) -> Result<Matrix> {
    let cfg = KMeansConfig {
        restarts,
        ..KMeansConfig::default()
    };
    Ok(kmeans(ht, c, &cfg, &Rng64::new(seed))?.centroids)
}

fn check_dims(ht: &Matrix, centroids: &Matrix) -> Result<()> {
    if ht.cols() != centroids.cols() {
        return Err(Error::Shape(format!(
            "features have {} dims, centroids {}",
            ht.cols(),
            centroids.cols()
        )));
    }
    Ok(())
}

/// Unnormalised kernel `(1 + |h_i - mu_j|^2)^-1`.
fn kernel(ht: &Matrix, centroids: &Matrix) -> Matrix {
    Matrix::from_fn(ht.rows(), centroids.rows(), |i, j| 1.0 / (1.0 + sq_dist(ht.row(i), centroids.row(j))))
}

fn normalize_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

/// `q_ij`: Student-t similarity of sample `i` to centroid `j`, rows normalised.
pub fn soft_assign(ht: &Matrix, centroids: &Matrix) -> Result<Matrix> {
    check_dims(ht, centroids)?;
    let mut q = kernel(ht, centroids);
    normalize_rows(&mut q);
    Ok(q)
}

/// `p_ij ∝ q_ij^2 / f_j` with cluster frequency `f_j = sum_i q_ij`.
pub fn target_distribution(q: &Matrix) -> Result<Matrix> {
    let freq = q.col_sums();
    if let Some(j) = freq.iter().position(|&f| !(f > 0.0)) {
        return Err(Error::DegenerateCluster(j));
    }
    let mut p = Matrix::from_fn(q.rows(), q.cols(), |i, j| q[(i, j)] * q[(i, j)] / freq[j]);
    normalize_rows(&mut p);
    Ok(p)
}

/// `KL(P || Q) = sum_ij p_ij ln(p_ij / q_ij)` with `0 ln 0 = 0`.
pub fn kl_loss(p: &Matrix, q: &Matrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::Shape(format!("P {:?} vs Q {:?}", p.shape(), q.shape())));
    }
    let mut total = 0.0;
    for i in 0..p.rows() {
        let mut row = 0.0;
        for j in 0..p.cols() {
            let (pij, qij) = (p[(i, j)], q[(i, j)]);
            if pij > 0.0 {
                if !(qij > 0.0) {
                    return Err(Error::InfiniteDivergence { row: i, col: j });
                }
                row += pij * (pij / qij).ln();
            }
        }
        // each row is a divergence between distributions; negatives are rounding
        total += row.max(0.0);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGrads {
    pub h: Matrix,
    pub centroids: Matrix,
}

/// Gradients of `kl_loss(P, soft_assign(ht, centroids))` with `P` held fixed.
///
/// With `t_ij = (1 + d_ij)^-1` and rows of `P` summing to one,
/// `dL/dh_i = 2 sum_j t_ij (p_ij - q_ij)(h_i - mu_j)` and
/// `dL/dmu_j = -2 sum_i t_ij (p_ij - q_ij)(h_i - mu_j)`.
pub fn cluster_grads(ht: &Matrix, centroids: &Matrix, p: &Matrix) -> Result<ClusterGrads> {
    check_dims(ht, centroids)?;
    if p.shape() != (ht.rows(), centroids.rows()) {
        return Err(Error::Shape(format!(
            "P is {:?}, expected {}x{}",
            p.shape(),
            ht.rows(),
            centroids.rows()
        )));
    }
    let t = kernel(ht, centroids);
    let mut q = t.clone();
    normalize_rows(&mut q);
    let mut dh = Matrix::zeros(ht.rows(), ht.cols());
    let mut dmu = Matrix::zeros(centroids.rows(), centroids.cols());
    for i in 0..ht.rows() {
        let p_mass: f64 = p.row(i).iter().sum();
        for j in 0..centroids.rows() {
            // general form keeps the gradient exact when a P row does not sum to 1
            let coef = 2.0 * t[(i, j)] * (p[(i, j)] - p_mass * q[(i, j)]);
            if coef == 0.0 {
                continue;
            }
            let hi = ht.row(i);
            let mu = centroids.row(j);
            for c in 0..ht.cols() {
                let diff = coef * (hi[c] - mu[c]);
                dh[(i, c)] += diff;
                dmu[(j, c)] -= diff;
            }
        }
    }
    Ok(ClusterGrads { h: dh, centroids: dmu })
}

/// Largest `|row sum - 1|` of a row-stochastic matrix.
pub fn max_row_sum_error(m: &Matrix) -> f64 {
    m.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

/// Hard labels by row-wise argmax (first maximum wins).
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.row_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}
