//! Symmetric k-nearest-neighbor graph over the rows of a latent matrix.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, pairwise_sq_dists, Exec, Matrix};

/// Similarity used for edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum Kernel {
    /// `exp(-|hi - hj|^2 / (2 sigma^2))`. `None` picks sigma from the data.
    Gaussian { sigma: Option<f64> },
    /// `hj . hi`, possibly negative.
    Dot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    /// Resolved sigma for Gaussian graphs.
    sigma: Option<f64>,
    /// Per node, `(neighbor, weight)` sorted by neighbor id. No self-edges.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Builds a graph from an explicit undirected edge list. Used by tests
    /// and by callers that bring their own structure.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Parameter(format!("invalid edge ({i}, {j}) for {n} nodes")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
            list.dedup_by_key(|&mut (j, _)| j);
        }
        Ok(NeighborGraph {
            n,
            k: 0,
            sigma: None,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|p| self.adjacency[i][p].1)
    }

    /// Undirected edges as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Node `i` followed by its neighbors: the attention neighborhood.
    pub fn neighborhood(&self, i: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.degree(i) + 1);
        v.push(i);
        v.extend(self.adjacency[i].iter().map(|&(j, _)| j));
        v
    }

    /// One `i j weight` line per edge with `i < j`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, j, w) in self.edges() {
            let _ = writeln!(s, "{i} {j} {w}");
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k = {k} outside 1..={} for {n} points", n.saturating_sub(1))));
    }
    Ok(())
}

fn knn_from_dists(d2: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = d2.rows();
    (0..n)
        .map(|i| {
            let row = d2.row(i);
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            // total order on (distance, index) so ties go to the smaller index
            others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

/// The `k` nearest other rows of each row, nearest first.
pub fn knn_indices(h: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    knn_indices_with(h, k, Exec::Serial)
}

pub fn knn_indices_with(h: &Matrix, k: usize, exec: Exec) -> Result<Vec<Vec<usize>>> {
    check_k(h.rows(), k)?;
    Ok(knn_from_dists(&pairwise_sq_dists(h, exec), k))
}

/// Union edge set: `(i, j)` with `i < j` whenever either is in the other's kNN.
fn union_pairs(knn: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = knn
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn build_gaussian(h: &Matrix, k: usize, sigma: Option<f64>) -> Result<NeighborGraph> {
    build_gaussian_with(h, k, sigma, Exec::Serial)
}

pub fn build_gaussian_with(h: &Matrix, k: usize, sigma: Option<f64>, exec: Exec) -> Result<NeighborGraph> {
    check_k(h.rows(), k)?;
    if let Some(s) = sigma {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive, got {s}")));
        }
    }
    let d2 = pairwise_sq_dists(h, exec);
    let knn = knn_from_dists(&d2, k);
    let sigma = match sigma {
        Some(s) => s,
        None => {
            let dists: Vec<f64> = knn
                .iter()
                .enumerate()
                .flat_map(|(i, l)| l.iter().map(move |&j| (i, j)))
                .map(|(i, j)| d2[(i, j)].sqrt())
                .collect();
            let s = median(dists);
            if !(s > 0.0) {
                return Err(Error::Parameter(
                    "median neighbor distance is zero; pass an explicit sigma".into(),
                ));
            }
            s
        }
    };
    let denom = 2.0 * sigma * sigma;
    let edges: Vec<(usize, usize, f64)> = union_pairs(&knn)
        .into_iter()
        .map(|(i, j)| (i, j, (-d2[(i, j)] / denom).exp()))
        .collect();
    let mut g = NeighborGraph::from_edges(h.rows(), &edges)?;
    g.k = k;
    g.sigma = Some(sigma);
    Ok(g)
}

pub fn build_dot(h: &Matrix, k: usize) -> Result<NeighborGraph> {
    build_dot_with(h, k, Exec::Serial)
}

pub fn build_dot_with(h: &Matrix, k: usize, exec: Exec) -> Result<NeighborGraph> {
    let knn = knn_indices_with(h, k, exec)?;
    let edges: Vec<(usize, usize, f64)> = union_pairs(&knn)
        .into_iter()
        .map(|(i, j)| (i, j, dot(h.row(j), h.row(i))))
        .collect();
    let mut g = NeighborGraph::from_edges(h.rows(), &edges)?;
    g.k = k;
    Ok(g)
}

pub fn build(h: &Matrix, k: usize, kernel: Kernel, exec: Exec) -> Result<NeighborGraph> {
    match kernel {
        Kernel::Gaussian { sigma } => build_gaussian_with(h, k, sigma, exec),
        Kernel::Dot => build_dot_with(h, k, exec),
    }
}
