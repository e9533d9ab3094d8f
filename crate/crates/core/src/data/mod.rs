//! Multi-view datasets: representation, on-disk format, preprocessing,
//! synthetic generation and train/test splitting.

mod io;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng64};

pub use io::{load_dataset, read_labels, read_matrix, save_dataset, write_labels, write_matrix, MatrixFormat};
pub use synth::{synth_multiview, SynthSpec};

/// How a view's features are distributed; selects the graph kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    #[default]
    Continuous,
    Discrete,
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewKind::Continuous => "continuous",
            ViewKind::Discrete => "discrete",
        })
    }
}

impl FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(ViewKind::Continuous),
            "discrete" => Ok(ViewKind::Discrete),
            other => Err(Error::Parameter(format!("unknown view kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub kind: ViewKind,
    pub data: Matrix,
}

/// Several feature matrices over one shared sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<View>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<View>, labels: Option<Vec<usize>>) -> Result<Self> {
        let Some(first) = views.first() else {
            return Err(Error::Parameter("dataset needs at least one view".into()));
        };
        let n = first.data.rows();
        if n == 0 {
            return Err(Error::Parameter("dataset needs at least one sample".into()));
        }
        for v in &views {
            if v.data.rows() != n {
                return Err(Error::Shape(format!(
                    "view {:?} has {} rows, expected {n}",
                    v.name,
                    v.data.rows()
                )));
            }
            if v.data.cols() == 0 {
                return Err(Error::Shape(format!("view {:?} has no features", v.name)));
            }
            if !v.data.is_finite() {
                return Err(Error::Numeric(format!("view {:?} has non-finite entries", v.name)));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(MultiViewDataset { views, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].data.rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v].data
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.data.cols()).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct ground-truth labels, if labels exist.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut u = l.clone();
            u.sort_unstable();
            u.dedup();
            u.len()
        })
    }

    /// True when more views are discrete than continuous.
    pub fn mostly_discrete(&self) -> bool {
        let d = self.views.iter().filter(|v| v.kind == ViewKind::Discrete).count();
        2 * d > self.views.len()
    }

    /// All views side by side, N x sum(d_v).
    pub fn concatenated(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.views.iter().map(|v| &v.data).collect();
        Matrix::hcat(&parts).expect("views share a row count")
    }

    /// Dataset restricted to `idx` (in that order) across every view and the labels.
    pub fn select(&self, idx: &[usize]) -> Result<MultiViewDataset> {
        let views = self
            .views
            .iter()
            .map(|v| View {
                name: v.name.clone(),
                kind: v.kind,
                data: v.data.select_rows(idx),
            })
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        MultiViewDataset::new(views, labels)
    }
}

/// Min-max scales every feature column to `[0, 1]`; constant columns become 0.
pub fn normalize(ds: &MultiViewDataset) -> MultiViewDataset {
    let views = ds
        .views
        .iter()
        .map(|v| {
            let m = &v.data;
            let mut lo = vec![f64::INFINITY; m.cols()];
            let mut hi = vec![f64::NEG_INFINITY; m.cols()];
            for row in m.row_iter() {
                for (c, &x) in row.iter().enumerate() {
                    lo[c] = lo[c].min(x);
                    hi[c] = hi[c].max(x);
                }
            }
            let data = Matrix::from_fn(m.rows(), m.cols(), |r, c| {
                let range = hi[c] - lo[c];
                if range > 0.0 {
                    (m[(r, c)] - lo[c]) / range
                } else {
                    0.0
                }
            });
            View {
                name: v.name.clone(),
                kind: v.kind,
                data,
            }
        })
        .collect();
    MultiViewDataset {
        views,
        labels: ds.labels.clone(),
    }
}

/// Random partition of `0..n` into sorted index sets of sizes
/// `round(fraction * n)` and the remainder.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("split fraction {fraction} not in (0, 1)")));
    }
    let first = (fraction * n as f64).round() as usize;
    if first == 0 || first >= n {
        return Err(Error::Parameter(format!(
            "split of {n} samples at {fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng64::new(seed).shuffle(&mut idx);
    let mut a = idx[..first].to_vec();
    let mut b = idx[first..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

pub fn split(
    ds: &MultiViewDataset,
    fraction: f64,
    seed: u64,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    let (a, b) = split_indices(ds.n_samples(), fraction, seed)?;
    Ok((ds.select(&a)?, ds.select(&b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(rows: &[[f64; 1]]) -> MultiViewDataset {
        let view = View {
            name: "v".into(),
            kind: ViewKind::Continuous,
            data: Matrix::from_rows(rows).unwrap(),
        };
        MultiViewDataset::new(vec![view], None).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let ds = normalize(&single(&[[0.0], [5.0], [10.0]]));
        assert_eq!(ds.view(0).as_slice(), &[0.0, 0.5, 1.0]);
        let ds = normalize(&single(&[[3.0], [3.0], [3.0]]));
        assert_eq!(ds.view(0).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let a = View {
            name: "a".into(),
            kind: ViewKind::Continuous,
            data: Matrix::zeros(10, 2),
        };
        let b = View {
            name: "b".into(),
            kind: ViewKind::Continuous,
            data: Matrix::zeros(9, 2),
        };
        assert!(MultiViewDataset::new(vec![a, b], None).is_err());
    }

    #[test]
    fn split_sizes() {
        let (a, b) = split_indices(10, 0.8, 1).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert!(split_indices(5, 0.99, 1).is_err());
        assert!(split_indices(5, 0.0, 1).is_err());
        assert_eq!(split_indices(10, 0.8, 4).unwrap(), split_indices(10, 0.8, 4).unwrap());
    }

    #[test]
    fn split_keeps_views_aligned() {
        let spec = SynthSpec {
            clusters: 2,
            per_cluster: 5,
            view_dims: vec![3, 4],
            noise: 0.1,
            seed: 3,
        };
        let ds = synth_multiview(&spec).unwrap();
        let (ia, _) = split_indices(10, 0.8, 2).unwrap();
        let (a, _) = split(&ds, 0.8, 2).unwrap();
        for (k, &i) in ia.iter().enumerate() {
            assert_eq!(a.view(0).row(k), ds.view(0).row(i));
            assert_eq!(a.view(1).row(k), ds.view(1).row(i));
            assert_eq!(a.labels().unwrap()[k], ds.labels().unwrap()[i]);
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_bounded(vals in proptest::collection::vec(-50.0f64..50.0, 3..30)) {
            let rows: Vec<[f64; 1]> = vals.iter().map(|&v| [v]).collect();
            let once = normalize(&single(&rows));
            let twice = normalize(&once);
            prop_assert_eq!(once.view(0), twice.view(0));
            prop_assert!(once.view(0).as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn split_parts_reassemble(n in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok((a, b)) = split_indices(n, frac, seed) {
                let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
