use anyhow::{ensure, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use slrl_core::numerics::Matrix;

/// Projects rows onto their two leading principal axes.
///
/// Each axis is sign-fixed so its largest-magnitude loading is positive,
/// which makes the output a pure function of the input.
pub fn pca_2d(m: &Matrix) -> Result<Vec<[f64; 2]>> {
    let (n, d) = m.shape();
    ensure!(n >= 1 && d >= 2, "projection needs at least one row and two columns, got {n}x{d}");
    let mut x = DMatrix::from_row_slice(n, d, m.as_slice());
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&i| {
            let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            v.into_iter().map(|c| sign * c).collect()
        })
        .collect();

    Ok(x.row_iter()
        .map(|r| {
            let p = |a: &[f64]| r.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_planar_coordinates() {
        // Points on the x-y plane of R^3 with x spread wider than y.
        let rows: Vec<[f64; 3]> = (0..20)
            .map(|i| {
                let t = i as f64;
                [3.0 * (t * 0.7).sin(), (t * 1.3).cos(), 0.0]
            })
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let p = pca_2d(&m).unwrap();
        let var = |j: usize| p.iter().map(|r| r[j] * r[j]).sum::<f64>();
        let total: f64 = {
            let c = m.col_sums();
            m.row_iter()
                .map(|r| r.iter().zip(&c).map(|(x, s)| (x - s / 20.0).powi(2)).sum::<f64>())
                .sum()
        };
        assert!((var(0) + var(1) - total).abs() < 1e-9);
        assert!(var(0) >= var(1));
    }

    #[test]
    fn negated_input_negates_projection() {
        let m = Matrix::from_fn(15, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let a = pca_2d(&m).unwrap();
        let b = pca_2d(&m.scaled(-1.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] + y[0]).abs() < 1e-9 && (x[1] + y[1]).abs() < 1e-9);
        }
        assert_eq!(a, pca_2d(&m).unwrap());
    }

    #[test]
    fn rejects_single_column() {
        assert!(pca_2d(&Matrix::zeros(4, 1)).is_err());
    }
}
