use rayon::prelude::*;

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value while probing coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

const COORD_CHUNK: usize = 64;

/// Central differences of `loss` over `n` coordinates of a cloneable state.
///
/// `coord(state, i)` exposes coordinate `i`. Coordinates are probed in place,
/// in parallel chunks with one clone of `state` per chunk; each probe restores
/// the original value exactly, so the result matches a serial sweep bit for bit.
pub fn finite_diff_coords<S, C, L>(state: &S, n: usize, eps: f64, coord: C, loss: L) -> Result<Vec<f64>>
where
    S: Clone + Send + Sync,
    C: Fn(&mut S, usize) -> &mut f64 + Sync,
    L: Fn(&S) -> f64 + Sync,
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let starts: Vec<usize> = (0..n).step_by(COORD_CHUNK).collect();
    let chunks: Vec<Result<Vec<f64>>> = starts
        .into_par_iter()
        .map(|start| {
            let mut probe = state.clone();
            (start..n.min(start + COORD_CHUNK))
                .map(|i| {
                    let orig = *coord(&mut probe, i);
                    *coord(&mut probe, i) = orig + eps;
                    let up = loss(&probe);
                    *coord(&mut probe, i) = orig - eps;
                    let down = loss(&probe);
                    *coord(&mut probe, i) = orig;
                    if !up.is_finite() || !down.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite function value while probing coordinate {i}"
                        )));
                    }
                    Ok((up - down) / (2.0 * eps))
                })
                .collect()
        })
        .collect();
    let mut grad = Vec::with_capacity(n);
    for c in chunks {
        grad.extend(c?);
    }
    Ok(grad)
}

/// Elementwise `|a - n| / max(1, |a|, |n|)`, maximised over all entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng64;

    #[test]
    fn coordinate_sweep_matches_vector_sweep() {
        let mut rng = Rng64::new(4);
        let x: Vec<f64> = (0..150).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let f = |v: &[f64]| v.iter().enumerate().map(|(i, a)| (i as f64 + 1.0) * a.sin()).sum::<f64>();
        let whole = finite_diff_grad(f, &x, 1e-5).unwrap();
        let coords = finite_diff_coords(&x, x.len(), 1e-5, |s: &mut Vec<f64>, i| &mut s[i], |s: &Vec<f64>| f(s)).unwrap();
        assert_eq!(whole, coords);
    }

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_of_squares() {
        let mut rng = Rng64::new(2);
        let x: Vec<f64> = (0..10).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_eps_and_non_finite() {
        assert!(finite_diff_grad(|x| x[0], &[0.0], 0.0).is_err());
        let r = finite_diff_grad(|x| 1.0 / x[0], &[0.0], 1e-5);
        // 1/±eps is finite; use log to force a NaN on one side
        assert!(r.is_ok());
        let r = finite_diff_grad(|x| x[0].ln(), &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn relative_error_uses_unit_floor() {
        assert_eq!(max_rel_error(&[0.0], &[1e-5]), 1e-5);
        assert!((max_rel_error(&[100.0], &[101.0]) - 1.0 / 101.0).abs() < 1e-15);
    }
}
