//! Free common latent matrix `H` and per-view reconstruction networks.
//!
//! The reconstruction loss is `(1/N) sum_n sum_v |f_v(h_n) - x_n^(v)|^2` with
//! `f_v` an affine-ReLU-affine decoder.

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::numerics::{Exec, Matrix, Rng64};

/// Half-width of the uniform range `H` is initialised from.
pub const LATENT_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub h: Matrix,
}

impl LatentState {
    pub fn dim(&self) -> usize {
        self.h.cols()
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }
}

/// `H` with entries i.i.d. uniform on `[-0.05, 0.05]`.
pub fn init_latent(n: usize, f: usize, rng: &mut Rng64) -> Result<LatentState> {
    if n == 0 || f < 2 {
        return Err(Error::Parameter(format!("latent state needs n >= 1 and F >= 2, got {n}x{f}")));
    }
    let h = Matrix::from_fn(n, f, |_, _| rng.uniform(-LATENT_INIT_RANGE, LATENT_INIT_RANGE));
    Ok(LatentState { h })
}

/// Reconstruction network for one view. Weights are stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

pub fn default_hidden(latent_dim: usize, view_dim: usize) -> usize {
    (2 * latent_dim).max(view_dim)
}

fn glorot(out: usize, inp: usize, rng: &mut Rng64) -> Matrix {
    let s = (6.0 / (out + inp) as f64).sqrt();
    Matrix::from_fn(out, inp, |_, _| rng.uniform(-s, s))
}

impl Decoder {
    /// Glorot-uniform weights and zero biases.
    pub fn init(latent_dim: usize, hidden: usize, view_dim: usize, rng: &mut Rng64) -> Self {
        Decoder {
            w1: glorot(hidden, latent_dim, rng),
            b1: vec![0.0; hidden],
            w2: glorot(view_dim, hidden, rng),
            b2: vec![0.0; view_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Decoder {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    fn check(&self) -> Result<()> {
        if self.b1.len() != self.w1.rows() || self.w2.cols() != self.w1.rows() || self.b2.len() != self.w2.rows() {
            return Err(Error::Shape(format!(
                "decoder layers do not chain: w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                self.w1.shape(),
                self.b1.len(),
                self.w2.shape(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    fn forward(&self, h: &Matrix, exec: Exec) -> Result<ForwardCache> {
        self.check()?;
        if h.cols() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "decoder expects latent dim {}, got {}",
                self.latent_dim(),
                h.cols()
            )));
        }
        let mut pre = h.matmul_nt_with(&self.w1, exec)?;
        pre.add_row_vector(&self.b1)?;
        let act = pre.map(|v| v.max(0.0));
        let mut out = act.matmul_nt_with(&self.w2, exec)?;
        out.add_row_vector(&self.b2)?;
        Ok(ForwardCache { pre, act, out })
    }

    /// Parameter slices in a fixed order: w1, b1, w2, b2.
    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    /// `self += alpha * other`; shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &Decoder) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            assert_eq!(dst.len(), src.len(), "decoder shape mismatch");
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

struct ForwardCache {
    pre: Matrix,
    act: Matrix,
    out: Matrix,
}

/// `f_v(H)`: affine, ReLU, affine.
pub fn decode(decoder: &Decoder, h: &Matrix) -> Result<Matrix> {
    Ok(decoder.forward(h, Exec::Serial)?.out)
}

pub fn init_decoders(ds: &MultiViewDataset, latent_dim: usize, rng: &mut Rng64) -> Vec<Decoder> {
    ds.view_dims()
        .into_iter()
        .map(|d| Decoder::init(latent_dim, default_hidden(latent_dim, d), d, rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconGrads {
    pub h: Matrix,
    pub decoders: Vec<Decoder>,
}

fn check_inputs(h: &Matrix, decoders: &[Decoder], ds: &MultiViewDataset) -> Result<()> {
    if ds.n_samples() != h.rows() {
        return Err(Error::Shape(format!("{} latent rows for {} samples", h.rows(), ds.n_samples())));
    }
    if decoders.len() != ds.n_views() {
        return Err(Error::Shape(format!("{} decoders for {} views", decoders.len(), ds.n_views())));
    }
    for (v, d) in decoders.iter().enumerate() {
        if d.output_dim() != ds.view(v).cols() {
            return Err(Error::Shape(format!(
                "decoder {v} outputs {} features, view has {}",
                d.output_dim(),
                ds.view(v).cols()
            )));
        }
    }
    Ok(())
}

pub fn reconstruction_loss(state: &LatentState, decoders: &[Decoder], ds: &MultiViewDataset) -> Result<f64> {
    check_inputs(&state.h, decoders, ds)?;
    let mut total = 0.0;
    for (v, dec) in decoders.iter().enumerate() {
        let out = decode(dec, &state.h)?;
        total += out.sub(ds.view(v))?.sum_sq();
    }
    Ok(total / state.n() as f64)
}

/// Per-sample terms `sum_v |f_v(h_n) - x_n^(v)|^2` (not divided by N).
pub fn per_sample_losses(state: &LatentState, decoders: &[Decoder], ds: &MultiViewDataset) -> Result<Vec<f64>> {
    check_inputs(&state.h, decoders, ds)?;
    let mut per = vec![0.0; state.n()];
    for (v, dec) in decoders.iter().enumerate() {
        let out = decode(dec, &state.h)?;
        let res = out.sub(ds.view(v))?;
        for (p, row) in per.iter_mut().zip(res.row_iter()) {
            *p += row.iter().map(|x| x * x).sum::<f64>();
        }
    }
    Ok(per)
}

pub fn reconstruction_grads(state: &LatentState, decoders: &[Decoder], ds: &MultiViewDataset) -> Result<ReconGrads> {
    Ok(reconstruction(&state.h, decoders, ds, Exec::Serial)?.1)
}

/// Loss and exact gradients in one pass. Views are accumulated into the `H`
/// gradient in view order.
pub fn reconstruction(h: &Matrix, decoders: &[Decoder], ds: &MultiViewDataset, exec: Exec) -> Result<(f64, ReconGrads)> {
    check_inputs(h, decoders, ds)?;
    let n = h.rows() as f64;
    let mut loss = 0.0;
    let mut dh = Matrix::zeros(h.rows(), h.cols());
    let mut grads = Vec::with_capacity(decoders.len());
    for (v, dec) in decoders.iter().enumerate() {
        let cache = dec.forward(h, exec)?;
        let res = cache.out.sub(ds.view(v))?;
        loss += res.sum_sq();
        let d_out = res.scaled(2.0 / n);
        let w2 = d_out.matmul_tn(&cache.act)?;
        let b2 = d_out.col_sums();
        let mut d_pre = d_out.matmul_with(&dec.w2, exec)?;
        for (g, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let w1 = d_pre.matmul_tn(h)?;
        let b1 = d_pre.col_sums();
        dh.add_assign(&d_pre.matmul_with(&dec.w1, exec)?)?;
        grads.push(Decoder { w1, b1, w2, b2 });
    }
    Ok((loss / n, ReconGrads { h: dh, decoders: grads }))
}
