//! Multi-head graph attention over a neighbor graph.
//!
//! Per head `k`: `alpha_ij = softmax_{j in N_i} LeakyReLU(a^T [W h_i || W h_j])`
//! and `z_i = sum_j alpha_ij W h_j`, where `N_i` is node `i` plus its graph
//! neighbors. Heads are averaged before the activation or activated and
//! concatenated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::numerics::{dot, Exec, Matrix, Rng64};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Elu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "elu" => Ok(Activation::Elu),
            _ => Err(Error::Parameter(format!("unknown activation {s:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Elu => "elu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Average,
    Concat,
}

impl FromStr for Combine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Combine::Average),
            "concat" => Ok(Combine::Concat),
            _ => Err(Error::Parameter(format!("unknown head combination {s:?}"))),
        }
    }
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combine::Average => "average",
            Combine::Concat => "concat",
        })
    }
}

/// One attention head: `W` is `F' x F`, `a` has length `2F'` (source half first).
#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub w: Matrix,
    pub a: Vec<f64>,
}

impl GatHead {
    pub fn zeros_like(&self) -> Self {
        GatHead {
            w: Matrix::zeros(self.w.rows(), self.w.cols()),
            a: vec![0.0; self.a.len()],
        }
    }
}

/// A single multi-head attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub heads: Vec<GatHead>,
    pub activation: Activation,
    pub combine: Combine,
    pub leaky_slope: f64,
}

impl GatParams {
    /// Glorot-uniform `W` and `a` for `heads` heads mapping `F -> F'`.
    pub fn init(
        heads: usize,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        combine: Combine,
        rng: &mut Rng64,
    ) -> Result<Self> {
        if heads == 0 || in_dim == 0 || out_dim == 0 {
            return Err(Error::Parameter("attention layer needs >= 1 head and nonzero dims".into()));
        }
        let sw = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let sa = (6.0 / (2 * out_dim + 1) as f64).sqrt();
        let heads = (0..heads)
            .map(|_| GatHead {
                w: Matrix::from_fn(out_dim, in_dim, |_, _| rng.uniform(-sw, sw)),
                a: (0..2 * out_dim).map(|_| rng.uniform(-sa, sa)).collect(),
            })
            .collect();
        Ok(GatParams {
            heads,
            activation,
            combine,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn in_dim(&self) -> usize {
        self.heads[0].w.cols()
    }

    pub fn head_dim(&self) -> usize {
        self.heads[0].w.rows()
    }

    pub fn out_dim(&self) -> usize {
        match self.combine {
            Combine::Average => self.head_dim(),
            Combine::Concat => self.head_dim() * self.n_heads(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GatParams {
            heads: self.heads.iter().map(GatHead::zeros_like).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.heads.first() else {
            return Err(Error::Parameter("attention layer has no heads".into()));
        };
        let (fo, fi) = first.w.shape();
        for (k, h) in self.heads.iter().enumerate() {
            if h.w.shape() != (fo, fi) || h.a.len() != 2 * fo {
                return Err(Error::Shape(format!(
                    "head {k}: W {:?}, a {} (expected {fo}x{fi}, {})",
                    h.w.shape(),
                    h.a.len(),
                    2 * fo
                )));
            }
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Parameter(format!("leaky slope {} not in (0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    /// Flat view of every parameter: per head, `W` then `a`.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.heads.iter().flat_map(|h| [h.w.as_slice(), h.a.as_slice()]).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.heads
            .iter_mut()
            .flat_map(|h| [h.w.as_mut_slice(), h.a.as_mut_slice()])
            .collect()
    }

    pub fn axpy(&mut self, alpha: f64, other: &GatParams) {
        for (dst, src) in self.heads.iter_mut().zip(&other.heads) {
            dst.w.axpy(alpha, &src.w).expect("matching head shapes");
            for (d, s) in dst.a.iter_mut().zip(&src.a) {
                *d += alpha * s;
            }
        }
    }
}

/// Neighborhood lists `N_i = {i} + neighbors(i)` for every node.
pub fn neighborhoods(g: &NeighborGraph) -> Vec<Vec<usize>> {
    (0..g.n()).map(|i| g.neighborhood(i)).collect()
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Attention rows for one head, aligned with `neighborhoods(g)`.
pub type AttentionRows = Vec<Vec<f64>>;

struct HeadCache {
    /// `H W^T`
    proj: Matrix,
    /// raw logits before LeakyReLU, aligned with the neighborhood lists
    logits: Vec<Vec<f64>>,
    alpha: AttentionRows,
    /// `sum_j alpha_ij W h_j`
    agg: Matrix,
}

fn head_forward(head: &GatHead, slope: f64, h: &Matrix, nbrs: &[Vec<usize>], exec: Exec) -> Result<HeadCache> {
    let fo = head.w.rows();
    let proj = h.matmul_nt_with(&head.w, exec)?;
    let (a_src, a_dst) = head.a.split_at(fo);
    let src: Vec<f64> = proj.row_iter().map(|r| dot(a_src, r)).collect();
    let dst: Vec<f64> = proj.row_iter().map(|r| dot(a_dst, r)).collect();
    let mut logits = Vec::with_capacity(nbrs.len());
    let mut alpha = Vec::with_capacity(nbrs.len());
    let mut agg = Matrix::zeros(h.rows(), fo);
    for (i, nb) in nbrs.iter().enumerate() {
        let raw: Vec<f64> = nb.iter().map(|&j| src[i] + dst[j]).collect();
        let act: Vec<f64> = raw.iter().map(|&u| leaky(u, slope)).collect();
        let max = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = act.iter().map(|&e| (e - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let out = agg.row_mut(i);
        for (&j, &w) in nb.iter().zip(&weights) {
            for (o, &p) in out.iter_mut().zip(proj.row(j)) {
                *o += w * p;
            }
        }
        logits.push(raw);
        alpha.push(weights);
    }
    Ok(HeadCache {
        proj,
        logits,
        alpha,
        agg,
    })
}

fn check_inputs(params: &GatParams, h: &Matrix, g: &NeighborGraph) -> Result<()> {
    params.validate()?;
    if h.cols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "attention layer expects {} input features, got {}",
            params.in_dim(),
            h.cols()
        )));
    }
    if g.n() != h.rows() {
        return Err(Error::Shape(format!("graph over {} nodes, {} feature rows", g.n(), h.rows())));
    }
    Ok(())
}

/// Normalised attention coefficients of one head. Row `i` is aligned with
/// `g.neighborhood(i)` (self first, then neighbors by id).
pub fn attention_coeffs(params: &GatParams, head: usize, h: &Matrix, g: &NeighborGraph) -> Result<AttentionRows> {
    check_inputs(params, h, g)?;
    let head = params
        .heads
        .get(head)
        .ok_or_else(|| Error::Parameter(format!("head {head} out of range")))?;
    Ok(head_forward(head, params.leaky_slope, h, &neighborhoods(g), Exec::Serial)?.alpha)
}

/// Everything the backward pass needs from a forward pass.
pub struct GatForward {
    nbrs: Vec<Vec<usize>>,
    heads: Vec<HeadCache>,
    /// Averaged pre-activation, or each head's aggregate side by side.
    pre: Matrix,
    pub output: Matrix,
}

impl GatForward {
    pub fn attention(&self, head: usize) -> &AttentionRows {
        &self.heads[head].alpha
    }

    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.nbrs
    }

    /// Largest `|sum_j alpha_ij - 1|` over all heads and rows.
    pub fn max_attention_row_error(&self) -> f64 {
        self.heads
            .iter()
            .flat_map(|c| c.alpha.iter())
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn gat_forward(params: &GatParams, h: &Matrix, g: &NeighborGraph) -> Result<Matrix> {
    Ok(forward(params, h, g, Exec::Serial)?.output)
}

pub fn forward(params: &GatParams, h: &Matrix, g: &NeighborGraph, exec: Exec) -> Result<GatForward> {
    check_inputs(params, h, g)?;
    let nbrs = neighborhoods(g);
    let heads = params
        .heads
        .iter()
        .map(|hd| head_forward(hd, params.leaky_slope, h, &nbrs, exec))
        .collect::<Result<Vec<_>>>()?;
    let pre = match params.combine {
        Combine::Average => {
            let mut acc = Matrix::zeros(h.rows(), params.head_dim());
            for c in &heads {
                acc.add_assign(&c.agg)?;
            }
            acc.scale(1.0 / heads.len() as f64);
            acc
        }
        Combine::Concat => {
            let parts: Vec<&Matrix> = heads.iter().map(|c| &c.agg).collect();
            Matrix::hcat(&parts)?
        }
    };
    let act = params.activation;
    let output = pre.map(|x| act.apply(x));
    Ok(GatForward {
        nbrs,
        heads,
        pre,
        output,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatGrads {
    pub params: GatParams,
    pub h: Matrix,
}

pub fn gat_backward(params: &GatParams, h: &Matrix, g: &NeighborGraph, upstream: &Matrix) -> Result<GatGrads> {
    let fwd = forward(params, h, g, Exec::Serial)?;
    backward(params, h, &fwd, upstream, Exec::Serial)
}

/// Vector-Jacobian product of the layer output with `upstream`.
pub fn backward(params: &GatParams, h: &Matrix, fwd: &GatForward, upstream: &Matrix, exec: Exec) -> Result<GatGrads> {
    if upstream.shape() != fwd.output.shape() {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match output {:?}",
            upstream.shape(),
            fwd.output.shape()
        )));
    }
    let act = params.activation;
    let mut d_pre = upstream.clone();
    for ((d, &x), &y) in d_pre
        .as_mut_slice()
        .iter_mut()
        .zip(fwd.pre.as_slice())
        .zip(fwd.output.as_slice())
    {
        *d *= act.grad(x, y);
    }
    let k = params.n_heads();
    let fo = params.head_dim();
    let slope = params.leaky_slope;
    let mut grads = params.zeros_like();
    let mut dh = Matrix::zeros(h.rows(), h.cols());
    for (hk, (head, cache)) in params.heads.iter().zip(&fwd.heads).enumerate() {
        // gradient reaching this head's aggregate
        let d_agg = match params.combine {
            Combine::Average => d_pre.scaled(1.0 / k as f64),
            Combine::Concat => Matrix::from_fn(h.rows(), fo, |r, c| d_pre[(r, hk * fo + c)]),
        };
        let (a_src, a_dst) = head.a.split_at(fo);
        let mut d_proj = Matrix::zeros(h.rows(), fo);
        let mut d_src = vec![0.0; h.rows()];
        let mut d_dst = vec![0.0; h.rows()];
        for (i, nb) in fwd.nbrs.iter().enumerate() {
            let gi = d_agg.row(i);
            let alpha = &cache.alpha[i];
            let d_alpha: Vec<f64> = nb.iter().map(|&j| dot(gi, cache.proj.row(j))).collect();
            let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for (p, &j) in nb.iter().enumerate() {
                let row = d_proj.row_mut(j);
                for (r, &g) in row.iter_mut().zip(gi) {
                    *r += alpha[p] * g;
                }
                let d_e = alpha[p] * (d_alpha[p] - mean);
                let d_u = if cache.logits[i][p] > 0.0 { d_e } else { slope * d_e };
                d_src[i] += d_u;
                d_dst[j] += d_u;
            }
        }
        let grad_head = &mut grads.heads[hk];
        let (ga_src, ga_dst) = grad_head.a.split_at_mut(fo);
        for i in 0..h.rows() {
            let p = cache.proj.row(i);
            for c in 0..fo {
                ga_src[c] += d_src[i] * p[c];
                ga_dst[c] += d_dst[i] * p[c];
            }
            let row = d_proj.row_mut(i);
            for c in 0..fo {
                row[c] += d_src[i] * a_src[c] + d_dst[i] * a_dst[c];
            }
        }
        grad_head.w = d_proj.matmul_tn(h)?;
        dh.add_assign(&d_proj.matmul_with(&head.w, exec)?)?;
    }
    Ok(GatGrads { params: grads, h: dh })
}

/// A stack of attention layers applied in order. An empty stack is the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GatStack {
    pub layers: Vec<GatParams>,
}

pub struct StackForward {
    inputs: Vec<Matrix>,
    layers: Vec<GatForward>,
    pub output: Matrix,
}

impl StackForward {
    pub fn layer(&self, l: usize) -> &GatForward {
        &self.layers[l]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn max_attention_row_error(&self) -> f64 {
        self.layers.iter().map(GatForward::max_attention_row_error).fold(0.0, f64::max)
    }
}

impl GatStack {
    /// `layers` layers with uniform head width `F'` equal to `latent_dim`.
    pub fn init(
        layers: usize,
        heads: usize,
        latent_dim: usize,
        activation: Activation,
        combine: Combine,
        rng: &mut Rng64,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        let mut in_dim = latent_dim;
        for _ in 0..layers {
            let layer = GatParams::init(heads, in_dim, latent_dim, activation, combine, rng)?;
            in_dim = layer.out_dim();
            out.push(layer);
        }
        Ok(GatStack { layers: out })
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        self.layers.last().map_or(in_dim, GatParams::out_dim)
    }

    pub fn zeros_like(&self) -> Self {
        GatStack {
            layers: self.layers.iter().map(GatParams::zeros_like).collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &GatStack) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(alpha, b);
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }

    pub fn forward(&self, h: &Matrix, g: &NeighborGraph, exec: Exec) -> Result<StackForward> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut cur = h.clone();
        for p in &self.layers {
            let f = forward(p, &cur, g, exec)?;
            inputs.push(cur);
            cur = f.output.clone();
            layers.push(f);
        }
        Ok(StackForward {
            inputs,
            layers,
            output: cur,
        })
    }

    /// Returns parameter gradients and the gradient with respect to the stack input.
    pub fn backward(&self, fwd: &StackForward, upstream: &Matrix, exec: Exec) -> Result<(GatStack, Matrix)> {
        let mut grads = vec![None; self.layers.len()];
        let mut d = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let g = backward(&self.layers[l], &fwd.inputs[l], &fwd.layers[l], &d, exec)?;
            d = g.h;
            grads[l] = Some(g.params);
        }
        Ok((
            GatStack {
                layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            },
            d,
        ))
    }
}
