//! Parameter checkpoints: one MVM1 binary matrix per tensor plus `index.txt`.
//!
//! Index lines are `tensor <name> <file>` or `layer <l> <activation> <combine> <slope>`.
//! Vectors are stored as single-row matrices.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::{read_matrix, write_matrix, MatrixFormat};
use crate::encoder::{Decoder, LatentState};
use crate::error::{Error, Result};
use crate::gat::{GatHead, GatParams, GatStack};
use crate::numerics::Matrix;

use super::Model;

const INDEX: &str = "index.txt";

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("length matches")
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors: Vec<(String, Matrix)> = vec![("h".into(), model.latent.h.clone())];
    for (v, d) in model.decoders.iter().enumerate() {
        tensors.push((format!("decoder.{v}.w1"), d.w1.clone()));
        tensors.push((format!("decoder.{v}.b1"), row(&d.b1)));
        tensors.push((format!("decoder.{v}.w2"), d.w2.clone()));
        tensors.push((format!("decoder.{v}.b2"), row(&d.b2)));
    }
    let mut index = String::new();
    for (l, layer) in model.gat.layers.iter().enumerate() {
        index.push_str(&format!(
            "layer {l} {} {} {}\n",
            layer.activation, layer.combine, layer.leaky_slope
        ));
        for (k, h) in layer.heads.iter().enumerate() {
            tensors.push((format!("gat.{l}.{k}.w"), h.w.clone()));
            tensors.push((format!("gat.{l}.{k}.a"), row(&h.a)));
        }
    }
    if let Some(c) = &model.centroids {
        tensors.push(("centroids".into(), c.clone()));
    }
    for (name, m) in &tensors {
        let file = format!("{name}.mvm");
        write_matrix(&dir.join(&file), m, MatrixFormat::Binary)?;
        index.push_str(&format!("tensor {name} {file}\n"));
    }
    let path = dir.join(INDEX);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let path = dir.join(INDEX);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |msg: String| Error::format(&path, msg);
    let mut tensors: BTreeMap<String, Matrix> = BTreeMap::new();
    let mut layers: BTreeMap<usize, GatParams> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["tensor", name, file] => {
                tensors.insert(name.to_string(), read_matrix(&dir.join(file))?);
            }
            ["layer", l, act, comb, slope] => {
                let l: usize = l.parse().map_err(|_| bad(format!("bad layer index {l:?}")))?;
                layers.insert(
                    l,
                    GatParams {
                        heads: Vec::new(),
                        activation: act.parse()?,
                        combine: comb.parse()?,
                        leaky_slope: slope.parse().map_err(|_| bad(format!("bad slope {slope:?}")))?,
                    },
                );
            }
            _ => return Err(bad(format!("cannot parse {line:?}"))),
        }
    }
    let mut take = |name: &str| tensors.remove(name).ok_or_else(|| bad(format!("missing tensor {name}")));
    let h = take("h")?;
    let mut decoders = Vec::new();
    while tensors.contains_key(&format!("decoder.{}.w1", decoders.len())) {
        let v = decoders.len();
        let mut take = |s: &str| tensors.remove(&format!("decoder.{v}.{s}")).ok_or_else(|| bad(format!("missing decoder.{v}.{s}")));
        decoders.push(Decoder {
            w1: take("w1")?,
            b1: take("b1")?.into_vec(),
            w2: take("w2")?,
            b2: take("b2")?.into_vec(),
        });
    }
    let mut stack = GatStack::default();
    for (l, mut layer) in layers {
        if l != stack.layers.len() {
            return Err(bad(format!("layer {l} out of order")));
        }
        let mut k = 0;
        while let Some(w) = tensors.remove(&format!("gat.{l}.{k}.w")) {
            let a = tensors
                .remove(&format!("gat.{l}.{k}.a"))
                .ok_or_else(|| bad(format!("missing gat.{l}.{k}.a")))?
                .into_vec();
            layer.heads.push(GatHead { w, a });
            k += 1;
        }
        layer.validate()?;
        stack.layers.push(layer);
    }
    let centroids = tensors.remove("centroids");
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unexpected tensor {extra}")));
    }
    Ok(Model {
        latent: LatentState { h },
        decoders,
        gat: stack,
        centroids,
    })
}
