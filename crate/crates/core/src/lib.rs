//! Multi-view clustering by structured latent representation learning.
//!
//! A free latent matrix `H` is fitted so that per-view decoders reconstruct
//! every view. A kNN graph over `H` feeds a multi-head graph attention layer
//! producing `H~`, which a Student-t soft assignment and a sharpened target
//! distribution pull into clusters. Everything is trained jointly by full-batch
//! gradient descent with hand-written gradients.

pub mod cluster;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gat;
pub mod graph;
pub mod metrics;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
