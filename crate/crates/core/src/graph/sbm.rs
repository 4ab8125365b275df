use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::error::{Error, Result};
use crate::seed;

/// Parameters of a planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub attr_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SbmParams {
    pub fn generate(&self) -> Result<AttributedGraph> {
        generate_sbm(
            self.blocks,
            self.block_size,
            self.p_in,
            self.p_out,
            self.attr_noise,
            self.seed,
        )
    }
}

/// Generates an SBM whose block `b` has the one-hot prototype `e_b`.
///
/// Node `v` belongs to block `v / block_size`. Features are the block
/// prototype plus `U(-attr_noise, attr_noise)` noise, min-max scaled per
/// attribute.
pub fn generate_sbm(
    num_blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    attr_noise: f64,
    seed: u64,
) -> Result<AttributedGraph> {
    let prototypes: Vec<Vec<f64>> = (0..num_blocks)
        .map(|b| (0..num_blocks).map(|k| f64::from(u8::from(k == b))).collect())
        .collect();
    generate_sbm_with_prototypes(&prototypes, block_size, p_in, p_out, attr_noise, seed)
}

/// Like [`generate_sbm`] with caller-chosen block prototypes.
pub fn generate_sbm_with_prototypes(
    prototypes: &[Vec<f64>],
    block_size: usize,
    p_in: f64,
    p_out: f64,
    attr_noise: f64,
    seed: u64,
) -> Result<AttributedGraph> {
    if block_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "block_size must be at least 2, got {block_size}"
        )));
    }
    if prototypes.is_empty() {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name}={p} is not a probability")));
        }
    }
    if p_in < p_out {
        return Err(Error::InvalidArgument(format!(
            "p_in ({p_in}) must not be below p_out ({p_out})"
        )));
    }
    if !(attr_noise >= 0.0 && attr_noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "attr_noise must be finite and non-negative, got {attr_noise}"
        )));
    }
    let dim = prototypes[0].len();
    if dim == 0 || prototypes.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument(
            "prototypes must share a non-zero dimension".into(),
        ));
    }

    let n = prototypes.len() * block_size;
    let mut edge_rng = seed::stream(seed, "sbm-edges", 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if i / block_size == j / block_size { p_in } else { p_out };
            // Draw unconditionally so the stream layout does not depend on p.
            let u: f64 = edge_rng.gen();
            if u < p {
                edges.push((i, j));
            }
        }
    }

    let mut feature_rng = seed::stream(seed, "sbm-features", 0);
    let mut columns = vec![vec![0.0; n]; dim];
    for v in 0..n {
        let proto = &prototypes[v / block_size];
        for (k, col) in columns.iter_mut().enumerate() {
            let noise = if attr_noise > 0.0 {
                feature_rng.gen_range(-attr_noise..=attr_noise)
            } else {
                0.0
            };
            col[v] = proto[k] + noise;
        }
    }
    for col in &mut columns {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for x in col.iter_mut() {
            *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
        }
    }
    let features = (0..n)
        .map(|v| columns.iter().map(|c| c[v]).collect())
        .collect();
    AttributedGraph::from_edges(n, edges)?.with_features(features)
}
