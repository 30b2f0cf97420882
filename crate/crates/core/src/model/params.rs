//! Trainable parameter blocks and their initialization.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Inverse softplus of 2: the raw own-slope bias that makes the initial
/// own-price coefficient exactly -2.
pub fn warm_start_slope_bias(beta_prior: f64) -> f64 {
    (-beta_prior).exp_m1().ln()
}

/// Affine layer `out = w x + b` with `w` stored as (out, in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Dense {
        Dense {
            w: Array2::zeros((n_out, n_in)),
            b: Array1::zeros(n_out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            w: glorot(n_out, n_in, rng),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }
}

pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// Optimizer group of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Decay,
    NoDecay,
}

/// Name, optimizer group and warm-start freezing of one parameter block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub group: Group,
    pub frozen_in_warm_start: bool,
}

impl BlockInfo {
    fn new(name: impl Into<String>, group: Group, frozen: bool) -> BlockInfo {
        BlockInfo {
            name: name.into(),
            group,
            frozen_in_warm_start: frozen,
        }
    }
}

/// Every trainable tensor of the network. Gradients and optimizer moments
/// reuse this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Store, UPC, brand, style and category tables (vocab x dim).
    pub embeddings: Vec<Array2<f64>>,
    pub hidden: Vec<Dense>,
    pub own_base: Dense,
    pub own_slope: Dense,
    pub own_spline: Dense,
    pub pair_linear: Dense,
    pub pair_spline: Dense,
    pub pair_interaction: Dense,
    pub w_query: Array2<f64>,
    pub w_key: Array2<f64>,
}

const EMBEDDING_NAMES: [&str; 5] = ["store", "upc", "brand", "style", "category"];

impl ModelParams {
    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for (_, block) in out.blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    pub fn d_h(&self) -> usize {
        self.hidden.last().map_or(0, |l| l.n_out())
    }

    /// Block metadata in the fixed order used by [`Self::blocks`].
    pub fn block_info(&self) -> Vec<BlockInfo> {
        let mut info = Vec::new();
        for name in EMBEDDING_NAMES.iter().take(self.embeddings.len()) {
            info.push(BlockInfo::new(format!("embedding.{name}"), Group::Decay, false));
        }
        for l in 0..self.hidden.len() {
            info.push(BlockInfo::new(format!("hidden.{l}.weight"), Group::Decay, false));
            info.push(BlockInfo::new(format!("hidden.{l}.bias"), Group::NoDecay, false));
        }
        for (name, frozen) in [
            ("own_base", false),
            ("own_slope", false),
            ("own_spline", true),
            ("pair_linear", false),
            ("pair_spline", true),
            ("pair_interaction", true),
        ] {
            info.push(BlockInfo::new(format!("{name}.weight"), Group::NoDecay, frozen));
            info.push(BlockInfo::new(format!("{name}.bias"), Group::NoDecay, frozen));
        }
        info.push(BlockInfo::new("w_query", Group::Decay, false));
        info.push(BlockInfo::new("w_key", Group::Decay, false));
        info
    }

    fn heads(&self) -> [&Dense; 6] {
        [
            &self.own_base,
            &self.own_slope,
            &self.own_spline,
            &self.pair_linear,
            &self.pair_spline,
            &self.pair_interaction,
        ]
    }

    /// Flat views of every block, paired with its metadata.
    pub fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out: Vec<&[f64]> = Vec::new();
        for e in &self.embeddings {
            out.push(e.as_slice().expect("standard layout"));
        }
        for l in &self.hidden {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        for d in self.heads() {
            out.push(d.w.as_slice().expect("standard layout"));
            out.push(d.b.as_slice().expect("standard layout"));
        }
        out.push(self.w_query.as_slice().expect("standard layout"));
        out.push(self.w_key.as_slice().expect("standard layout"));
        self.block_info().into_iter().zip(out).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(BlockInfo, &mut [f64])> {
        let info = self.block_info();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for e in &mut self.embeddings {
            out.push(e.as_slice_mut().expect("standard layout"));
        }
        for l in &mut self.hidden {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        for d in [
            &mut self.own_base,
            &mut self.own_slope,
            &mut self.own_spline,
            &mut self.pair_linear,
            &mut self.pair_spline,
            &mut self.pair_interaction,
        ] {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.w_query.as_slice_mut().expect("standard layout"));
        out.push(self.w_key.as_slice_mut().expect("standard layout"));
        info.into_iter().zip(out).collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Euclidean norm over every block.
    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
