//! Expanding temporal folds and week-block bootstrap resampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_BOOTSTRAP};
use crate::training::data::WeekSplit;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_BLOCK_LEN: usize = 8;
pub const DEFAULT_BOOTSTRAP_REPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Inclusive (train, validation) week ranges.
    pub folds: Vec<((i64, i64), (i64, i64))>,
}

impl FoldPlan {
    pub fn split(&self, f: usize) -> WeekSplit {
        let (train, val) = self.folds[f];
        WeekSplit { train, val }
    }
}

/// Splits the sorted distinct `weeks` into `n_folds + 1` contiguous blocks
/// of near-equal size; fold f trains on blocks `0..=f` and validates on
/// block `f + 1`.
pub fn make_folds(weeks: &[i64], n_folds: usize) -> Result<FoldPlan> {
    let mut w = weeks.to_vec();
    w.sort_unstable();
    w.dedup();
    let n_blocks = n_folds + 1;
    if n_folds == 0 || w.len() < n_blocks {
        return Err(Error::InsufficientData(format!(
            "{} weeks cannot form {n_folds} folds",
            w.len()
        )));
    }
    // block b covers positions [b*len/n_blocks, (b+1)*len/n_blocks)
    let bound = |b: usize| b * w.len() / n_blocks;
    let folds = (0..n_folds)
        .map(|f| {
            let train = (w[0], w[bound(f + 1) - 1]);
            let val = (w[bound(f + 1)], w[bound(f + 2) - 1]);
            (train, val)
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Consecutive non-overlapping blocks of the sorted distinct weeks; the last
/// may be short.
pub fn week_blocks(weeks: &[i64], block_len: usize) -> Result<Vec<Vec<i64>>> {
    if block_len == 0 {
        return Err(Error::Config("block length must be at least 1".into()));
    }
    let mut w = weeks.to_vec();
    w.sort_unstable();
    w.dedup();
    Ok(w.chunks(block_len).map(|c| c.to_vec()).collect())
}

/// Each replicate draws as many blocks as there are, with replacement, and
/// concatenates their weeks (repeats allowed).
pub fn block_bootstrap(weeks: &[i64], block_len: usize, n_reps: usize, seed: u64) -> Result<Vec<Vec<i64>>> {
    let blocks = week_blocks(weeks, block_len)?;
    let mut rng = substream(seed, STREAM_BOOTSTRAP);
    Ok((0..n_reps)
        .map(|_| {
            (0..blocks.len())
                .flat_map(|_| blocks[rng.random_range(0..blocks.len())].iter().copied())
                .collect()
        })
        .collect())
}
