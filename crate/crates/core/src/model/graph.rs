//! Attention relevance scores and sparse directed product graphs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::wide::ProductMeta;

/// Finite stand-in for minus infinity on the score diagonal.
pub const SELF_SENTINEL: f64 = -1e9;

/// Coefficients of the metadata bonus added to attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetadataBonus {
    #[serde(rename = "bonus_same_brand")]
    pub same_brand: f64,
    #[serde(rename = "bonus_same_style")]
    pub same_style: f64,
    #[serde(rename = "bonus_size_gap")]
    pub size_gap: f64,
}

impl Default for MetadataBonus {
    fn default() -> Self {
        MetadataBonus {
            same_brand: 0.5,
            same_style: 0.5,
            size_gap: 1.0,
        }
    }
}

/// `xi_ij = a 1{brand} + b 1{style} - c |log l_i - log l_j|`, zero diagonal.
pub fn metadata_bonus(products: &[ProductMeta], bonus: &MetadataBonus) -> Array2<f64> {
    let n = products.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            return 0.0;
        }
        let (p, q) = (&products[i], &products[j]);
        bonus.same_brand * f64::from(u8::from(p.brand == q.brand))
            + bonus.same_style * f64::from(u8::from(p.style == q.style))
            - bonus.size_gap * (p.liters.ln() - q.liters.ln()).abs()
    })
}

pub fn same_category(products: &[ProductMeta]) -> Array2<bool> {
    let n = products.len();
    Array2::from_shape_fn((n, n), |(i, j)| products[i].category == products[j].category)
}

/// `s_ij = q_i . k_j / sqrt(d_att) + xi_ij`, diagonal set to the sentinel.
pub fn score_matrix(queries: &Array2<f64>, keys: &Array2<f64>, xi: &Array2<f64>) -> Array2<f64> {
    let scale = (queries.ncols() as f64).sqrt();
    let mut s = queries.dot(&keys.t()) / scale + xi;
    for i in 0..s.nrows() {
        s[[i, i]] = SELF_SENTINEL;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Online,
    Frozen,
}

/// Directed edges `(i, j)`, stored per focal product with `j` ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseGraph {
    pub n: usize,
    pub k_eff: usize,
    pub neighbors: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

impl SparseGraph {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
    }
}

pub fn effective_k(k: usize, n: usize) -> usize {
    k.min(n.saturating_sub(1))
}

/// Top-`k_eff` selection per focal row of a mean score matrix. With
/// `priority`, same-category candidates rank ahead of all others (the effect
/// of adding a large constant to their scores) and remaining slots go to the
/// best other candidates; ties break toward the lower index.
pub fn select_graph(
    mean_scores: &Array2<f64>,
    k: usize,
    priority: Option<&Array2<bool>>,
    provenance: Provenance,
) -> Result<SparseGraph> {
    let n = mean_scores.nrows();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!("need at least two products, got {n}")));
    }
    let k_eff = effective_k(k, n);
    let neighbors = (0..n)
        .map(|i| {
            let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            cand.sort_by(|&a, &b| {
                let cat = priority.map_or(std::cmp::Ordering::Equal, |c| c[[i, b]].cmp(&c[[i, a]]));
                cat.then(mean_scores[[i, b]].total_cmp(&mean_scores[[i, a]]))
                    .then(a.cmp(&b))
            });
            let mut chosen = cand[..k_eff].to_vec();
            chosen.sort_unstable();
            chosen
        })
        .collect();
    Ok(SparseGraph {
        n,
        k_eff,
        neighbors,
        provenance,
    })
}

/// Elementwise mean of score matrices.
pub fn mean_scores<'a>(scores: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Array2<f64>> {
    let mut iter = scores.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::DegenerateGraph("no score matrices to average".into()))?;
    let mut sum = first.clone();
    let mut count = 1usize;
    for s in iter {
        sum += s;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
