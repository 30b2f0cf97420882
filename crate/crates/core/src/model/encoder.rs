//! Shared token encoder: categorical embeddings concatenated with scaled
//! numeric tokens, then a tanh feed-forward stack with inverted dropout.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::panel::wide::N_CATEGORICAL;

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub cats: Vec<[usize; N_CATEGORICAL]>,
    /// Input to each layer; the last entry is the latent output.
    pub inputs: Vec<Array2<f64>>,
    /// Post-tanh activations before dropout.
    pub activations: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers, present in training mode.
    pub masks: Vec<Option<Array2<f64>>>,
}

impl EncoderCache {
    pub fn latents(&self) -> &Array2<f64> {
        self.inputs.last().expect("encoder has an output")
    }
}

pub fn input_width(params: &ModelParams, d_tok: usize) -> usize {
    d_tok + params.embeddings.iter().map(|e| e.ncols()).sum::<usize>()
}

/// Encodes `rows` tokens (already scaled) with their categorical ids.
/// `dropout` carries the rate and generator in training mode.
pub fn encode(
    params: &ModelParams,
    tokens: &Array2<f64>,
    cats: &[[usize; N_CATEGORICAL]],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<EncoderCache> {
    let rows = tokens.nrows();
    if cats.len() != rows {
        return Err(Error::Shape(format!("{} token rows but {} id rows", rows, cats.len())));
    }
    let d_in = input_width(params, tokens.ncols());
    let expected = params.hidden.first().map_or(d_in, |l| l.n_in());
    if d_in != expected {
        return Err(Error::Shape(format!("encoder expects width {expected}, tokens give {d_in}")));
    }
    let mut x = Array2::zeros((rows, d_in));
    x.slice_mut(s![.., ..tokens.ncols()]).assign(tokens);
    let mut col = tokens.ncols();
    for (slot, table) in params.embeddings.iter().enumerate() {
        let dim = table.ncols();
        for (r, ids) in cats.iter().enumerate() {
            let id = ids[slot].min(table.nrows() - 1);
            x.slice_mut(s![r, col..col + dim]).assign(&table.row(id));
        }
        col += dim;
    }

    let mut inputs = vec![x];
    let mut activations = Vec::new();
    let mut masks = Vec::new();
    let mut dropout = dropout;
    for layer in &params.hidden {
        let z = inputs.last().unwrap().dot(&layer.w.t()) + &layer.b;
        let a = z.mapv(f64::tanh);
        let (out, mask) = match dropout.as_mut() {
            Some((p, rng)) if *p > 0.0 => {
                let keep = 1.0 - *p;
                let mask = Array2::from_shape_simple_fn(a.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&a * &mask, Some(mask))
            }
            _ => (a.clone(), None),
        };
        activations.push(a);
        masks.push(mask);
        inputs.push(out);
    }
    Ok(EncoderCache {
        cats: cats.to_vec(),
        inputs,
        activations,
        masks,
    })
}

/// Accumulates parameter gradients given `grad_latents` (rows x d_h).
pub fn encode_backward(params: &ModelParams, cache: &EncoderCache, grad_latents: Array2<f64>, grads: &mut ModelParams) {
    let mut g = grad_latents;
    for l in (0..params.hidden.len()).rev() {
        if let Some(mask) = &cache.masks[l] {
            g = g * mask;
        }
        let a = &cache.activations[l];
        let gz = g * &a.mapv(|v| 1.0 - v * v);
        grads.hidden[l].w += &gz.t().dot(&cache.inputs[l]);
        grads.hidden[l].b += &gz.sum_axis(Axis(0));
        g = gz.dot(&params.hidden[l].w);
    }
    let d_tok = g.ncols() - params.embeddings.iter().map(|e| e.ncols()).sum::<usize>();
    let mut col = d_tok;
    for (slot, table) in params.embeddings.iter().enumerate() {
        let dim = table.ncols();
        for (r, ids) in cache.cats.iter().enumerate() {
            let id = ids[slot].min(table.nrows() - 1);
            let mut row = grads.embeddings[slot].row_mut(id);
            row += &g.slice(s![r, col..col + dim]);
        }
        col += dim;
    }
}
