//! The context-conditioned demand network: shared encoder, own and pair
//! heads, attention-scored sparse product graph and the structured surface.

pub mod encoder;
pub mod graph;
pub mod params;
pub mod surface;
pub mod verify;

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{encode, EncoderCache};
pub use graph::{MetadataBonus, Provenance, SparseGraph};
pub use params::{Dense, ModelParams};
pub use surface::{OwnOutput, PairOutput, Surface, SurfacePoint};
pub use verify::{verify_model, VerifyReport};

use crate::error::{Error, Result};
use crate::panel::wide::{TokenScaler, Universe, WideInstance, D_TOK};
use crate::rng::{substream, STREAM_INIT};
use crate::spline::SplineSpec;
use crate::training::WeekSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Spline basis functions per product.
    pub k_basis: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub d_att: usize,
    pub k_neighbors: usize,
    pub embedding_dim: usize,
    pub category_priority: bool,
    #[serde(flatten)]
    pub bonus: MetadataBonus,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k_basis: 3,
            hidden: vec![256, 128, 64],
            dropout: 0.2547,
            d_att: 32,
            k_neighbors: 4,
            embedding_dim: 8,
            category_priority: true,
            bonus: MetadataBonus::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_basis == 0 || self.hidden.is_empty() || self.hidden.contains(&0) || self.d_att == 0 {
            return Err(Error::Config("basis count, hidden widths and d_att must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn d_h(&self) -> usize {
        *self.hidden.last().unwrap_or(&0)
    }
}

/// How the sparse graph of a forward pass is chosen.
#[derive(Debug, Clone, Copy)]
pub enum GraphMode<'a> {
    /// Top-k of the batch-mean scores.
    Online,
    Given(&'a SparseGraph),
}

/// Everything a batched forward pass produces, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub encoder: EncoderCache,
    pub queries: Vec<Array2<f64>>,
    pub keys: Vec<Array2<f64>>,
    pub scores: Vec<Array2<f64>>,
    pub graph: SparseGraph,
    pub surfaces: Vec<Surface>,
    pub points: Vec<SurfacePoint>,
}

impl BatchForward {
    pub fn latents(&self, b: usize, n: usize) -> ArrayView2<'_, f64> {
        self.encoder.latents().slice(s![b * n..(b + 1) * n, ..])
    }
}

/// Trained (or initialized) network together with everything needed to
/// evaluate it: universe, spline specs, token scaler and frozen graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub config: ModelConfig,
    pub universe: Universe,
    pub splines: Vec<SplineSpec>,
    pub scaler: TokenScaler,
    pub params: ModelParams,
    pub frozen_graph: Option<SparseGraph>,
    /// Week ranges the model was fitted and validated on.
    #[serde(default)]
    pub split: Option<WeekSplit>,
    pub seed: u64,
    pub rng_streams: Vec<String>,
}

/// Fits one spline spec per product from observed training log prices,
/// falling back to imputed prices for products observed fewer than twice.
pub fn fit_splines(universe: &Universe, train: &[WideInstance], k: usize) -> Result<Vec<SplineSpec>> {
    (0..universe.n())
        .map(|i| {
            let observed: Vec<f64> = train.iter().filter(|w| w.m[i]).map(|w| w.u[i]).collect();
            let values = if observed.len() >= 2 {
                observed
            } else {
                train.iter().map(|w| w.u[i]).collect()
            };
            SplineSpec::fit(&values, k)
        })
        .collect()
}

/// Initial parameters: Glorot encoder and attention projections, zero heads,
/// own slope bias at the inverse softplus of `-beta_prior`, own base bias at
/// `base_bias`.
pub fn init_params(
    config: &ModelConfig,
    vocab_sizes: &[usize],
    beta_prior: f64,
    base_bias: f64,
    rng: &mut ChaCha8Rng,
) -> ModelParams {
    let embeddings: Vec<Array2<f64>> = vocab_sizes
        .iter()
        .map(|&v| params::glorot(v, config.embedding_dim, rng))
        .collect();
    let mut width = D_TOK + vocab_sizes.len() * config.embedding_dim;
    let mut hidden = Vec::new();
    for &h in &config.hidden {
        hidden.push(Dense::glorot(width, h, rng));
        width = h;
    }
    let (d_h, k) = (width, config.k_basis);
    let mut own_slope = Dense::zeros(d_h, 1);
    own_slope.b[0] = params::warm_start_slope_bias(beta_prior);
    let mut own_base = Dense::zeros(d_h, 1);
    own_base.b[0] = base_bias;
    ModelParams {
        embeddings,
        hidden,
        own_base,
        own_slope,
        own_spline: Dense::zeros(d_h, k),
        pair_linear: Dense::zeros(2 * d_h, 1),
        pair_spline: Dense::zeros(2 * d_h, k),
        pair_interaction: Dense::zeros(2 * d_h, k * k),
        w_query: params::glorot(config.d_att, d_h, rng),
        w_key: params::glorot(config.d_att, d_h, rng),
    }
}

const EVAL_CHUNK: usize = 256;

impl DemandModel {
    /// Builds a fresh model from the training split.
    pub fn new(config: ModelConfig, universe: Universe, train: &[WideInstance], seed: u64, beta_prior: f64) -> Result<Self> {
        config.validate()?;
        if universe.n() < 2 {
            return Err(Error::DegenerateGraph("the product universe needs at least two products".into()));
        }
        if train.is_empty() {
            return Err(Error::InsufficientData("empty training split".into()));
        }
        let splines = fit_splines(&universe, train, config.k_basis)?;
        let scaler = TokenScaler::fit(train);
        // centre the intercept so the warm-start surface starts near the data
        let (mut sum, mut count) = (0.0, 0usize);
        for w in train {
            for i in 0..w.u.len() {
                if w.m[i] {
                    sum += w.y[i] - beta_prior * (w.u[i] - splines[i].mu);
                    count += 1;
                }
            }
        }
        let base_bias = if count > 0 { sum / count as f64 } else { 0.0 };
        let mut rng = substream(seed, STREAM_INIT);
        let params = init_params(&config, &universe.vocab_sizes(), beta_prior, base_bias, &mut rng);
        Ok(DemandModel {
            config,
            universe,
            splines,
            scaler,
            params,
            frozen_graph: None,
            split: None,
            seed,
            rng_streams: crate::rng::STREAMS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.universe.n()
    }

    pub fn xi(&self) -> Array2<f64> {
        graph::metadata_bonus(&self.universe.products, &self.config.bonus)
    }

    fn priority(&self) -> Option<Array2<bool>> {
        self.config
            .category_priority
            .then(|| graph::same_category(&self.universe.products))
    }

    /// Encodes a batch of instances into stacked latents (instance-major).
    pub fn encode_batch(&self, batch: &[&WideInstance], dropout: Option<&mut ChaCha8Rng>) -> Result<EncoderCache> {
        let n = self.n();
        let mut tokens = Array2::zeros((batch.len() * n, D_TOK));
        let mut cats = Vec::with_capacity(batch.len() * n);
        for (b, inst) in batch.iter().enumerate() {
            if inst.u.len() != n {
                return Err(Error::Shape(format!("instance has {} products, universe {}", inst.u.len(), n)));
            }
            tokens
                .slice_mut(s![b * n..(b + 1) * n, ..])
                .assign(&self.scaler.transform(&inst.tokens));
            cats.extend_from_slice(&inst.cats);
        }
        let drop = dropout.map(|rng| (self.config.dropout, rng));
        encode(&self.params, &tokens, &cats, drop)
    }

    /// Queries, keys and score matrix of one instance's latents.
    pub fn scores(&self, h: ArrayView2<f64>, xi: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let q = h.dot(&self.params.w_query.t());
        let k = h.dot(&self.params.w_key.t());
        let s = graph::score_matrix(&q, &k, xi);
        (q, k, s)
    }

    pub fn select(&self, scores: &[Array2<f64>], provenance: Provenance) -> Result<SparseGraph> {
        let mean = graph::mean_scores(scores)?;
        graph::select_graph(&mean, self.config.k_neighbors, self.priority().as_ref(), provenance)
    }

    pub fn forward_batch(
        &self,
        batch: &[&WideInstance],
        mode: GraphMode,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchForward> {
        let n = self.n();
        let encoder = self.encode_batch(batch, dropout)?;
        let xi = self.xi();
        let mut queries = Vec::with_capacity(batch.len());
        let mut keys = Vec::with_capacity(batch.len());
        let mut scores = Vec::with_capacity(batch.len());
        for b in 0..batch.len() {
            let (q, k, sc) = self.scores(encoder.latents().slice(s![b * n..(b + 1) * n, ..]), &xi);
            queries.push(q);
            keys.push(k);
            scores.push(sc);
        }
        let graph = match mode {
            GraphMode::Online => self.select(&scores, Provenance::Online)?,
            GraphMode::Given(g) => g.clone(),
        };
        let mut surfaces = Vec::with_capacity(batch.len());
        let mut points = Vec::with_capacity(batch.len());
        for (b, inst) in batch.iter().enumerate() {
            let h = encoder.latents().slice(s![b * n..(b + 1) * n, ..]);
            let surf = Surface::build(&self.params, h, &scores[b], &graph, &self.splines, self.config.k_basis);
            points.push(surf.point(&inst.u));
            surfaces.push(surf);
        }
        Ok(BatchForward {
            encoder,
            queries,
            keys,
            scores,
            graph,
            surfaces,
            points,
        })
    }

    /// Mean evaluation-mode score matrix over a split.
    pub fn mean_split_scores(&self, split: &[WideInstance]) -> Result<Array2<f64>> {
        if split.is_empty() {
            return Err(Error::InsufficientData("cannot freeze a graph on an empty split".into()));
        }
        let n = self.n();
        let xi = self.xi();
        let mut total = Array2::zeros((n, n));
        for chunk in split.chunks(EVAL_CHUNK) {
            let refs: Vec<&WideInstance> = chunk.iter().collect();
            let enc = self.encode_batch(&refs, None)?;
            for b in 0..refs.len() {
                let (_, _, sc) = self.scores(enc.latents().slice(s![b * n..(b + 1) * n, ..]), &xi);
                total += &sc;
            }
        }
        Ok(total / split.len() as f64)
    }

    /// Top-k graph of the mean training-split scores; does not store it.
    pub fn compute_frozen_graph(&self, train: &[WideInstance]) -> Result<SparseGraph> {
        let mean = self.mean_split_scores(train)?;
        graph::select_graph(&mean, self.config.k_neighbors, self.priority().as_ref(), Provenance::Frozen)
    }

    pub fn freeze_graph(&mut self, train: &[WideInstance]) -> Result<&SparseGraph> {
        let g = self.compute_frozen_graph(train)?;
        Ok(self.frozen_graph.insert(g))
    }

    pub fn frozen(&self) -> Result<&SparseGraph> {
        self.frozen_graph.as_ref().ok_or(Error::MissingFrozenGraph)
    }

    /// Evaluation-mode surfaces of a split on a given graph.
    pub fn surfaces(&self, split: &[WideInstance], graph: &SparseGraph) -> Result<Vec<(Surface, SurfacePoint)>> {
        let mut out = Vec::with_capacity(split.len());
        for chunk in split.chunks(EVAL_CHUNK) {
            let refs: Vec<&WideInstance> = chunk.iter().collect();
            let fwd = self.forward_batch(&refs, GraphMode::Given(graph), None)?;
            out.extend(fwd.surfaces.into_iter().zip(fwd.points));
        }
        Ok(out)
    }

    /// Predicted log demand for every instance of a split.
    pub fn predict(&self, split: &[WideInstance], graph: &SparseGraph) -> Result<Vec<Vec<f64>>> {
        Ok(self.surfaces(split, graph)?.into_iter().map(|(_, p)| p.y_hat).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Writes the checkpoint to a temporary sibling, then renames it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: DemandModel = serde_json::from_str(&text)?;
        if model.splines.len() != model.universe.n() {
            return Err(Error::Shape("checkpoint lacks a spline spec for every product".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::panel::synth::{generate_synthetic_panel, SynthConfig};
    use crate::panel::{assemble_wide, clean_panel, engineer_features, FilterConfig};

    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            k_basis: 2,
            hidden: vec![6, 4],
            dropout: 0.0,
            d_att: 3,
            k_neighbors: 4,
            embedding_dim: 2,
            ..Default::default()
        }
    }

    /// Wide instances from a small noiseless synthetic panel.
    pub fn synthetic_instances(n_products: usize, n_weeks: usize, seed: u64) -> (Universe, Vec<WideInstance>) {
        let cfg = SynthConfig {
            n_products,
            n_stores: 2,
            n_weeks,
            seed,
            ..Default::default()
        };
        let (rows, _) = generate_synthetic_panel(&cfg).unwrap();
        let filters = FilterConfig {
            min_store_weeks: 0,
            min_series_weeks: 0,
            ..Default::default()
        };
        let (_, cal, _) = clean_panel(&rows, &filters).unwrap();
        let fp = engineer_features(&cal, None).unwrap();
        let uni = Universe::from_rows(&fp.rows);
        let wide = assemble_wide(&fp, &uni).unwrap();
        (uni, wide)
    }

    pub fn tiny_model(n_products: usize, seed: u64) -> (DemandModel, Vec<WideInstance>) {
        let (uni, wide) = synthetic_instances(n_products, 30, seed);
        let model = DemandModel::new(tiny_config(), uni, &wide, seed, -2.0).unwrap();
        (model, wide)
    }
}
