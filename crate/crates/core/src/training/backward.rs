//! Hand-derived reverse pass through the surface, heads, attention and
//! encoder.

use ndarray::{s, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::loss::{instance_loss, LossBreakdown, LossConfig, SurfaceGrad};
use crate::error::{Error, Result};
use crate::model::encoder::encode_backward;
use crate::model::params::{Dense, ModelParams};
use crate::model::surface::{bilinear, dot, sigmoid};
use crate::model::{BatchForward, DemandModel, GraphMode};
use crate::panel::wide::WideInstance;

/// Whether warm-start frozen blocks receive gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    None,
    WarmStart,
}

fn accumulate_dense(d: &Dense, grad: &mut Dense, g_out: &Array2<f64>, inputs: &Array2<f64>) -> Array2<f64> {
    grad.w += &g_out.t().dot(inputs);
    grad.b += &g_out.sum_axis(Axis(0));
    g_out.dot(&d.w)
}

/// Backpropagates per-instance surface gradients into every parameter.
pub fn surface_backward(
    model: &DemandModel,
    batch: &[&WideInstance],
    fwd: &BatchForward,
    upstream: &[Option<SurfaceGrad>],
    grads: &mut ModelParams,
) {
    let p = &model.params;
    let n = model.n();
    let k = model.config.k_basis;
    let h_all = fwd.encoder.latents();
    let rows = h_all.nrows();
    let d_h = h_all.ncols();
    let d_att = p.w_query.nrows();
    let inv_sqrt = 1.0 / (d_att as f64).sqrt();

    let mut g_own = Array2::<f64>::zeros((rows, 2 + k));
    let mut pair_rows: Vec<(usize, usize)> = Vec::new();
    let mut g_pair: Vec<f64> = Vec::new();
    let width = 1 + k + k * k;
    let mut g_q = Array2::<f64>::zeros((rows, d_att));
    let mut g_k = Array2::<f64>::zeros((rows, d_att));

    for (b, inst) in batch.iter().enumerate() {
        let Some(g) = &upstream[b] else { continue };
        let surf = &fwd.surfaces[b];
        let pt = &fwd.points[b];
        let u = &inst.u;
        for i in 0..n {
            let r_i = b * n + i;
            let o = &surf.own[i];
            let bi = &pt.basis[i];
            let (gy, ge, gk) = (g.y_hat[i], g.own[i], g.curvature[i]);
            g_own[[r_i, 0]] = gy;
            g_own[[r_i, 1]] = (gy * surf.centered(u, i) + ge) * -sigmoid(o.slope_raw);
            for c in 0..k {
                g_own[[r_i, 2 + c]] = gy * bi.value[c] + ge * bi.d1[c] + gk * bi.d2[c];
            }
            let edges = &surf.edges[i];
            if edges.is_empty() {
                continue;
            }
            let mut g_weight = Vec::with_capacity(edges.len());
            for (slot, e) in edges.iter().enumerate() {
                let j = e.j;
                let bj = &pt.basis[j];
                let gc = g.cross[i][slot];
                let umat = &e.pair.interaction;
                let t = surf.pair_term(e, i, u, &pt.basis);
                let c_ij = e.pair.slope + dot(&e.pair.spline, &bj.d1) + bilinear(&bi.value, umat, &bj.d1);
                let d_ij = bilinear(&bi.d1, umat, &bj.value);
                let k_ij = bilinear(&bi.d2, umat, &bj.value);
                g_weight.push(gy * t + ge * d_ij + gc * c_ij + gk * k_ij);
                let a = e.weight;
                let mut row = vec![0.0; width];
                row[0] = a * (gy * surf.centered(u, j) + gc);
                for c in 0..k {
                    row[1 + c] = a * (gy * bj.value[c] + gc * bj.d1[c]);
                    for l in 0..k {
                        row[1 + k + c * k + l] = a
                            * (gy * bi.value[c] * bj.value[l]
                                + ge * bi.d1[c] * bj.value[l]
                                + gc * bi.value[c] * bj.d1[l]
                                + gk * bi.d2[c] * bj.value[l]);
                    }
                }
                pair_rows.push((r_i, b * n + j));
                g_pair.extend(row);
            }
            // softmax backward, then the scaled dot-product logits
            let mean: f64 = edges.iter().zip(&g_weight).map(|(e, ga)| e.weight * ga).sum();
            for (e, ga) in edges.iter().zip(&g_weight) {
                let gs = e.weight * (ga - mean) * inv_sqrt;
                let r_j = b * n + e.j;
                let (q_i, k_j) = (fwd.queries[b].row(i), fwd.keys[b].row(e.j));
                g_q.row_mut(r_i).scaled_add(gs, &k_j);
                g_k.row_mut(r_j).scaled_add(gs, &q_i);
            }
        }
    }

    let h_owned = h_all.to_owned();
    let mut g_h = Array2::<f64>::zeros((rows, d_h));
    g_h += &accumulate_dense(&p.own_base, &mut grads.own_base, &g_own.slice(s![.., 0..1]).to_owned(), &h_owned);
    g_h += &accumulate_dense(&p.own_slope, &mut grads.own_slope, &g_own.slice(s![.., 1..2]).to_owned(), &h_owned);
    g_h += &accumulate_dense(&p.own_spline, &mut grads.own_spline, &g_own.slice(s![.., 2..]).to_owned(), &h_owned);

    if !pair_rows.is_empty() {
        let e_count = pair_rows.len();
        let g_pair = Array2::from_shape_vec((e_count, width), g_pair).expect("pair gradient rows");
        let mut z = Array2::<f64>::zeros((e_count, 2 * d_h));
        for (row, &(ri, rj)) in pair_rows.iter().enumerate() {
            z.slice_mut(s![row, ..d_h]).assign(&h_all.row(ri));
            z.slice_mut(s![row, d_h..]).assign(&h_all.row(rj));
        }
        let mut g_z = accumulate_dense(&p.pair_linear, &mut grads.pair_linear, &g_pair.slice(s![.., 0..1]).to_owned(), &z);
        g_z += &accumulate_dense(
            &p.pair_spline,
            &mut grads.pair_spline,
            &g_pair.slice(s![.., 1..1 + k]).to_owned(),
            &z,
        );
        g_z += &accumulate_dense(
            &p.pair_interaction,
            &mut grads.pair_interaction,
            &g_pair.slice(s![.., 1 + k..]).to_owned(),
            &z,
        );
        for (row, &(ri, rj)) in pair_rows.iter().enumerate() {
            let mut gi = g_h.row_mut(ri);
            gi += &g_z.slice(s![row, ..d_h]);
            let mut gj = g_h.row_mut(rj);
            gj += &g_z.slice(s![row, d_h..]);
        }
    }

    grads.w_query += &g_q.t().dot(&h_owned);
    grads.w_key += &g_k.t().dot(&h_owned);
    g_h += &g_q.dot(&p.w_query);
    g_h += &g_k.dot(&p.w_key);

    encode_backward(p, &fwd.encoder, g_h, grads);
}

/// Mean loss of a batch over instances with at least one observed product,
/// and its gradient with respect to every parameter.
pub fn batch_gradients(
    model: &DemandModel,
    batch: &[&WideInstance],
    targets: &[&[f64]],
    mode: GraphMode,
    dropout: Option<&mut ChaCha8Rng>,
    loss_cfg: &LossConfig,
    freeze: Freeze,
) -> Result<(LossBreakdown, ModelParams)> {
    let fwd = model.forward_batch(batch, mode, dropout)?;
    let active = batch.iter().filter(|w| w.n_observed() > 0).count();
    let mut grads = model.params.zeros_like();
    if active == 0 {
        log::debug!("batch without observed products skipped");
        return Ok((LossBreakdown::default(), grads));
    }
    let scale = 1.0 / active as f64;
    let mut parts = Vec::with_capacity(active);
    let upstream: Vec<Option<SurfaceGrad>> = batch
        .iter()
        .enumerate()
        .map(|(b, inst)| {
            instance_loss(&fwd.surfaces[b], &fwd.points[b], targets[b], &inst.m, loss_cfg, scale).map(|(lb, g)| {
                parts.push(lb);
                g
            })
        })
        .collect();
    surface_backward(model, batch, &fwd, &upstream, &mut grads);
    if freeze == Freeze::WarmStart {
        for (info, block) in grads.blocks_mut() {
            if info.frozen_in_warm_start {
                block.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    for (info, block) in grads.blocks() {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(info.name));
        }
    }
    Ok((LossBreakdown::mean(&parts, loss_cfg), grads))
}

/// Loss only, evaluation mode, on a given graph.
pub fn batch_loss(
    model: &DemandModel,
    batch: &[&WideInstance],
    targets: &[&[f64]],
    mode: GraphMode,
    loss_cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let fwd = model.forward_batch(batch, mode, None)?;
    let parts: Vec<LossBreakdown> = batch
        .iter()
        .enumerate()
        .filter_map(|(b, inst)| instance_loss(&fwd.surfaces[b], &fwd.points[b], targets[b], &inst.m, loss_cfg, 1.0))
        .map(|(lb, _)| lb)
        .collect();
    Ok(LossBreakdown::mean(&parts, loss_cfg))
}
