//! The structured log-demand surface of one store-week and its analytic
//! price derivatives.
//!
//! For product `i` with neighbours `P_i`,
//! `y_i = b_i + beta_ii u_i + w_ii.B_i + sum_j a_ij [beta_ij u_j + w_ij.B_j + B_i' U_ij B_j]`.
//! Latents, the graph and attention weights depend on context only, so they
//! are constants when differentiating in `u`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::graph::{softmax, SparseGraph};
use super::params::{Dense, ModelParams};
use crate::error::Result;
use crate::field::ElasticityField;
use crate::spline::{BasisTriple, SplineSpec};

/// Overflow-safe `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn affine(d: &Dense, x: ArrayView1<f64>) -> Vec<f64> {
    (d.w.dot(&x) + &d.b).to_vec()
}

/// Own-price coefficients of one product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnOutput {
    pub base: f64,
    pub slope_raw: f64,
    /// `-softplus(slope_raw)`, strictly negative.
    pub slope: f64,
    pub spline: Vec<f64>,
}

impl OwnOutput {
    pub fn new(base: f64, slope_raw: f64, spline: Vec<f64>) -> OwnOutput {
        OwnOutput {
            base,
            slope_raw,
            slope: -softplus(slope_raw),
            spline,
        }
    }
}

/// Cross-price coefficients of one ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutput {
    pub slope: f64,
    pub spline: Vec<f64>,
    /// `K x K` interaction matrix, row-major.
    pub interaction: Vec<f64>,
}

pub fn own_head(p: &ModelParams, h: ArrayView1<f64>) -> OwnOutput {
    OwnOutput::new(affine(&p.own_base, h)[0], affine(&p.own_slope, h)[0], affine(&p.own_spline, h))
}

/// Pair head on the ordered concatenation `(h_i, h_j)`.
pub fn pair_head(p: &ModelParams, h_i: ArrayView1<f64>, h_j: ArrayView1<f64>) -> PairOutput {
    let z = ndarray::concatenate(ndarray::Axis(0), &[h_i, h_j]).expect("latents share a width");
    PairOutput {
        slope: affine(&p.pair_linear, z.view())[0],
        spline: affine(&p.pair_spline, z.view()),
        interaction: affine(&p.pair_interaction, z.view()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub j: usize,
    pub logit: f64,
    pub weight: f64,
    pub pair: PairOutput,
}

/// All context-dependent coefficients of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub k: usize,
    pub own: Vec<OwnOutput>,
    pub edges: Vec<Vec<Edge>>,
    pub splines: Vec<SplineSpec>,
}

/// Basis values and predictions at one log-price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub u: Vec<f64>,
    pub basis: Vec<BasisTriple>,
    pub y_hat: Vec<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x' U y` for row-major `U`.
pub fn bilinear(x: &[f64], u: &[f64], y: &[f64]) -> f64 {
    let k = y.len();
    x.iter()
        .enumerate()
        .map(|(r, xr)| xr * dot(&u[r * k..(r + 1) * k], y))
        .sum()
}

impl Surface {
    /// Evaluates heads and attention for latents `h` (n x d_h) on `graph`,
    /// taking edge logits from `scores`.
    pub fn build(
        params: &ModelParams,
        h: ArrayView2<f64>,
        scores: &Array2<f64>,
        graph: &SparseGraph,
        splines: &[SplineSpec],
        k: usize,
    ) -> Surface {
        let n = h.nrows();
        let own = (0..n).map(|i| own_head(params, h.row(i))).collect();
        let edges = (0..n)
            .map(|i| {
                let js = &graph.neighbors[i];
                let logits: Vec<f64> = js.iter().map(|&j| scores[[i, j]]).collect();
                let weights = softmax(&logits);
                js.iter()
                    .zip(logits.iter().zip(weights))
                    .map(|(&j, (&logit, weight))| Edge {
                        j,
                        logit,
                        weight,
                        pair: pair_head(params, h.row(i), h.row(j)),
                    })
                    .collect()
            })
            .collect();
        Surface {
            k,
            own,
            edges,
            splines: splines.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.own.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&Edge> {
        self.edges[i].iter().find(|e| e.j == j)
    }

    pub fn point(&self, u: &[f64]) -> SurfacePoint {
        let basis: Vec<BasisTriple> = self.splines.iter().zip(u).map(|(s, &ui)| s.eval_triple(ui)).collect();
        let y_hat = (0..self.n())
            .map(|i| {
                let o = &self.own[i];
                let mut y = o.base + o.slope * self.centered(u, i) + dot(&o.spline, &basis[i].value);
                for e in &self.edges[i] {
                    y += e.weight * self.pair_term(e, i, u, &basis);
                }
                y
            })
            .collect();
        SurfacePoint {
            u: u.to_vec(),
            basis,
            y_hat,
        }
    }

    /// Log-price of product `i` relative to its spline centre. Linear terms
    /// act on this coordinate; the shift is absorbed by the intercepts and
    /// leaves every derivative unchanged.
    pub fn centered(&self, u: &[f64], i: usize) -> f64 {
        u[i] - self.splines[i].mu
    }

    /// `beta_ij u_j + w_ij.B_j + B_i' U B_j` (before the attention weight),
    /// with `u_j` centred.
    pub fn pair_term(&self, e: &Edge, i: usize, u: &[f64], basis: &[BasisTriple]) -> f64 {
        let bj = &basis[e.j].value;
        e.pair.slope * self.centered(u, e.j) + dot(&e.pair.spline, bj) + bilinear(&basis[i].value, &e.pair.interaction, bj)
    }

    pub fn elasticity_own(&self, pt: &SurfacePoint, i: usize) -> f64 {
        let o = &self.own[i];
        let b = &pt.basis;
        o.slope
            + dot(&o.spline, &b[i].d1)
            + self.edges[i]
                .iter()
                .map(|e| e.weight * bilinear(&b[i].d1, &e.pair.interaction, &b[e.j].value))
                .sum::<f64>()
    }

    /// `None` marks a pair outside the sparse graph.
    pub fn elasticity_cross(&self, pt: &SurfacePoint, i: usize, j: usize) -> Option<f64> {
        let e = self.edge(i, j)?;
        let b = &pt.basis;
        Some(
            e.weight
                * (e.pair.slope + dot(&e.pair.spline, &b[j].d1) + bilinear(&b[i].value, &e.pair.interaction, &b[j].d1)),
        )
    }

    pub fn curvature(&self, pt: &SurfacePoint, i: usize) -> f64 {
        let o = &self.own[i];
        let b = &pt.basis;
        dot(&o.spline, &b[i].d2)
            + self.edges[i]
                .iter()
                .map(|e| e.weight * bilinear(&b[i].d2, &e.pair.interaction, &b[e.j].value))
                .sum::<f64>()
    }

    /// Dense `n x n` elasticity matrix with zeros off the graph.
    pub fn jacobian(&self, pt: &SurfacePoint) -> Array2<f64> {
        let n = self.n();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = self.elasticity_own(pt, i);
            for e in &self.edges[i] {
                m[[i, e.j]] = self.elasticity_cross(pt, i, e.j).unwrap_or(0.0);
            }
        }
        m
    }
}

impl ElasticityField for Surface {
    fn dim(&self) -> usize {
        self.n()
    }

    fn matrix(&self, u: &[f64]) -> Result<Array2<f64>> {
        Ok(self.jacobian(&self.point(u)))
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::random_surface;
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_spec(knot: f64) -> SplineSpec {
        SplineSpec {
            k: 1,
            knots: vec![knot],
            mu: 0.0,
            sigma: 1.0,
        }
    }

    fn lone(own: OwnOutput, knot: f64) -> Surface {
        Surface {
            k: 1,
            own: vec![own],
            edges: vec![vec![]],
            splines: vec![unit_spec(knot)],
        }
    }

    /// Dense reference: every product pair materialized, then masked to the
    /// graph.
    fn dense_reference(s: &Surface, u: &[f64]) -> Vec<f64> {
        let n = s.n();
        let b: Vec<Vec<f64>> = (0..n).map(|i| s.splines[i].eval(u[i], 0)).collect();
        (0..n)
            .map(|i| {
                let o = &s.own[i];
                let mut y = o.base + o.slope * (u[i] - s.splines[i].mu);
                for k in 0..s.k {
                    y += o.spline[k] * b[i][k];
                }
                for j in 0..n {
                    let Some(e) = s.edge(i, j) else { continue };
                    let mut t = e.pair.slope * (u[j] - s.splines[j].mu);
                    for k in 0..s.k {
                        t += e.pair.spline[k] * b[j][k];
                        for l in 0..s.k {
                            t += b[i][k] * e.pair.interaction[k * s.k + l] * b[j][l];
                        }
                    }
                    y += e.weight * t;
                }
                y
            })
            .collect()
    }

    #[test]
    fn softplus_values() {
        assert_abs_diff_eq!(-softplus(0.0), -(2f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(-softplus(1.8546), -2.0, epsilon = 1e-4);
        let tiny = -softplus(-50.0);
        assert!(tiny < 0.0 && tiny > -1e-21);
        assert!(softplus(800.0).is_finite());
    }

    #[test]
    fn reduces_to_log_log() {
        let s = lone(OwnOutput::new(1.5, warm(), vec![0.0]), 10.0);
        let pt = s.point(&[0.7]);
        assert_abs_diff_eq!(pt.y_hat[0], 1.5 - 2.0 * 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.elasticity_own(&pt, 0), -2.0, epsilon = 1e-12);
        assert_eq!(s.curvature(&pt, 0), 0.0);
    }

    fn warm() -> f64 {
        super::super::params::warm_start_slope_bias(-2.0)
    }

    #[test]
    fn below_knots_only_linear_part() {
        let mut rng = substream(3, "test");
        let mut s = random_surface(3, 3, &mut rng);
        for sp in &mut s.splines {
            sp.knots = vec![5.0, 6.0, 7.0];
        }
        let u = [0.1, -0.2, 0.3];
        let pt = s.point(&u);
        for i in 0..3 {
            let mut lin = s.own[i].base + s.own[i].slope * s.centered(&u, i);
            for e in &s.edges[i] {
                lin += e.weight * e.pair.slope * s.centered(&u, e.j);
            }
            assert_abs_diff_eq!(pt.y_hat[i], lin, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_spline_curvature() {
        let s = lone(OwnOutput::new(0.0, 0.0, vec![1.0]), 0.0);
        assert_abs_diff_eq!(s.curvature(&s.point(&[2.0]), 0), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn positive_own_elasticity_is_possible() {
        // beta_ii = -log 2 but a steep own spline dominates above the knot
        let s = lone(OwnOutput::new(0.0, 0.0, vec![1.0]), 0.0);
        let e = s.elasticity_own(&s.point(&[1.0]), 0);
        assert_abs_diff_eq!(e, 3.0 - 2f64.ln(), epsilon = 1e-12);
        assert!(e > 0.0);
    }

    #[test]
    fn cross_outside_graph_is_absent() {
        let mut rng = substream(4, "test");
        let mut s = random_surface(3, 2, &mut rng);
        s.edges[0].retain(|e| e.j == 1);
        let pt = s.point(&[0.0, 0.0, 0.0]);
        assert!(s.elasticity_cross(&pt, 0, 2).is_none());
        assert!(s.elasticity_cross(&pt, 0, 1).is_some());
    }

    #[test]
    fn linear_cross_with_unit_weight() {
        let mut rng = substream(5, "test");
        let mut s = random_surface(2, 2, &mut rng);
        let e = &mut s.edges[0][0];
        e.weight = 1.0;
        e.pair.spline = vec![0.0; 2];
        e.pair.interaction = vec![0.0; 4];
        let slope = e.pair.slope;
        assert_abs_diff_eq!(s.elasticity_cross(&s.point(&[0.3, 0.4]), 0, 1).unwrap(), slope, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn matches_dense_reference(seed in 0u64..1000) {
            let mut rng = substream(seed, "test");
            let s = random_surface(4, 3, &mut rng);
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pt = s.point(&u);
            for (a, b) in pt.y_hat.iter().zip(dense_reference(&s, &u)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn slope_always_negative(raw in -700.0f64..700.0) {
            prop_assert!(OwnOutput::new(0.0, raw, vec![]).slope < 0.0);
        }
    }
}
